//! `mlgrade` commands. Everything writes to caller-supplied streams so the
//! commands can be driven in-process by tests.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use mlgrade_core::featuregate::{gate, restrict_prelude, FeaturePolicy};
use mlgrade_core::grader::{grade, load_bundle, GradeOptions, STUDENT_FILE};
use mlgrade_core::report::{to_junit, to_text};
use mlgrade_core::runtime::{default_prelude, evaluate, Limits, RunResult};
use mlgrade_core::syntax::parse;
use mlgrade_core::vfs::{TreeJson, VfsState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    /// All passed / clean.
    Ok = 0,
    /// Some test failed or violations were found.
    Failed = 1,
    /// Bad bundle or host IO problem.
    Internal = 2,
    Usage = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Parser, Debug)]
#[command(name = "mlgrade", version, about = "Sandboxed autograder for MiniML exercises")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and gate a submission without running it.
    Check {
        student: PathBuf,
        #[arg(long)]
        exercise: PathBuf,
    },
    /// Grade a submission and write a JUnit report.
    Grade {
        student: PathBuf,
        #[arg(long)]
        exercise: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the exercise seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Report all times as 0.000 for byte-reproducible output.
        #[arg(long)]
        fixed_time: bool,
        /// Print the primitive calls made by the submission to stderr.
        #[arg(long)]
        audit: bool,
        /// Per-test wall-clock limit; 0 disables it.
        #[arg(long, default_value_t = 10)]
        timeout_secs: u64,
    },
    /// Run a program against the mock filesystem.
    Run {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = PolicyChoice::Default)]
        policy: PolicyChoice,
        /// Initial filesystem tree as JSON.
        #[arg(long)]
        fs: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyChoice {
    Default,
    None,
}

/// Parses `args` (program name first) and runs the command.
pub fn run(args: impl IntoIterator<Item = OsString>, out: &mut dyn Write, err: &mut dyn Write) -> ExitStatus {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind::*;
            return match e.kind() {
                DisplayHelp | DisplayVersion => {
                    let _ = write!(out, "{e}");
                    ExitStatus::Ok
                }
                _ => {
                    let _ = write!(err, "{e}");
                    ExitStatus::Usage
                }
            };
        }
    };
    match cli.command {
        Command::Check { student, exercise } => cmd_check(&student, &exercise, out, err),
        Command::Grade { student, exercise, out: report, seed, fixed_time, audit, timeout_secs } => {
            let opts = GradeArgs { seed, fixed_time, audit, timeout_secs };
            cmd_grade(&student, &exercise, &report, &opts, out, err)
        }
        Command::Run { file, policy, fs } => cmd_run(&file, policy, fs.as_deref(), out, err),
    }
}

fn read_host(path: &Path, err: &mut dyn Write) -> Option<Vec<u8>> {
    match std::fs::read(path) {
        Ok(b) => Some(b),
        Err(e) => {
            let _ = writeln!(err, "mlgrade: {}: {e}", path.display());
            None
        }
    }
}

/// Parse and gate only; violations go to `out`, one per line.
pub fn cmd_check(student: &Path, exercise: &Path, out: &mut dyn Write, err: &mut dyn Write) -> ExitStatus {
    let bundle = match load_bundle(exercise) {
        Ok(b) => b,
        Err(e) => {
            let _ = writeln!(err, "mlgrade: {e}");
            return ExitStatus::Internal;
        }
    };
    let Some(source) = read_host(student, err) else { return ExitStatus::Internal };
    let program = match parse(&source, STUDENT_FILE) {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(out, "{STUDENT_FILE}:{e}");
            return ExitStatus::Failed;
        }
    };
    let violations = gate(&program, &bundle.policy, &bundle.restricted, &default_prelude());
    for v in &violations {
        let _ = writeln!(out, "{} at {STUDENT_FILE}:{}:{}", v.headline(), v.span.start_line, v.span.start_col);
    }
    if violations.is_empty() {
        ExitStatus::Ok
    } else {
        ExitStatus::Failed
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradeArgs {
    pub seed: Option<u64>,
    pub fixed_time: bool,
    pub audit: bool,
    /// 0 disables the watchdog.
    pub timeout_secs: u64,
}

/// Grades `student`, writes JUnit XML to `report` and feedback to `out`.
pub fn cmd_grade(
    student: &Path,
    exercise: &Path,
    report: &Path,
    args: &GradeArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> ExitStatus {
    let bundle = match load_bundle(exercise) {
        Ok(b) => b,
        Err(e) => {
            let _ = writeln!(err, "mlgrade: {e}");
            return ExitStatus::Internal;
        }
    };
    let Some(source) = read_host(student, err) else { return ExitStatus::Internal };
    let opts = GradeOptions {
        seed: args.seed,
        timeout: (args.timeout_secs > 0).then(|| Duration::from_secs(args.timeout_secs)),
        timing: !args.fixed_time,
        ..GradeOptions::default()
    };
    let r = grade(&source, &bundle, &opts);
    if let Err(e) = std::fs::write(report, to_junit(&r, args.fixed_time)) {
        let _ = writeln!(err, "mlgrade: {}: {e}", report.display());
        return ExitStatus::Internal;
    }
    let _ = out.write_all(&to_text(&r));
    if args.audit {
        for (name, n) in &r.prim_calls {
            let _ = writeln!(err, "audit: {name} {n}");
        }
    }
    if r.all_passed() {
        ExitStatus::Ok
    } else {
        ExitStatus::Failed
    }
}

/// Evaluates a program; prints its output, then what it did to the files.
pub fn cmd_run(
    file: &Path,
    policy: PolicyChoice,
    fs: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> ExitStatus {
    let Some(source) = read_host(file, err) else { return ExitStatus::Internal };
    let root = match fs {
        None => mlgrade_core::vfs::Node::empty_dir(),
        Some(path) => {
            let Some(json) = read_host(path, err) else { return ExitStatus::Internal };
            let tree = serde_json::from_slice::<TreeJson>(&json).map_err(|e| e.to_string());
            match tree.and_then(|t| t.to_node().map_err(|e| e.to_string())) {
                Ok(n) => n,
                Err(e) => {
                    let _ = writeln!(err, "mlgrade: {}: {e}", path.display());
                    return ExitStatus::Internal;
                }
            }
        }
    };
    let name = file.file_name().map_or_else(|| "program.mml".into(), |n| n.to_string_lossy().into_owned());
    let program = match parse(&source, &name) {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "{name}:{e}");
            return ExitStatus::Failed;
        }
    };
    let full = default_prelude();
    let prelude = match policy {
        PolicyChoice::None => full.clone(),
        PolicyChoice::Default => {
            let policy = FeaturePolicy::default();
            let restricted = restrict_prelude(&full, &policy).expect("the default policy names nothing");
            let violations = gate(&program, &policy, &restricted, &full);
            if !violations.is_empty() {
                for v in &violations {
                    let _ = writeln!(err, "{} at {name}:{}:{}", v.headline(), v.span.start_line, v.span.start_col);
                }
                return ExitStatus::Failed;
            }
            // A derived prelude is never `full`, so the program runs untrusted.
            restricted
        }
    };
    let outcome = evaluate(&program, prelude, VfsState::reset(root), Limits::default(), None);
    let _ = out.write_all(&outcome.stdout);
    let fsr = &outcome.vfs_report;
    if !fsr.is_clean() {
        if !outcome.stdout.is_empty() && !outcome.stdout.ends_with(b"\n") {
            let _ = writeln!(out);
        }
        let _ = writeln!(out, "--- filesystem ---");
        for (label, paths) in [("created", &fsr.created), ("modified", &fsr.modified), ("deleted", &fsr.deleted)] {
            for p in paths {
                let _ = writeln!(out, "{label} {p}");
            }
        }
        for (id, p) in &fsr.open_handles {
            let _ = writeln!(out, "open handle {id} {p}");
        }
    }
    match outcome.result {
        RunResult::Done(_) => ExitStatus::Ok,
        other => {
            let _ = writeln!(err, "{other}");
            ExitStatus::Failed
        }
    }
}
