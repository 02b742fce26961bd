//! Grading pipeline: parse, gate, probe, run every test, report.
//!
//! Every test gets its own machine(s): the reference is loaded trusted on the
//! full prelude, the submission untrusted on the restricted prelude, and a
//! harness scope binds the expected names to the student's values. Nothing
//! the reference does is ever shown; when it misbehaves the verdict is a bare
//! internal error.

mod bundle;

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use indexmap::IndexMap;

use crate::featuregate::{gate, Violation};
use crate::parallel::{self, Parallelism};
use crate::property::{
    outcomes_agree, realize, run_property, Discrepancy, GenError, GenSpec, PropertyConfig, PropertyError,
    PropertyResult, Sample, Seed, TrialOutcome,
};
use crate::runtime::{
    default_prelude, Env, Limits, Machine, Prelude, ProgramRun, ResourceKind, RunOutcome, RunResult, Scope, Stop, Value,
};
use crate::syntax::{free_names_expr, parse, parse_expr, Expr, Program, SyntaxError};
use crate::vfs::{FaultRule, Node, VfsState};

pub use bundle::{
    load_bundle, BundleError, ExerciseBundle, ExpectedBinding, ExpectedResult, IoExpect, LimitsPatch, TestKind,
    TestSpec, ThreadsExpect, CONFIG_FILE, REFERENCE_FILE,
};

/// The only thing ever said about failures on the reference side.
pub const INTERNAL_ERROR: &str = "internal test error";
pub const STUDENT_FILE: &str = "student.mml";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterexampleInfo {
    /// Shrunk arguments, pretty-printed.
    pub args: Vec<String>,
    /// `target arg1 arg2 ...`
    pub call: String,
    pub expected: String,
    pub got: String,
    pub shrink_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Passed,
    Failed {
        message: String,
        counterexample: Option<Box<CounterexampleInfo>>,
    },
    /// Something went wrong on the grading side; deliberately carries nothing.
    Error,
    Skipped(String),
}

impl Verdict {
    pub fn failed(message: impl Into<String>) -> Verdict {
        Verdict::Failed { message: message.into(), counterexample: None }
    }

    pub fn is_passed(&self) -> bool {
        matches!(self, Verdict::Passed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub name: String,
    pub verdict: Verdict,
    /// Interpreter steps spent on this test.
    pub steps: u64,
    /// Wall-clock seconds; zero when timing is disabled.
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Summary {
    pub tests: usize,
    pub passed: usize,
    pub failures: usize,
    pub errors: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub exercise: String,
    pub source_name: String,
    pub syntax_error: Option<SyntaxError>,
    pub violations: Vec<Violation>,
    pub cases: Vec<CaseResult>,
    /// Primitive calls made by student code, by name.
    pub prim_calls: BTreeMap<String, u64>,
}

impl TestReport {
    /// Counts over all report cases: one failure per gate finding (syntax
    /// error or violation), then the tests.
    pub fn summary(&self) -> Summary {
        let gate = self.violations.len() + self.syntax_error.is_some() as usize;
        let mut s = Summary { tests: self.cases.len() + gate, failures: gate, ..Summary::default() };
        for c in &self.cases {
            match c.verdict {
                Verdict::Passed => s.passed += 1,
                Verdict::Failed { .. } => s.failures += 1,
                Verdict::Error => s.errors += 1,
                Verdict::Skipped(_) => s.skipped += 1,
            }
        }
        s
    }

    /// Clean submission and every test passed.
    pub fn all_passed(&self) -> bool {
        self.syntax_error.is_none() && self.violations.is_empty() && self.cases.iter().all(|c| c.verdict.is_passed())
    }
}

#[derive(Debug, Clone)]
pub struct GradeOptions {
    /// Overrides the bundle seed.
    pub seed: Option<u64>,
    /// Per-test wall-clock limit; `None` disables the watchdog.
    pub timeout: Option<Duration>,
    pub parallelism: Parallelism,
    /// Record wall-clock durations (otherwise they are reported as zero).
    pub timing: bool,
}

impl Default for GradeOptions {
    fn default() -> Self {
        GradeOptions {
            seed: None,
            timeout: Some(Duration::from_secs(10)),
            parallelism: Parallelism::default(),
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BindingStatus {
    Student,
    Substituted(String),
}

/// Which expected bindings the submission provides.
#[derive(Debug, Clone)]
pub struct Probe {
    pub bindings: IndexMap<String, BindingStatus>,
    /// Number of leading declarations that evaluated without trapping.
    pub usable_decls: usize,
}

impl Probe {
    pub fn substituted(&self, name: &str) -> Option<&str> {
        match self.bindings.get(name) {
            Some(BindingStatus::Substituted(r)) => Some(r),
            _ => None,
        }
    }
}

/// Evaluates the submission once under the exercise limits and decides, per
/// expected binding, whether the student's value can be used.
pub fn probe_bindings(student: &Program, bundle: &ExerciseBundle, deadline: Option<Instant>) -> Probe {
    let mut m = Machine::new(VfsState::reset(bundle.initial_fs.clone()), bundle.limits);
    m.set_deadline(deadline);
    let run = m.load_program(student, bundle.restricted.clone(), false);
    probe_from_run(student, bundle, &run)
}

fn probe_from_run(student: &Program, bundle: &ExerciseBundle, run: &ProgramRun) -> Probe {
    let usable_decls = run.failure.as_ref().map_or(student.decls.len(), |f| f.index);
    let trapped: Vec<&str> = student.decls[usable_decls..].iter().filter_map(decl_name).collect();
    let bindings = bundle
        .expected_bindings
        .iter()
        .map(|b| {
            let status = match run.scope.globals.get(b.name.as_str()) {
                _ if trapped.contains(&b.name.as_str()) => {
                    BindingStatus::Substituted("declaration did not evaluate".into())
                }
                Some(v) if v.is_callable() => BindingStatus::Student,
                Some(_) => BindingStatus::Substituted("not a function".into()),
                None => BindingStatus::Substituted("missing binding".into()),
            };
            (b.name.clone(), status)
        })
        .collect();
    Probe { bindings, usable_decls }
}

fn decl_name(d: &crate::syntax::Decl) -> Option<&str> {
    use crate::syntax::DeclKind;
    match &d.kind {
        DeclKind::Let { name, .. } | DeclKind::Native { name, .. } => Some(name),
        DeclKind::Type { .. } => None,
    }
}

/// Everything shared by the tests of one grading run.
struct Ctx<'a> {
    bundle: &'a ExerciseBundle,
    full: Arc<Prelude>,
    reference: Program,
    /// The submission cut before its first trapping declaration.
    student: Program,
    probe: Probe,
    seed: Seed,
    opts: &'a GradeOptions,
    prim_calls: Mutex<BTreeMap<String, u64>>,
}

/// Machine with the reference and the usable part of the submission loaded.
struct Loaded {
    m: Machine,
    reference: Arc<Scope>,
    student: Arc<Scope>,
}

impl Ctx<'_> {
    fn load(&self, fs: Node, deadline: Option<Instant>) -> Result<Loaded, Outcome> {
        let mut m = Machine::new(VfsState::reset(fs), self.bundle.limits);
        m.set_deadline(deadline);
        let r = m.load_program(&self.reference, self.full.clone(), true);
        if let Some(f) = r.failure {
            return Err(stop_outcome(&f.stop));
        }
        let s = m.load_program(&self.student, self.bundle.restricted.clone(), false);
        if let Some(f) = s.failure {
            // Deterministic replay of the probe run; only the watchdog can differ.
            return Err(match f.stop {
                Stop::Resource { kind: ResourceKind::WallClock, .. } => Outcome::Timeout,
                _ => Outcome::Internal,
            });
        }
        Ok(Loaded { m, reference: r.scope, student: s.scope })
    }

    /// Reference globals, overlaid with the expected bindings: the student's
    /// value where usable, the dummy otherwise.
    fn harness(&self, l: &mut Loaded) -> Result<Env, Outcome> {
        let mut scope = l.reference.extend();
        for (name, ctor) in &l.student.ctors {
            scope.ctors.entry(name.clone()).or_insert(*ctor);
        }
        let ref_env = Env::new(l.reference.clone());
        for b in &self.bundle.expected_bindings {
            let v = match (self.probe.bindings.get(&b.name), l.student.globals.get(b.name.as_str())) {
                (Some(BindingStatus::Student), Some(v)) => v.clone(),
                _ => {
                    let e = parse_expr(&b.dummy).map_err(|_| Outcome::Internal)?;
                    l.m.eval(&e, &ref_env, true).map_err(|s| stop_outcome(&s))?
                }
            };
            scope.globals.insert(b.name.as_str().into(), v);
        }
        Ok(Env::new(Arc::new(scope)))
    }

    fn record(&self, m: &Machine) {
        let mut calls = self.prim_calls.lock().unwrap_or_else(|e| e.into_inner());
        for (k, v) in m.untrusted_prim_calls() {
            *calls.entry(k.to_string()).or_default() += v;
        }
    }
}

/// How a test ended when it did not get as far as a verdict of its own.
/// Reference-side failures never carry anything the student may see.
enum Outcome {
    Internal,
    Timeout,
}

fn stop_outcome(s: &Stop) -> Outcome {
    match s {
        Stop::Resource { kind: ResourceKind::WallClock, .. } => Outcome::Timeout,
        _ => Outcome::Internal,
    }
}

impl From<Outcome> for Verdict {
    fn from(o: Outcome) -> Verdict {
        match o {
            Outcome::Internal => Verdict::Error,
            Outcome::Timeout => Verdict::failed("timeout"),
        }
    }
}

/// Grades one submission. Never panics or fails: every problem becomes part
/// of the report.
pub fn grade(source: &[u8], bundle: &ExerciseBundle, opts: &GradeOptions) -> TestReport {
    let mut report = TestReport {
        exercise: bundle.name.clone(),
        source_name: STUDENT_FILE.into(),
        syntax_error: None,
        violations: Vec::new(),
        cases: Vec::new(),
        prim_calls: BTreeMap::new(),
    };
    let student = match parse(source, STUDENT_FILE) {
        Ok(p) => p,
        Err(e) => {
            report.syntax_error = Some(e);
            report.cases = bundle
                .tests
                .iter()
                .map(|t| CaseResult {
                    name: t.name.clone(),
                    verdict: match t.kind {
                        TestKind::GateOnly => Verdict::failed("submission does not parse"),
                        _ => Verdict::Skipped("submission does not parse".into()),
                    },
                    steps: 0,
                    seconds: 0.0,
                })
                .collect();
            return report;
        }
    };
    let full = default_prelude();
    report.violations = gate(&student, &bundle.policy, &bundle.restricted, &full);

    let start = Instant::now();
    let probe = probe_bindings(&student, bundle, opts.timeout.map(|t| start + t));
    let reference = parse(&bundle.reference_source, REFERENCE_FILE).ok();
    let reference_ok = reference.is_some() && reference_loads(reference.as_ref().unwrap(), bundle, &full, opts);

    let ctx = Ctx {
        bundle,
        full,
        reference: reference.unwrap_or_default(),
        student: Program {
            decls: student.decls[..probe.usable_decls].to_vec(),
            source_name: student.source_name.clone(),
        },
        probe,
        seed: Seed::new(opts.seed.unwrap_or(bundle.seed)),
        opts,
        prim_calls: Mutex::new(BTreeMap::new()),
    };
    let indexed: Vec<(usize, &TestSpec)> = bundle.tests.iter().enumerate().collect();
    report.cases = parallel::map(&indexed, opts.parallelism, |(i, t)| {
        let started = Instant::now();
        let (verdict, steps) = if !reference_ok && !matches!(t.kind, TestKind::GateOnly) {
            (Verdict::Error, 0)
        } else {
            catch_unwind(AssertUnwindSafe(|| run_test(&ctx, *i, t, &report.violations))).unwrap_or((Verdict::Error, 0))
        };
        let seconds = if opts.timing { started.elapsed().as_secs_f64() } else { 0.0 };
        CaseResult { name: t.name.clone(), verdict, steps, seconds }
    });
    report.prim_calls = ctx.prim_calls.into_inner().unwrap_or_else(|e| e.into_inner());
    report
}

/// Grades several submissions against one bundle, in input order.
pub fn grade_many(sources: &[Vec<u8>], bundle: &ExerciseBundle, opts: &GradeOptions) -> Vec<TestReport> {
    parallel::map(sources, opts.parallelism, |s| grade(s, bundle, opts))
}

fn reference_loads(reference: &Program, bundle: &ExerciseBundle, full: &Arc<Prelude>, opts: &GradeOptions) -> bool {
    let mut m = Machine::new(VfsState::reset(bundle.initial_fs.clone()), bundle.limits);
    m.set_deadline(opts.timeout.map(|t| Instant::now() + t));
    let run = m.load_program(reference, full.clone(), true);
    if run.failure.is_some() {
        return false;
    }
    let env = Env::new(run.scope);
    bundle.expected_bindings.iter().all(|b| match parse_expr(&b.dummy) {
        Ok(e) => m.eval(&e, &env, true).is_ok(),
        Err(_) => false,
    })
}

fn run_test(ctx: &Ctx, index: usize, t: &TestSpec, violations: &[Violation]) -> (Verdict, u64) {
    let deadline = ctx.opts.timeout.map(|d| Instant::now() + d);
    if let TestKind::GateOnly = t.kind {
        return match violations.len() {
            0 => (Verdict::Passed, 0),
            1 => (Verdict::failed("1 feature gate violation"), 0),
            n => (Verdict::failed(format!("{n} feature gate violations")), 0),
        };
    }
    // Tests that touch a substituted binding fail without running.
    let used: Vec<String> = match (&t.kind, t.call()) {
        (TestKind::Property { target, .. }, _) => vec![target.clone()],
        (_, Some(call)) => match parse_expr(call) {
            Ok(e) => free_names_expr(&e).into_iter().map(|(n, _)| n.to_string()).collect(),
            Err(_) => return (Verdict::Error, 0),
        },
        _ => Vec::new(),
    };
    if let Some(name) = used.iter().find(|n| ctx.probe.substituted(n).is_some()) {
        return (Verdict::failed(format!("missing or invalid binding: {name}")), 0);
    }
    match &t.kind {
        TestKind::Property { target, reference_name, arg_gens, cfg } => {
            let reference_name = reference_name.as_deref().unwrap_or(target);
            property_test(ctx, ctx.seed.split(index as u64), target, reference_name, arg_gens, cfg, deadline)
        }
        TestKind::IoScenario { call, fs_before, faults, expect } => {
            let fs = match fs_before {
                Some(t) => match t.to_node() {
                    Ok(n) => n,
                    Err(_) => return (Verdict::Error, 0),
                },
                None => ctx.bundle.initial_fs.clone(),
            };
            call_test(ctx, call, fs, faults, ctx.bundle.limits, deadline, |l, env, out| {
                check_io(ctx, l, env, out, expect)
            })
        }
        TestKind::Resource { call, limits_override, expect } => {
            let limits = limits_override.apply(ctx.bundle.limits);
            call_test(ctx, call, ctx.bundle.initial_fs.clone(), &[], limits, deadline, |l, env, out| {
                check_result(l, env, out, expect)
            })
        }
        TestKind::Threads { call, expect } => {
            call_test(ctx, call, ctx.bundle.initial_fs.clone(), &[], ctx.bundle.limits, deadline, |l, env, out| {
                check_result(l, env, out, &expect.result)?;
                check_threads(out, expect)
            })
        }
        TestKind::GateOnly => unreachable!(),
    }
}

/// Outcome of `m` for the stretch of output starting at `stdout_from`.
fn side_outcome(m: &Machine, result: Result<Value, Stop>, stdout_from: usize) -> RunOutcome {
    let mut o = m.outcome(result);
    o.stdout.drain(..stdout_from.min(o.stdout.len()));
    o
}

fn property_test(
    ctx: &Ctx,
    seed: Seed,
    target: &str,
    reference_name: &str,
    gens: &[GenSpec],
    cfg: &PropertyConfig,
    deadline: Option<Instant>,
) -> (Verdict, u64) {
    let mut mappers = HashMap::new();
    collect_mappers(gens, &mut mappers);
    let steps = AtomicU64::new(0);
    let call_limits = cfg.limits.unwrap_or(ctx.bundle.limits);

    let trial = |args: &[Sample]| -> Result<TrialOutcome, PropertyError> {
        let mut l = ctx.load(ctx.bundle.initial_fs.clone(), deadline).map_err(property_error)?;
        let ref_env = Env::new(l.reference.clone());
        let (Some(reference_fn), Some(student_fn)) =
            (l.reference.globals.get(reference_name).cloned(), l.student.globals.get(target).cloned())
        else {
            return Err(PropertyError::Internal("binding not found".into()));
        };
        let realize_args = |m: &mut Machine| -> Result<Vec<Value>, PropertyError> {
            let mut timed_out = false;
            let mut mapper = |expr: &str, v: Value| -> Result<Value, GenError> {
                let e = mappers.get(expr).ok_or_else(|| GenError::Mapper("unknown mapper".into()))?;
                let r = m.eval(e, &ref_env, true).and_then(|f| m.call(&f, &[v], true));
                r.map_err(|s| {
                    timed_out |= matches!(stop_outcome(&s), Outcome::Timeout);
                    GenError::Mapper("mapper did not return".into())
                })
            };
            let vals: Result<Vec<Value>, GenError> =
                gens.iter().zip(args).map(|(g, a)| realize(g, a, &mut mapper)).collect();
            vals.map_err(|e| if timed_out { PropertyError::Timeout } else { e.into() })
        };

        let m = &mut l.m;
        let before = m.stdout().len();
        let ref_args = realize_args(m)?;
        m.limits = call_limits;
        let r = m.call(&reference_fn, &ref_args, true);
        m.limits = ctx.bundle.limits;
        let reference = side_outcome(m, r, before);

        let stu_args = realize_args(m)?;
        let rendered_args = stu_args.iter().map(Value::to_string).collect();
        let before = m.stdout().len();
        m.limits = call_limits;
        let s = m.call(&student_fn, &stu_args, true);
        m.limits = ctx.bundle.limits;
        let student = side_outcome(m, s, before);

        steps.fetch_add(m.steps_used(), AtomicOrdering::Relaxed);
        ctx.record(m);
        let machine: &Machine = m;
        if outcomes_agree(&student, &reference, |a, b| machine.compare(a, b))? {
            Ok(TrialOutcome::Agree)
        } else {
            Ok(TrialOutcome::Disagree(Box::new(Discrepancy { rendered_args, student, reference })))
        }
    };

    let verdict = match run_property(gens, cfg, seed, ctx.opts.parallelism, trial) {
        Ok(PropertyResult::Pass { .. }) => Verdict::Passed,
        Ok(PropertyResult::Fail(cx)) => {
            if is_timeout(&cx.student.result) {
                Verdict::failed("timeout")
            } else {
                let call = std::iter::once(target.to_string())
                    .chain(cx.rendered_args.iter().map(|a| paren(a)))
                    .collect::<Vec<_>>()
                    .join(" ");
                let info = CounterexampleInfo {
                    args: cx.rendered_args.clone(),
                    call,
                    expected: describe(&cx.reference),
                    got: describe(&cx.student),
                    shrink_steps: cx.shrink_steps,
                };
                Verdict::Failed { message: "property does not hold".into(), counterexample: Some(Box::new(info)) }
            }
        }
        Err(PropertyError::Timeout) => Verdict::failed("timeout"),
        Err(_) => Verdict::Error,
    };
    (verdict, steps.into_inner())
}

fn property_error(o: Outcome) -> PropertyError {
    match o {
        Outcome::Timeout => PropertyError::Timeout,
        Outcome::Internal => PropertyError::Internal("load failed".into()),
    }
}

fn collect_mappers(gens: &[GenSpec], out: &mut HashMap<String, Arc<Expr>>) {
    for g in gens {
        match g {
            GenSpec::Map { base, expr } => {
                if let Ok(e) = parse_expr(expr) {
                    out.insert(expr.clone(), e);
                }
                collect_mappers(std::slice::from_ref(base), out);
            }
            GenSpec::List { elem, .. } => collect_mappers(std::slice::from_ref(elem), out),
            GenSpec::Tuple { elems } => collect_mappers(elems, out),
            _ => {}
        }
    }
}

/// Wraps a rendered argument in parentheses unless it is atomic.
fn paren(s: &str) -> String {
    let atomic =
        !s.contains(' ') || s.starts_with('[') || s.starts_with('"') || (s.starts_with('(') && s.ends_with(')'));
    if atomic {
        s.to_string()
    } else {
        format!("({s})")
    }
}

fn is_timeout(r: &RunResult) -> bool {
    matches!(r, RunResult::ResourceTrap { kind: ResourceKind::WallClock, .. })
}

fn describe(o: &RunOutcome) -> String {
    let mut s = match &o.result {
        RunResult::ResourceTrap { kind, .. } => kind.to_string(),
        r => r.to_string(),
    };
    if !o.stdout.is_empty() {
        s.push_str(&format!(" (output {:?})", String::from_utf8_lossy(&o.stdout)));
    }
    s
}

type Check<'a> = dyn FnOnce(&mut Loaded, &Env, &RunOutcome) -> Result<(), Verdict> + 'a;

fn call_test<'a>(
    ctx: &Ctx,
    call: &str,
    fs: Node,
    faults: &[FaultRule],
    limits: Limits,
    deadline: Option<Instant>,
    check: impl FnOnce(&mut Loaded, &Env, &RunOutcome) -> Result<(), Verdict> + 'a,
) -> (Verdict, u64) {
    let check: Box<Check<'a>> = Box::new(check);
    let Ok(expr) = parse_expr(call) else { return (Verdict::Error, 0) };
    let mut l = match ctx.load(fs, deadline) {
        Ok(l) => l,
        Err(o) => return (o.into(), 0),
    };
    let env = match ctx.harness(&mut l) {
        Ok(env) => env,
        Err(o) => return (o.into(), 0),
    };
    for f in faults {
        l.m.vfs.add_fault(FaultRule::new(&f.path, f.op, f.countdown, &f.message));
    }
    let before_steps = l.m.steps_used();
    let before = l.m.stdout().len();
    l.m.limits = limits;
    let r = l.m.eval(&expr, &env, true);
    l.m.limits = ctx.bundle.limits;
    let out = side_outcome(&l.m, r, before);
    let steps = l.m.steps_used() - before_steps;
    ctx.record(&l.m);
    if is_timeout(&out.result) {
        return (Verdict::failed("timeout"), steps);
    }
    match check(&mut l, &env, &out) {
        Ok(()) => (Verdict::Passed, steps),
        Err(v) => (v, steps),
    }
}

fn check_result(l: &mut Loaded, env: &Env, out: &RunOutcome, expect: &ExpectedResult) -> Result<(), Verdict> {
    let got = || describe(out);
    match (expect, &out.result) {
        (ExpectedResult::Any, _) => Ok(()),
        (ExpectedResult::Done, RunResult::Done(_)) => Ok(()),
        (ExpectedResult::Done, _) => Err(Verdict::failed(format!("expected a result, got {}", got()))),
        (ExpectedResult::Value(src), result) => {
            let e = parse_expr(src).map_err(|_| Verdict::Error)?;
            let want = l.m.eval(&e, env, true).map_err(|s| Verdict::from(stop_outcome(&s)))?;
            match result {
                RunResult::Done(v) if l.m.compare(v, &want) == Ok(std::cmp::Ordering::Equal) => Ok(()),
                _ => Err(Verdict::failed(format!("expected {want}, got {}", got()))),
            }
        }
        (ExpectedResult::Exception(ctor), RunResult::LangTrap { exception, .. })
            if exception.ctor_name() == Some(ctor.as_str()) =>
        {
            Ok(())
        }
        (ExpectedResult::Exception(ctor), _) => {
            Err(Verdict::failed(format!("expected exception {ctor}, got {}", got())))
        }
        (ExpectedResult::Resource(kind), RunResult::ResourceTrap { kind: k, .. }) if k == kind => Ok(()),
        (ExpectedResult::Resource(kind), _) => Err(Verdict::failed(format!("expected \"{kind}\", got {}", got()))),
    }
}

fn check_io(ctx: &Ctx, l: &mut Loaded, env: &Env, out: &RunOutcome, expect: &IoExpect) -> Result<(), Verdict> {
    check_result(l, env, out, &expect.result)?;
    let report = &out.vfs_report;
    if expect.no_open_handles {
        if let Some((id, path)) = report.open_handles.first() {
            return Err(Verdict::failed(format!("file handle left open: {path} (handle {id})")));
        }
    }
    if let Some(tree) = &expect.files_exact {
        let want = tree.to_node().map_err(|_| Verdict::Error)?;
        let problems = tree_diff(&want, &l.m.vfs.root);
        if !problems.is_empty() {
            return Err(Verdict::failed(format!("files differ from the expected result: {}", problems.join("; "))));
        }
    }
    let prefixes = &ctx.bundle.allowed_write_prefixes;
    if !prefixes.is_empty() {
        let outside = report
            .created
            .iter()
            .chain(&report.modified)
            .find(|p| !prefixes.iter().any(|pre| p.starts_with(pre.as_str())));
        if let Some(p) = outside {
            return Err(Verdict::failed(format!("wrote outside the allowed directories: {p}")));
        }
    }
    if let Some(want) = &expect.stdout {
        if out.stdout != want.as_bytes() {
            return Err(Verdict::failed(format!(
                "expected output {:?}, got {:?}",
                want,
                String::from_utf8_lossy(&out.stdout)
            )));
        }
    }
    Ok(())
}

fn tree_diff(want: &Node, got: &Node) -> Vec<String> {
    let (w, g) = (want.files(), got.files());
    let mut out = Vec::new();
    for (path, content) in &g {
        match w.get(path) {
            None => out.push(format!("unexpected file {path}")),
            Some(c) if c != content => out.push(format!("wrong content in {path}")),
            _ => {}
        }
    }
    for path in w.keys().filter(|p| !g.contains_key(*p)) {
        out.push(format!("missing file {path}"));
    }
    if out.is_empty() && want != got {
        out.push("directory structure differs".into());
    }
    out
}

fn check_threads(out: &RunOutcome, expect: &ThreadsExpect) -> Result<(), Verdict> {
    let reg = &out.registry;
    if let Some(max) = expect.max_live {
        let live = reg.max_live();
        if live > max {
            return Err(Verdict::failed(format!("{live} threads were live at once, at most {max} allowed")));
        }
    }
    if let Some(min) = expect.min_spawned {
        let n = reg.spawned().len();
        if n < min {
            return Err(Verdict::failed(format!("{n} threads created, expected at least {min}")));
        }
    }
    if expect.all_completed && !reg.all_completed() {
        let done = reg.completed();
        let pending: Vec<String> =
            reg.spawned().into_iter().filter(|t| !done.contains(t)).map(|t| t.to_string()).collect();
        return Err(Verdict::failed(format!("threads never completed: {}", pending.join(", "))));
    }
    Ok(())
}
