//! End-to-end acceptance gate: ten criteria, one PASS/FAIL line each.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use mlgrade_cli::{cmd_check, cmd_grade, ExitStatus, GradeArgs};
use mlgrade_core::featuregate::{gate, restrict_prelude, FeaturePolicy, ViolationKind};
use mlgrade_core::grader::{grade, load_bundle, GradeOptions, TestReport, Verdict};
use mlgrade_core::runtime::{default_prelude, evaluate, Limits, ResourceKind, RunResult};
use mlgrade_core::syntax::{parse, parse_expr};
use mlgrade_core::vfs::{replay, Mode, Node, VfsState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::Value as Json;

type Criterion = fn() -> Result<String, String>;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn exercise(name: &str) -> PathBuf {
    fixtures().join("exercises").join(name)
}

fn submission(ex: &str, name: &str) -> PathBuf {
    exercise(ex).join("submissions").join(format!("{name}.mml"))
}

struct Graded {
    status: ExitStatus,
    stdout: String,
    xml: String,
}

fn run_grade(ex: &str, student: &Path, seed: Option<u64>) -> Graded {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.xml");
    let (mut so, mut se) = (Vec::new(), Vec::new());
    let args = GradeArgs { seed, fixed_time: true, audit: false, timeout_secs: 10 };
    let status = cmd_grade(student, &exercise(ex), &out, &args, &mut so, &mut se);
    Graded {
        status,
        stdout: String::from_utf8_lossy(&so).into_owned(),
        xml: std::fs::read_to_string(&out).unwrap_or_default(),
    }
}

fn grade_fixture(ex: &str, sub: &str) -> TestReport {
    let bundle = load_bundle(&exercise(ex)).unwrap();
    let src = std::fs::read(submission(ex, sub)).unwrap();
    grade(&src, &bundle, &GradeOptions::default())
}

fn verdict<'a>(r: &'a TestReport, case: &str) -> &'a Verdict {
    &r.cases.iter().find(|c| c.name == case).unwrap_or_else(|| panic!("no case {case}")).verdict
}

fn failed_with(v: &Verdict, needle: &str) -> bool {
    matches!(v, Verdict::Failed { message, .. } if message.contains(needle))
}

fn ensure(cond: bool, what: &str) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.to_string())
    }
}

// 1 -------------------------------------------------------------------------

fn gate_corpus() -> Result<String, String> {
    let start = Instant::now();
    let dir = fixtures().join("gate");
    let manifest: Vec<Json> =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    let full = default_prelude();
    for entry in &manifest {
        let name = entry["program"].as_str().unwrap();
        let policy: FeaturePolicy = serde_json::from_value(entry["policy"].clone()).unwrap();
        let restricted = restrict_prelude(&full, &policy).map_err(|e| format!("{name}: {e}"))?;
        let check = |file: &str| {
            let src = std::fs::read(dir.join(file)).unwrap();
            let p = parse(&src, file).map_err(|e| format!("{file}: {e}"))?;
            Ok::<_, String>(gate(&p, &policy, &restricted, &full))
        };
        let v = check(&format!("{name}.mml"))?;
        ensure(v.len() == 1, &format!("{name}: expected one violation, got {}", v.len()))?;
        let kind = match &v[0].kind {
            ViolationKind::SyntaxViolation(_) => "SyntaxViolation",
            ViolationKind::RestrictedName(_) => "RestrictedName",
            ViolationKind::UnknownName(_) => "UnknownName",
        };
        let got = (kind, v[0].subject(), v[0].span.start_line as u64, v[0].span.start_col as u64);
        let want = (
            entry["kind"].as_str().unwrap(),
            entry["subject"].as_str().unwrap().to_string(),
            entry["line"].as_u64().unwrap(),
            entry["col"].as_u64().unwrap(),
        );
        ensure(got == want, &format!("{name}: got {got:?}, want {want:?}"))?;
        let twin = check(&format!("{name}.twin.mml"))?;
        ensure(twin.is_empty(), &format!("{name}: twin has {} violations", twin.len()))?;
    }
    let elapsed = start.elapsed();
    ensure(manifest.len() >= 12, "fewer than 12 corpus programs")?;
    ensure(elapsed < Duration::from_secs(1), &format!("took {elapsed:?}"))?;
    Ok(format!("{} programs and twins in {:.3}s", manifest.len(), elapsed.as_secs_f64()))
}

// 2 -------------------------------------------------------------------------

fn peano(n: usize) -> String {
    match n {
        0 => "Zero".into(),
        1 => "Succ Zero".into(),
        n => format!("Succ ({})", peano(n - 1)),
    }
}

/// Smallest failing input of `add a b = a` over all pairs of depth <= 3,
/// ordered by total size, then by the second argument.
fn brute_force_buggy_add() -> (String, String) {
    let mut failing: Vec<(usize, usize)> =
        (0..=3).flat_map(|a| (0..=3).map(move |b| (a, b))).filter(|&(a, b)| a != a + b).collect();
    failing.sort_by_key(|&(a, b)| (a + b, b));
    let (a, b) = failing[0];
    (peano(a), peano(b))
}

fn peano_end_to_end() -> Result<String, String> {
    let bundle = load_bundle(&exercise("peano")).map_err(|e| e.to_string())?;
    let trials = bundle.tests.iter().find_map(|t| match &t.kind {
        mlgrade_core::grader::TestKind::Property { target, cfg, .. } if target == "add" => Some(cfg.trials),
        _ => None,
    });
    ensure(trials == Some(100), "add property is not configured for 100 trials")?;

    let g = run_grade("peano", &submission("peano", "correct"), None);
    ensure(g.status == ExitStatus::Ok, &format!("correct solution exited {:?}", g.status))?;
    ensure(g.stdout.contains("3/3 passed"), "correct solution not all-pass")?;

    let cheat = grade_fixture("peano", "cheat");
    ensure(
        cheat.violations.iter().any(|v| v.kind == ViolationKind::RestrictedName("+".into())),
        "cheat: no RestrictedName(+)",
    )?;
    for case in ["add", "mul"] {
        ensure(matches!(verdict(&cheat, case), Verdict::Failed { .. }), &format!("cheat: {case} not failed"))?;
    }

    let buggy = grade_fixture("peano", "buggy");
    let (_, oracle_b) = brute_force_buggy_add();
    match verdict(&buggy, "add") {
        Verdict::Failed { counterexample: Some(cx), .. } => {
            ensure(cx.args.len() == 2 && cx.args[1] == oracle_b, &format!("buggy: shrunk args {:?}", cx.args))?;
        }
        other => return Err(format!("buggy: add verdict {other:?}")),
    }
    Ok(format!("correct 100/100, cheat gated, buggy shrinks to second argument {oracle_b}"))
}

// 3 -------------------------------------------------------------------------

fn mock_io() -> Result<String, String> {
    let mut slowest = Duration::ZERO;
    let mut timed = |sub: &str| {
        let t = Instant::now();
        let r = grade_fixture("file_copy", sub);
        slowest = slowest.max(t.elapsed());
        r
    };
    let leak = timed("leak");
    ensure(failed_with(verdict(&leak, "copies_every_line"), "file handle left open: /in.txt"), "(a) leak not cited")?;
    let good = timed("good");
    ensure(good.cases.iter().all(|c| c.verdict.is_passed()), "(b) robust solution failed")?;
    let fragile = timed("fragile");
    ensure(!verdict(&fragile, "survives_read_fault").is_passed(), "(b) fragile solution passed the fault test")?;
    ensure(verdict(&fragile, "copies_every_line").is_passed(), "(b) fragile solution failed the plain copy")?;
    ensure(!verdict(&leak, "survives_read_fault").is_passed(), "(b) leaking solution passed the fault test")?;
    let stray = timed("stray");
    ensure(
        failed_with(verdict(&stray, "copies_every_line"), "unexpected file /tmp.txt"),
        "(c) stray file not reported",
    )?;
    ensure(slowest < Duration::from_secs(1), &format!("slowest scenario took {slowest:?}"))?;
    Ok(format!("leak, fault and stray-file scenarios as expected; slowest {:.3}s", slowest.as_secs_f64()))
}

// 4 -------------------------------------------------------------------------

fn tail_recursion() -> Result<String, String> {
    let start = Instant::now();
    let tail = grade_fixture("tail_sum", "tail");
    ensure(verdict(&tail, "hundred_thousand_elements").is_passed(), "tail-recursive solution failed")?;
    let naive = grade_fixture("tail_sum", "naive");
    ensure(
        failed_with(verdict(&naive, "hundred_thousand_elements"), "call depth limit exceeded"),
        "naive solution did not fail on depth",
    )?;
    // The same call directly: the naive sum must stop on the depth limit.
    let src = std::fs::read_to_string(submission("tail_sum", "naive")).unwrap();
    let src =
        format!("{src}\nlet range n = let rec go i acc = if i = 0 then acc else go (i - 1) (i :: acc) in go n []");
    let p = parse(src.as_bytes(), "naive.mml").unwrap();
    let limits = Limits { max_call_depth: 10_000, ..Limits::default() };
    let entry = parse_expr("sum (range 100000)").unwrap();
    let o = evaluate(&p, default_prelude(), VfsState::default(), limits, Some(&entry));
    ensure(
        matches!(o.result, RunResult::ResourceTrap { kind: ResourceKind::Depth, .. }),
        "naive run not a Depth trap",
    )?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), &format!("took {elapsed:?}"))?;
    Ok(format!("tail passes, naive traps on depth; {:.2}s", elapsed.as_secs_f64()))
}

// 5 -------------------------------------------------------------------------

fn threads() -> Result<String, String> {
    let four = grade_fixture("worker_pool", "four_workers");
    ensure(four.cases.iter().all(|c| c.verdict.is_passed()), "4-worker solution failed")?;
    let six = grade_fixture("worker_pool", "six_workers");
    ensure(
        failed_with(verdict(&six, "pool_of_workers"), "live thread limit exceeded"),
        "6-worker solution not trapped",
    )?;
    let no_join = grade_fixture("worker_pool", "no_join");
    ensure(
        no_join.cases.iter().any(|c| failed_with(&c.verdict, "threads never completed")),
        "never-joining solution passed all_completed",
    )?;
    Ok("4 workers pass, 6 workers trap, missing joins detected".into())
}

// 6 -------------------------------------------------------------------------

fn all_fixture_submissions() -> Vec<(String, PathBuf)> {
    let mut out = Vec::new();
    let mut exercises: Vec<_> =
        std::fs::read_dir(fixtures().join("exercises")).unwrap().map(|e| e.unwrap().path()).collect();
    exercises.sort();
    for ex in exercises {
        let name = ex.file_name().unwrap().to_string_lossy().into_owned();
        let mut subs: Vec<_> = std::fs::read_dir(ex.join("submissions")).unwrap().map(|e| e.unwrap().path()).collect();
        subs.sort();
        out.extend(subs.into_iter().map(|s| (name.clone(), s)));
    }
    out
}

fn determinism() -> Result<String, String> {
    let all = all_fixture_submissions();
    for (ex, sub) in &all {
        let a = run_grade(ex, sub, Some(7));
        let b = run_grade(ex, sub, Some(7));
        ensure(!a.xml.is_empty(), &format!("{}: no report", sub.display()))?;
        ensure(a.xml == b.xml && a.stdout == b.stdout, &format!("{}: reports differ", sub.display()))?;
    }
    Ok(format!("{} fixture submissions byte-identical across runs", all.len()))
}

// 7 -------------------------------------------------------------------------

fn longest_common_substring(a: &[u8], b: &[u8]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut best = 0;
    for &x in a {
        let mut cur = vec![0usize; b.len() + 1];
        for (j, &y) in b.iter().enumerate() {
            if x == y {
                cur[j + 1] = prev[j] + 1;
                best = best.max(cur[j + 1]);
            }
        }
        prev = cur;
    }
    best
}

fn suppression() -> Result<String, String> {
    let mut checked = 0;
    for ex in ["broken_reference", "broken_reference_syntax"] {
        let g = run_grade(ex, &submission(ex, "student"), None);
        ensure(g.xml.contains("internal test error"), &format!("{ex}: no internal error reported"))?;
        let solution = std::fs::read_to_string(exercise(ex).join("solution.mml")).unwrap();
        for line in solution.lines().map(str::trim).filter(|l| !l.is_empty()) {
            for (what, text) in [("report", &g.xml), ("stdout", &g.stdout)] {
                let lcs = longest_common_substring(line.as_bytes(), text.as_bytes());
                ensure(lcs < line.len(), &format!("{ex}: {what} leaks a full reference line"))?;
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} reference lines, none leaked"))
}

// 8 -------------------------------------------------------------------------

fn dummy_fallback() -> Result<String, String> {
    let g = run_grade("peano", &submission("peano", "missing_add"), None);
    ensure(g.status == ExitStatus::Failed, &format!("exit {:?}", g.status))?;
    let r = grade_fixture("peano", "missing_add");
    ensure(verdict(&r, "mul").is_passed(), "mul tests did not pass")?;
    ensure(failed_with(verdict(&r, "add"), "missing or invalid binding: add"), "add not reported missing")?;
    Ok("mul passes, add reports missing binding, exit 1".into())
}

// 9 -------------------------------------------------------------------------

fn fuzz_input(i: u64) -> Vec<u8> {
    const TOKENS: &[&str] = &[
        "let ",
        "rec ",
        "add ",
        "mul ",
        "a ",
        "b ",
        "= ",
        "match ",
        "with ",
        "| ",
        "Zero ",
        "Succ ",
        "-> ",
        "(",
        ")",
        "fun ",
        "x ",
        "in ",
        "if ",
        "then ",
        "else ",
        "1 ",
        "+ ",
        "[|",
        "|]",
        "\"",
        "]]>",
        "<",
        "&",
        "\u{1}",
        "\n",
        "type nat = Zero | Succ of nat\n",
        "while ",
        "do ",
        "done ",
        ";",
        "::",
        "[",
        "]",
        "try ",
        "raise ",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(i);
    let len = rng.gen_range(0..200);
    match i % 3 {
        0 => (0..len).map(|_| rng.gen::<u8>()).collect(),
        1 => (0..len / 4).flat_map(|_| TOKENS[rng.gen_range(0..TOKENS.len())].bytes().collect::<Vec<_>>()).collect(),
        _ => {
            let base = std::fs::read(submission("peano", "correct")).unwrap();
            let mut v = base.clone();
            for _ in 0..rng.gen_range(1..4) {
                let at = rng.gen_range(0..v.len());
                match rng.gen_range(0..3) {
                    0 => {
                        v.remove(at);
                    }
                    1 => v.insert(at, rng.gen()),
                    _ => v[at] = TOKENS[rng.gen_range(0..TOKENS.len())].as_bytes()[0],
                }
            }
            v
        }
    }
}

fn totality_fuzz() -> Result<String, String> {
    const N: u64 = 10_000;
    let start = Instant::now();
    let bundle = exercise("peano");
    let dir = tempfile::tempdir().unwrap();
    let failures: Vec<String> = (0..N)
        .into_par_iter()
        .filter_map(|i| {
            let student = dir.path().join(format!("s{i}.mml"));
            let out = dir.path().join(format!("r{i}.xml"));
            std::fs::write(&student, fuzz_input(i)).unwrap();
            let (mut so, mut se) = (Vec::new(), Vec::new());
            let args = GradeArgs { seed: None, fixed_time: true, audit: false, timeout_secs: 10 };
            let status = cmd_grade(&student, &bundle, &out, &args, &mut so, &mut se);
            if !matches!(status, ExitStatus::Ok | ExitStatus::Failed) {
                return Some(format!("input {i}: exit {status:?}"));
            }
            let xml = std::fs::read_to_string(&out).ok()?;
            let _ = std::fs::remove_file(&student);
            let _ = std::fs::remove_file(&out);
            match roxmltree::Document::parse(&xml) {
                Ok(_) => None,
                Err(e) => Some(format!("input {i}: malformed XML: {e}")),
            }
        })
        .collect();
    let elapsed = start.elapsed();
    ensure(
        failures.is_empty(),
        &format!("{} bad runs, first: {}", failures.len(), failures.first().map_or("", |s| s)),
    )?;
    ensure(elapsed < Duration::from_secs(600), &format!("took {elapsed:?}"))?;
    Ok(format!("{N} inputs, all well-formed, {:.1}s", elapsed.as_secs_f64()))
}

// 10 ------------------------------------------------------------------------

fn random_session(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial = Node::with_files([("a.txt", "one\ntwo\n"), ("d/b.txt", "x\n"), ("c.txt", "")]);
    let mut vfs = VfsState::reset(initial.clone());
    let paths = ["/a.txt", "/c.txt", "/d/b.txt", "/d/new.txt", "/new.txt", "/missing/x.txt"];
    let mut open: Vec<u64> = Vec::new();
    for step in 0..rng.gen_range(1..=200u64) {
        vfs.set_clock(step);
        match rng.gen_range(0..5) {
            0 | 1 => {
                let mode = if rng.gen() { Mode::Read } else { Mode::Write };
                if let Ok(id) = vfs.open(paths[rng.gen_range(0..paths.len())], mode) {
                    open.push(id);
                }
            }
            2 if !open.is_empty() => {
                let _ = vfs.read_line(open[rng.gen_range(0..open.len())]);
            }
            3 if !open.is_empty() => {
                let data = format!("w{step}\n");
                let _ = vfs.write(open[rng.gen_range(0..open.len())], data.as_bytes());
            }
            4 if !open.is_empty() => {
                let id = open.swap_remove(rng.gen_range(0..open.len()));
                let _ = vfs.close(id);
            }
            _ => {}
        }
    }
    let report = vfs.inspect();
    let replayed = replay(&initial, &report.op_log).map_err(|e| format!("session {seed}: replay failed: {e}"))?;
    ensure(replayed == vfs.root, &format!("session {seed}: replay differs"))
}

fn replay_invariant() -> Result<String, String> {
    for seed in 0..200 {
        random_session(seed)?;
    }
    Ok("200 random sessions replay byte-for-byte".into())
}

#[test]
fn acceptance() {
    // The gate is also reachable from the command line.
    let (mut o, mut e) = (Vec::new(), Vec::new());
    let clean = cmd_check(&submission("peano", "correct"), &exercise("peano"), &mut o, &mut e);
    assert_eq!(clean, ExitStatus::Ok);

    let criteria: [(&str, Criterion); 10] = [
        ("gate corpus", gate_corpus),
        ("peano end-to-end", peano_end_to_end),
        ("mock IO", mock_io),
        ("tail recursion", tail_recursion),
        ("threads", threads),
        ("determinism", determinism),
        ("suppression", suppression),
        ("dummy fallback", dummy_fallback),
        ("totality fuzz", totality_fuzz),
        ("replay invariant", replay_invariant),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("criterion {n:>2} ({name}): PASS - {detail}"),
            Ok(Err(why)) => {
                println!("criterion {n:>2} ({name}): FAIL - {why}");
                failed.push(n);
            }
            Err(_) => {
                println!("criterion {n:>2} ({name}): FAIL - panicked");
                failed.push(n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
