use std::collections::VecDeque;

use mlgrade_core::runtime::{default_prelude, evaluate, Limits, ResourceKind, RunOutcome, RunResult};
use mlgrade_core::syntax::{parse, parse_expr};
use mlgrade_core::vfs::VfsState;
use proptest::prelude::*;
use rayon::prelude::*;

fn run(src: &str, entry: &str, limits: Limits) -> RunOutcome {
    let p = parse(src.as_bytes(), "t.mml").unwrap();
    let e = parse_expr(entry).unwrap();
    evaluate(&p, default_prelude(), VfsState::default(), limits, Some(&e))
}

#[derive(Debug, Clone)]
enum QueueOp {
    Push(i64),
    Pop,
    IsEmpty,
}

fn queue_op() -> impl Strategy<Value = QueueOp> {
    prop_oneof![(-50i64..50).prop_map(QueueOp::Push), Just(QueueOp::Pop), Just(QueueOp::IsEmpty)]
}

/// The queue program prints one line per observation; the model predicts it.
fn queue_program(ops: &[QueueOp]) -> (String, String) {
    let mut src = String::from("let main () =\n  let q = Queue.create () in\n");
    let mut model = VecDeque::new();
    let mut expected = String::new();
    for op in ops {
        match op {
            QueueOp::Push(v) => {
                src.push_str(&format!("  Queue.push ({v}) q;\n"));
                model.push_back(*v);
            }
            QueueOp::Pop => {
                src.push_str(
                    "  print_string (try string_of_int (Queue.pop q) with Failure _ -> \"empty\"); print_newline ();\n",
                );
                match model.pop_front() {
                    Some(v) => expected.push_str(&format!("{v}\n")),
                    None => expected.push_str("empty\n"),
                }
            }
            QueueOp::IsEmpty => {
                src.push_str("  print_string (if Queue.is_empty q then \"yes\" else \"no\"); print_newline ();\n");
                expected.push_str(if model.is_empty() { "yes\n" } else { "no\n" });
            }
        }
    }
    src.push_str("  ()\n");
    (src, expected)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn queue_matches_model(ops in prop::collection::vec(queue_op(), 0..40)) {
        let (src, expected) = queue_program(&ops);
        let o = run(&src, "main ()", Limits::default());
        prop_assert!(matches!(o.result, RunResult::Done(_)), "{}", o.result);
        prop_assert_eq!(String::from_utf8(o.stdout).unwrap(), expected);
    }

    /// A run that finishes within a budget finishes identically with any larger
    /// one; a run that traps on steps traps with any smaller one.
    #[test]
    fn step_budget_is_monotone(n in 0i64..200, budget in 50u64..20_000, extra in 1u64..10_000) {
        let src = "let rec count i acc = if i = 0 then acc else count (i - 1) (acc + i)";
        let entry = format!("count {n} 0");
        let at = |max_steps| run(src, &entry, Limits { max_steps, ..Limits::default() });
        let small = at(budget);
        let large = at(budget + extra);
        match &small.result {
            RunResult::Done(v) => {
                let RunResult::Done(w) = &large.result else { panic!("larger budget trapped: {}", large.result) };
                prop_assert_eq!(v.to_string(), w.to_string());
                prop_assert_eq!(small.steps_used, large.steps_used);
            }
            RunResult::ResourceTrap { kind: ResourceKind::Steps, .. } => {
                let smaller = at(budget.saturating_sub(extra).max(1));
                let trapped = matches!(smaller.result, RunResult::ResourceTrap { kind: ResourceKind::Steps, .. });
                prop_assert!(trapped, "smaller budget did not trap: {}", smaller.result);
            }
            other => panic!("unexpected result {other}"),
        }
    }
}

#[test]
fn step_count_is_exact_at_the_threshold() {
    let src = "let rec count i = if i = 0 then 0 else count (i - 1)";
    let used = run(src, "count 100", Limits::default()).steps_used;
    let exact = run(src, "count 100", Limits { max_steps: used, ..Limits::default() });
    assert!(matches!(exact.result, RunResult::Done(_)), "{}", exact.result);
    let short = run(src, "count 100", Limits { max_steps: used - 1, ..Limits::default() });
    assert!(matches!(short.result, RunResult::ResourceTrap { kind: ResourceKind::Steps, .. }));
}

#[test]
fn threaded_runs_are_identical_across_host_threads() {
    let src = "let rec spin n = if n = 0 then () else spin (n - 1)
let main () =
  let c = Event.new_channel () in
  let worker i = spin (i * 13); print_int i; Event.send c (i * i) in
  let ts = List.map (fun i -> Thread.create worker i) [1; 2; 3; 4] in
  let total = List.fold_left (fun acc _ -> acc + Event.receive c) 0 ts in
  List.iter Thread.join ts; total";
    let outs: Vec<(String, Vec<u8>, u64)> = (0..32)
        .into_par_iter()
        .map(|_| {
            let o = run(src, "main ()", Limits::default());
            (o.result.to_string(), o.stdout, o.steps_used)
        })
        .collect();
    assert_eq!(outs[0].0, "30");
    assert!(outs.iter().all(|o| o == &outs[0]));
}

#[test]
fn peano_addition_agrees_with_integers() {
    let src = "type nat = Zero | Succ of _
let rec add a b = match a with Zero -> b | Succ p -> Succ (add p b)
let rec to_int n = match n with Zero -> 0 | Succ p -> 1 + to_int p
let rec of_int i = if i = 0 then Zero else Succ (of_int (i - 1))";
    for a in 0..6 {
        for b in 0..6 {
            let o = run(src, &format!("to_int (add (of_int {a}) (of_int {b}))"), Limits::default());
            assert_eq!(o.result.to_string(), (a + b).to_string());
        }
    }
}
