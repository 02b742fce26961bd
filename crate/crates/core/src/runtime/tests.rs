use super::*;
use crate::syntax::{parse, parse_expr};
use crate::vfs::{FaultOp, FaultRule, Node};

fn run_with(src: &str, entry: &str, limits: Limits, vfs: VfsState) -> RunOutcome {
    let p = parse(src.as_bytes(), "test.mml").expect("parses");
    let e = parse_expr(entry).expect("entry parses");
    evaluate(&p, default_prelude(), vfs, limits, Some(&e))
}

fn run(src: &str, entry: &str) -> RunOutcome {
    run_with(src, entry, Limits::default(), VfsState::default())
}

fn done(o: &RunOutcome) -> &Value {
    match &o.result {
        RunResult::Done(v) => v,
        other => panic!("expected a value, got {other}"),
    }
}

fn peano(n: usize) -> Value {
    let mut v = Value::ctor("Zero", vec![]);
    for _ in 0..n {
        v = Value::ctor("Succ", vec![v]);
    }
    v
}

fn peano_to_int(v: &Value) -> Option<usize> {
    let mut n = 0;
    let mut cur = v.clone();
    loop {
        match cur {
            Value::Ctor(name, args) if &*name == "Zero" && args.is_empty() => return Some(n),
            Value::Ctor(name, args) if &*name == "Succ" && args.len() == 1 => {
                n += 1;
                cur = args[0].clone();
            }
            _ => return None,
        }
    }
}

const PEANO: &str = "
type nat = Zero | Succ of _
let rec add a b = match a with Zero -> b | Succ p -> Succ (add p b)
";

#[test]
fn one_plus_one() {
    let o = run("", "1 + 1");
    assert_eq!(done(&o), &Value::Int(2));
    assert!(o.steps_used > 0);
}

#[test]
fn peano_add_matches_integer_oracle() {
    let p = parse(PEANO.as_bytes(), "peano.mml").unwrap();
    let mut m = Machine::new(VfsState::default(), Limits::default());
    let run = m.load_program(&p, default_prelude(), true);
    assert!(run.failure.is_none());
    let add = run.scope.globals.get("add").unwrap().clone();
    for a in 0..=5 {
        for b in 0..=5 {
            let v = m.call(&add, &[peano(a), peano(b)], true).ok().unwrap();
            assert_eq!(peano_to_int(&v), Some(a + b), "add {a} {b}");
        }
    }
    let e = parse_expr("add (Succ Zero) (Succ Zero)").unwrap();
    let v = m.eval(&e, &Env::new(run.scope.clone()), true).ok().unwrap();
    assert_eq!(v, peano(2));
}

const SUMS: &str = "
let rec build n acc = if n = 0 then acc else build (n - 1) (n :: acc)
let rec naive l = match l with [] -> 0 | x :: t -> x + naive t
let sum_tail l = let rec go l acc = match l with [] -> acc | x :: t -> go t (acc + x) in go l 0
";

#[test]
fn naive_sum_exhausts_depth_tail_sum_does_not() {
    let naive = run(SUMS, "naive (build 100000 [])");
    assert!(matches!(naive.result, RunResult::ResourceTrap { kind: ResourceKind::Depth, .. }), "{}", naive.result);
    let tail = run(SUMS, "sum_tail (build 100000 [])");
    assert_eq!(done(&tail), &Value::Int(5_000_050_000));
}

#[test]
fn tail_calls_run_in_constant_depth() {
    let limits = Limits { max_steps: 50_000_000, ..Limits::default() };
    let o = run_with(
        "let rec countdown n = if n = 0 then 0 else countdown (n - 1)",
        "countdown 1000000",
        limits,
        VfsState::default(),
    );
    assert_eq!(done(&o), &Value::Int(0));
    assert!(o.max_depth <= 2, "depth {}", o.max_depth);
}

#[test]
fn tail_positions_cover_match_let_and_sequence() {
    let src = "
let rec a n = match n with 0 -> 0 | _ -> let m = n - 1 in (); a m
let rec b n = if n = 0 then 0 else try b (n - 1) with Not_found -> 1
";
    let o = run(src, "a 100000");
    assert!(o.max_depth <= 2, "depth {}", o.max_depth);
    // try bodies are not tail positions
    let o = run(src, "b 100000");
    assert!(matches!(o.result, RunResult::ResourceTrap { kind: ResourceKind::Depth, .. }));
}

#[test]
fn exceptions_are_catchable_resource_traps_are_not() {
    assert_eq!(done(&run("", "try 1 / 0 with Division_by_zero -> 7")), &Value::Int(7));
    assert_eq!(done(&run("", "try failwith \"x\" with Failure m -> m")), &Value::str("x"));
    assert_eq!(done(&run("", "try (match 3 with 1 -> 1) with Match_failure -> 2")), &Value::Int(2));
    let o = run("let rec f x = f x", "try f 0 with _ -> 1");
    assert!(matches!(o.result, RunResult::ResourceTrap { kind: ResourceKind::Steps, .. }));
}

#[test]
fn uncaught_exception_is_a_lang_trap() {
    let o = run("", "raise (Failure \"boom\")");
    match &o.result {
        RunResult::LangTrap { exception, summary } => {
            assert_eq!(exception.ctor_name(), Some("Failure"));
            assert!(summary.contains("Failure"));
        }
        other => panic!("{other}"),
    }
}

#[test]
fn structural_equality_primitive() {
    let src = "type t = Leaf | Node of _ * _ * _";
    assert_eq!(
        done(&run(src, "Node (Leaf, 1, Node (Leaf, 2, Leaf)) = Node (Leaf, 1, Node (Leaf, 2, Leaf))")),
        &Value::Bool(true)
    );
    assert_eq!(done(&run(src, "Node (Leaf, 1, Leaf) = Node (Leaf, 2, Leaf)")), &Value::Bool(false));
    let o = run("", "(fun x -> x) = (fun x -> x)");
    assert!(
        matches!(&o.result, RunResult::LangTrap { exception, .. } if exception.ctor_name() == Some("Invalid_argument"))
    );
}

#[test]
fn refs_arrays_queues() {
    assert_eq!(done(&run("", "let r = ref 1 in r := !r + 41; !r")), &Value::Int(42));
    assert_eq!(
        done(&run("", "let a = Array.make 3 0 in a.(1) <- 5; Array.to_list a")),
        &Value::list(vec![Value::Int(0), Value::Int(5), Value::Int(0)])
    );
    assert_eq!(
        done(&run("", "let q = Queue.create () in Queue.push 1 q; Queue.push 2 q; let a = Queue.pop q in (a, Queue.pop q, Queue.is_empty q)")),
        &Value::tuple(vec![Value::Int(1), Value::Int(2), Value::Bool(true)])
    );
    let o = run("", "[|1; 2|].(2)");
    assert!(
        matches!(&o.result, RunResult::LangTrap { exception, .. } if exception.ctor_name() == Some("Invalid_argument"))
    );
}

#[test]
fn loops_and_higher_order_prims() {
    assert_eq!(done(&run("", "let s = ref 0 in for i = 1 to 10 do s := !s + i done; !s")), &Value::Int(55));
    assert_eq!(done(&run("", "let i = ref 0 in while !i < 5 do i := !i + 1 done; !i")), &Value::Int(5));
    assert_eq!(
        done(&run("", "List.fold_left (fun a x -> a * 10 + x) 0 (List.map (fun x -> x + 1) [0; 1; 2])")),
        &Value::Int(123)
    );
    assert_eq!(
        done(&run("", "List.filter (fun x -> x mod 2 = 0) [1; 2; 3; 4]")),
        &Value::list(vec![Value::Int(2), Value::Int(4)])
    );
    assert_eq!(done(&run("", "String.concat \", \" [\"a\"; \"b\"]")), &Value::str("a, b"));
    assert_eq!(
        done(&run("", "List.rev (List.append [1] [2; 3])")),
        &Value::list(vec![Value::Int(3), Value::Int(2), Value::Int(1)])
    );
}

#[test]
fn print_string_goes_to_stdout() {
    let o = run("", "print_string \"hello\"; print_newline ()");
    assert_eq!(o.stdout, b"hello\n");
}

#[test]
fn input_line_after_end_raises_end_of_file() {
    let vfs = VfsState::reset(Node::with_files([("a.txt", "x\n")]));
    let o = run_with("", "let h = open_in \"/a.txt\" in let _ = input_line h in input_line h", Limits::default(), vfs);
    assert!(matches!(&o.result, RunResult::LangTrap { exception, .. } if exception.ctor_name() == Some("End_of_file")));
}

#[test]
fn injected_faults_surface_as_io_error() {
    let mut vfs = VfsState::reset(Node::with_files([("a.txt", "x\ny\n")]));
    vfs.add_fault(FaultRule::new("/a.txt", FaultOp::ReadOp, 2, "disk on fire"));
    let o = run_with(
        "",
        "let h = open_in \"/a.txt\" in let a = input_line h in try input_line h with Io_error m -> close_in h; m",
        Limits::default(),
        vfs,
    );
    assert_eq!(done(&o), &Value::str("disk on fire"));
    assert!(o.vfs_report.open_handles.is_empty());
}

#[test]
fn spawn_and_join_registers_events_in_order() {
    let o = run("", "let t = Thread.create (fun x -> x + 1) 1 in Thread.join t");
    done(&o);
    let ev = &o.registry.events;
    assert_eq!(ev.len(), 3);
    assert!(matches!(ev[0], ThreadEvent::Spawned { parent: 0, .. }));
    assert!(matches!(ev[1], ThreadEvent::Completed { .. }));
    assert!(matches!(ev[2], ThreadEvent::Joined { joiner: 0, .. }));
    assert!(ev.windows(2).all(|w| w[0].step() <= w[1].step()));
}

#[test]
fn rendezvous_transfers_value_exactly_once() {
    let src = "
let got = ref 0
let recv c = got := Event.receive c
";
    for order in ["let c = Event.new_channel () in let t = Thread.create recv c in Event.send c 42; Thread.join t; !got",
        "let c = Event.new_channel () in let t = Thread.create (fun c -> Event.send c 42) c in recv c; Thread.join t; !got"]
    {
        let o = run(src, order);
        assert_eq!(done(&o), &Value::Int(42), "{order}");
        assert!(o.registry.all_completed());
    }
}

#[test]
fn thread_limit_traps_on_the_sixth_worker() {
    let src = "
let rec spawn n c = if n = 0 then [] else Thread.create (fun c -> Event.receive c) c :: spawn (n - 1) c
";
    let limits = Limits { max_live_threads: 5, ..Limits::default() };
    let ok = run_with(src, "let c = Event.new_channel () in List.length (spawn 5 c)", limits, VfsState::default());
    assert_eq!(done(&ok), &Value::Int(5));
    let o = run_with(src, "let c = Event.new_channel () in List.length (spawn 6 c)", limits, VfsState::default());
    assert!(matches!(o.result, RunResult::ResourceTrap { kind: ResourceKind::Threads, .. }), "{}", o.result);
    assert_eq!(o.registry.spawned().len(), 5);
}

#[test]
fn all_threads_blocked_is_deadlock() {
    let o = run("", "Event.receive (Event.new_channel ())");
    assert!(matches!(&o.result, RunResult::Deadlock { blocked } if blocked == &vec![0]));
}

#[test]
fn blocked_worker_does_not_deadlock_a_running_main() {
    let o = run("", "let c = Event.new_channel () in let _ = Thread.create Event.receive c in 3");
    assert_eq!(done(&o), &Value::Int(3));
    assert!(!o.registry.all_completed());
}

#[test]
fn call_value_examples() {
    let mut m = Machine::new(VfsState::default(), Limits::default());
    let p = parse(PEANO.as_bytes(), "p.mml").unwrap();
    let run = m.load_program(&p, default_prelude(), true);
    let id = m.eval(&parse_expr("fun x -> x").unwrap(), &Env::new(run.scope.clone()), true).ok().unwrap();
    let o = call_value(&id, &[Value::Int(7)], Limits::default(), &mut m).unwrap();
    assert!(matches!(o.result, RunResult::Done(Value::Int(7))));
    let add = run.scope.globals.get("add").unwrap().clone();
    let o = call_value(&add, &[peano(2), peano(3)], Limits::default(), &mut m).unwrap();
    assert!(matches!(&o.result, RunResult::Done(v) if peano_to_int(v) == Some(5)));
    assert_eq!(call_value(&Value::Int(3), &[], Limits::default(), &mut m).unwrap_err(), NotCallable("int"));
}

#[test]
fn restricted_programs_log_untrusted_primitive_calls() {
    let p = parse(b"let f x = x + 1", "s.mml").unwrap();
    let restricted = default_prelude().retain(|n| n == "+");
    let e = parse_expr("f 1").unwrap();
    let o = evaluate(&p, Arc::new(restricted), VfsState::default(), Limits::default(), Some(&e));
    assert_eq!(o.prim_calls.get("+"), Some(&1));
}

#[test]
fn heap_limit_traps() {
    let limits = Limits { max_heap_cells: 10, ..Limits::default() };
    let o = run_with("", "Array.make 11 0", limits, VfsState::default());
    assert!(matches!(o.result, RunResult::ResourceTrap { kind: ResourceKind::Heap, .. }));
}

#[test]
fn evaluation_is_deterministic() {
    let src = "let rec work n acc = if n = 0 then acc else work (n - 1) (acc + n)
let main () = let c = Event.new_channel () in
  let ts = List.map (fun i -> Thread.create (fun i -> print_int (work (i * 37) 0); Event.send c i) i) [1; 2; 3] in
  let a = Event.receive c in let b = Event.receive c in let d = Event.receive c in
  List.iter Thread.join ts; (a, b, d)";
    let a = run(src, "main ()");
    let b = run(src, "main ()");
    assert_eq!(format!("{}", a.result), format!("{}", b.result));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.registry, b.registry);
    assert_eq!(a.steps_used, b.steps_used);
}

#[test]
fn curried_partial_application_and_natives() {
    assert_eq!(done(&run("let add a b = a + b\nlet inc = add 1", "inc 41")), &Value::Int(42));
    assert_eq!(done(&run("native plus = \"+\"", "plus 2 3")), &Value::Int(5));
    assert_eq!(done(&run("", "(native \"*\") 6 7")), &Value::Int(42));
    assert_eq!(done(&run("", "let f = ( - ) 10 in f 3")), &Value::Int(7));
}
