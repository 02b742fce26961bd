use std::path::{Path, PathBuf};
use std::sync::Arc;

use mlgrade_core::syntax::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture_programs() -> Vec<PathBuf> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let mut out = Vec::new();
    let mut stack = vec![root];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "mml") {
                out.push(path);
            }
        }
    }
    out.sort();
    out
}

const INLINE: &[&str] = &[
    "let x = 1",
    "let rec fact n = if n = 0 then 1 else n * fact (n - 1)",
    "let f = fun x y -> (x, y)",
    "type t = A | B of int | C of int * int\nlet v = C (1, 2)",
    "let l = [1; 2; 3] :: 4 :: []",
    "let s = \"tab\\there\\n\" ^ \"quote\\\"\"",
    "let g x = match x with | [] -> 0 | [a] -> a | a :: b :: _ -> a + b",
    "let h = try raise Not_found with Not_found -> 0 | Failure m -> 1",
    "let neg = - (3 + 4)",
    "let p = (fun x -> x) (-7)",
    "let seq () = print_string \"a\"; print_string \"b\"",
    "let w = let r = ref 0 in while !r < 3 do r := !r + 1 done; !r",
    "let a = let arr = [| 1; 2 |] in arr.(0) <- 5; arr.(0)",
    "let fl = for i = 1 to 3 do print_int i done",
    "native out = \"print_string\"",
    "let b = true && (false || not true)",
    "let c = 7 mod 3 <> 1",
    "let q = List.map (fun x -> x * 2) [1; 2]",
    "let u = ()",
    "let nested = let rec go i = if i > 10 then i else go (i + 1) in go 0",
];

fn roundtrip(p: &Program) {
    let printed = pretty_program(p);
    let again = parse(printed.as_bytes(), &p.source_name).unwrap_or_else(|e| panic!("{e}\n{printed}"));
    assert_eq!(again.without_spans(), p.without_spans(), "{printed}");
}

#[test]
fn corpus_round_trips() {
    let mut n = 0;
    for path in fixture_programs() {
        let src = std::fs::read(&path).unwrap();
        if let Ok(p) = parse(&src, "x.mml") {
            roundtrip(&p);
            n += 1;
        }
    }
    for src in INLINE {
        let p = parse(src.as_bytes(), "x.mml").unwrap_or_else(|e| panic!("{src}: {e}"));
        roundtrip(&p);
        n += 1;
    }
    assert!(n >= 30, "only {n} programs");
}

#[test]
fn random_bytes_never_panic() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let alphabet = b"let rec in fun -> ( ) [ ] [| |] ; :: match with | if then else 0 1 x y \" \\ ' . * ( * *) \n";
    for i in 0..10_000 {
        let len = rng.gen_range(0..120);
        let src: Vec<u8> = if i % 2 == 0 {
            (0..len).map(|_| rng.gen()).collect()
        } else {
            (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
        };
        if let Err(e) = parse(&src, "fuzz.mml") {
            assert!(e.span.start_line >= 1 && e.span.start_col >= 1, "{e}");
        }
    }
}

#[test]
fn deep_nesting_is_an_error_not_a_crash() {
    let src = format!("let x = {}1{}", "(".repeat(100_000), ")".repeat(100_000));
    assert!(parse(src.as_bytes(), "deep.mml").is_err());
    let long = format!("let x = 0{}", " + 1".repeat(50_000));
    // Either accepted within the height bound or rejected; never a stack overflow.
    if let Ok(p) = parse(long.as_bytes(), "long.mml") {
        assert!(p.decls.len() == 1);
    }
}

#[test]
fn error_positions() {
    let e = parse(b"let x =\n  (1 +", "e.mml").unwrap_err();
    assert_eq!(e.kind, SyntaxErrorKind::Parse);
    assert_eq!(e.span.start_line, 2);
    let e = parse(b"let s = \"open", "e.mml").unwrap_err();
    assert_eq!(e.kind, SyntaxErrorKind::Lex);
    assert_eq!(e.to_string(), format!("1:9: lexical error: {}", e.message));
}

#[test]
fn free_names_respect_scope() {
    let p = parse(b"let f x = let y = x in y + z\nlet g = f 1", "n.mml").unwrap();
    let names: Vec<String> = free_names(&p).into_iter().map(|(n, _)| n.to_string()).collect();
    assert_eq!(names, ["+", "z"]);
    let e = parse_expr("fun a -> a b").unwrap();
    let names: Vec<String> = free_names_expr(&e).into_iter().map(|(n, _)| n.to_string()).collect();
    assert_eq!(names, ["b"]);
}

// Random trees print and re-parse to themselves.

fn e(kind: ExprKind) -> Arc<Expr> {
    Arc::new(Expr::new(kind, Span::default()))
}

fn pat(kind: PatternKind) -> Pattern {
    Pattern::new(kind, Span::default())
}

fn ident() -> impl Strategy<Value = Name> {
    prop::sample::select(vec!["a", "b", "xs", "go", "acc", "f'", "x_1"]).prop_map(Name::from)
}

fn linear(p: &Pattern) -> bool {
    let mut vars = Vec::new();
    p.bound_vars(&mut vars);
    let mut names: Vec<_> = vars.into_iter().map(|(n, _)| n).collect();
    names.sort();
    names.windows(2).all(|w| w[0] != w[1])
}

fn pattern() -> impl Strategy<Value = Pattern> {
    let leaf = prop_oneof![
        Just(pat(PatternKind::Wildcard)),
        ident().prop_map(|n| pat(PatternKind::Var(n))),
        (-5i64..50).prop_map(|n| pat(PatternKind::Int(n))),
        Just(pat(PatternKind::Nil)),
        Just(pat(PatternKind::Ctor("Zero".into(), vec![]))),
    ];
    leaf.prop_recursive(3, 12, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(h, t)| pat(PatternKind::Cons(Box::new(h), Box::new(t)))),
            prop::collection::vec(inner.clone(), 2..4).prop_map(|ps| pat(PatternKind::Tuple(ps))),
            // `Succ (a, b)` would read back as a two-argument constructor.
            inner
                .prop_filter("tuple", |p| !matches!(p.kind, PatternKind::Tuple(_)))
                .prop_map(|p| pat(PatternKind::Ctor("Succ".into(), vec![p]))),
        ]
    })
    .prop_filter("variables bound once", linear)
}

fn expr() -> impl Strategy<Value = Arc<Expr>> {
    let leaf = prop_oneof![
        (-1000i64..1000).prop_map(|n| e(ExprKind::Int(n))),
        any::<bool>().prop_map(|b| e(ExprKind::Bool(b))),
        "[ -~\n\t]{0,8}".prop_map(|s| e(ExprKind::Str(s.into_bytes()))),
        Just(e(ExprKind::Unit)),
        ident().prop_map(|n| e(ExprKind::Var(n))),
        Just(e(ExprKind::Ctor { name: "Zero".into(), args: vec![] })),
    ];
    leaf.prop_recursive(5, 48, 4, |inner| {
        let op = prop::sample::select(vec!["+", "-", "*", "=", "<", "^", "mod"]);
        prop_oneof![
            (ident(), inner.clone()).prop_map(|(param, body)| e(ExprKind::Lambda { param, body })),
            // A constructor applied to something reads back as constructor arguments.
            (inner.clone(), inner.clone())
                .prop_filter("ctor head", |(f, _)| !matches!(f.kind, ExprKind::Ctor { .. }))
                .prop_map(|(func, arg)| e(ExprKind::Apply { func, arg })),
            (op, inner.clone(), inner.clone()).prop_map(|(o, a, b)| {
                let partial = e(ExprKind::Apply { func: e(ExprKind::Var(o.into())), arg: a });
                e(ExprKind::Apply { func: partial, arg: b })
            }),
            (any::<bool>(), ident(), inner.clone(), inner.clone())
                .prop_map(|(recursive, name, bound, body)| e(ExprKind::Let { recursive, name, bound, body })),
            (inner.clone(), inner.clone(), inner.clone()).prop_map(|(c, t, f)| e(ExprKind::If {
                cond: c,
                then_branch: t,
                else_branch: f
            })),
            (inner.clone(), prop::collection::vec((pattern(), inner.clone()), 1..3)).prop_map(|(s, arms)| {
                let arms = arms.into_iter().map(|(pattern, body)| Arm { pattern, body }).collect();
                e(ExprKind::Match { scrutinee: s, arms })
            }),
            prop::collection::vec(inner.clone(), 2..4).prop_map(|v| e(ExprKind::Tuple(v))),
            prop::collection::vec(inner.clone(), 0..4).prop_map(|v| e(ExprKind::List(v))),
            (inner.clone(), inner.clone()).prop_map(|(head, tail)| e(ExprKind::Cons { head, tail })),
            inner
                .clone()
                .prop_filter("tuple", |a| !matches!(a.kind, ExprKind::Tuple(_)))
                .prop_map(|a| e(ExprKind::Ctor { name: "Succ".into(), args: vec![a] })),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| e(ExprKind::Sequence { first: a, second: b })),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| e(ExprKind::AndAlso(a, b))),
            (inner.clone(), inner).prop_map(|(a, b)| e(ExprKind::OrElse(a, b))),
        ]
    })
}

proptest! {
    #[test]
    fn printed_trees_reparse(body in expr()) {
        let printed = pretty_expr(&body);
        let again = parse_expr(&printed).map_err(|err| TestCaseError::fail(format!("{err}: {printed}")))?;
        prop_assert_eq!(again.without_spans(), body.without_spans(), "{}", printed);
    }
}
