use std::path::Path;

use mlgrade_core::featuregate::{gate, restrict_prelude, FeaturePolicy, SyntaxFeature, Violation};
use mlgrade_core::runtime::default_prelude;
use mlgrade_core::syntax::{parse, Program};
use proptest::prelude::*;

const NAME_POOL: &[&str] =
    &["+", "-", "*", "ref", "!", ":=", "Array.*", "Queue.*", "List.rev", "List.fold_left", "print_string"];

fn corpus() -> Vec<Program> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let mut dirs = vec![root];
    let mut out = Vec::new();
    while let Some(d) = dirs.pop() {
        for entry in std::fs::read_dir(d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                dirs.push(path);
            } else if path.extension().is_some_and(|e| e == "mml") {
                if let Ok(p) = parse(&std::fs::read(&path).unwrap(), "p.mml") {
                    out.push(p);
                }
            }
        }
    }
    out
}

fn policy(syntax_bits: u8, name_bits: u16) -> FeaturePolicy {
    let mut p = FeaturePolicy::unrestricted();
    for (i, f) in SyntaxFeature::ALL.iter().enumerate() {
        if syntax_bits & (1 << i) != 0 {
            p.denied_syntax.insert(*f);
        }
    }
    p.deny_names(NAME_POOL.iter().enumerate().filter(|(i, _)| name_bits & (1 << i) != 0).map(|(_, n)| *n))
}

fn violations(p: &Program, policy: &FeaturePolicy) -> Vec<Violation> {
    let full = default_prelude();
    let restricted = restrict_prelude(&full, policy).unwrap();
    gate(p, policy, &restricted, &full)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Denying more never removes a violation.
    #[test]
    fn stricter_policies_find_more(
        which in any::<prop::sample::Index>(),
        s1 in any::<u8>(), s_extra in any::<u8>(),
        n1 in any::<u16>(), n_extra in any::<u16>(),
    ) {
        let programs = corpus();
        let p = &programs[which.index(programs.len())];
        let mask = (1u16 << NAME_POOL.len()) - 1;
        let weak = policy(s1, n1 & mask);
        let strong = policy(s1 | s_extra, (n1 | n_extra) & mask);
        let a = violations(p, &weak);
        let b = violations(p, &strong);
        for v in &a {
            prop_assert!(b.contains(v), "{v:?} disappeared under the stricter policy");
        }
    }

    /// The restricted prelude never offers a denied name.
    #[test]
    fn restriction_removes_denied_names(n in any::<u16>()) {
        let mask = (1u16 << NAME_POOL.len()) - 1;
        let p = policy(0, n & mask);
        let full = default_prelude();
        let r = restrict_prelude(&full, &p).unwrap();
        prop_assert!(!r.full);
        for name in &p.names {
            match name.strip_suffix(".*") {
                Some(module) => {
                    let prefix = format!("{module}.");
                    prop_assert!(r.names().all(|k| !k.starts_with(&prefix)));
                }
                None => prop_assert!(!r.contains(name)),
            }
        }
        prop_assert!(r.names().all(|k| full.contains(k)));
    }
}

#[test]
fn violations_are_sorted_by_position() {
    let src = b"let f a = Array.make 3 (a + 1)\nlet g () = while true do () done\nlet h = [| 1 |]";
    let p = parse(src, "s.mml").unwrap();
    let v = violations(&p, &FeaturePolicy::default().deny_names(["+", "Array.*"]));
    assert_eq!(v.len(), 4);
    assert!(v.windows(2).all(|w| w[0].span.lo <= w[1].span.lo));
}
