use std::sync::{Arc, OnceLock};

use indexmap::IndexMap;

use crate::syntax::Name;

use super::prims::{PrimDef, PRIMS};
use super::value::{PrimApp, Value};

#[derive(Clone)]
pub enum PreludeBinding {
    Value(Value),
    Ctor { arity: usize },
}

impl PreludeBinding {
    /// Identity of the binding: same primitive, or same constructor arity.
    pub fn same_as(&self, other: &PreludeBinding) -> bool {
        match (self, other) {
            (PreludeBinding::Value(Value::Primitive(a)), PreludeBinding::Value(Value::Primitive(b))) => {
                std::ptr::eq(a.def, b.def) && a.args.is_empty() && b.args.is_empty()
            }
            (PreludeBinding::Ctor { arity: a }, PreludeBinding::Ctor { arity: b }) => a == b,
            _ => false,
        }
    }
}

/// The built-in bindings visible to a program.
#[derive(Clone)]
pub struct Prelude {
    bindings: IndexMap<Name, PreludeBinding>,
    /// Marks the trusted, unrestricted prelude.
    pub full: bool,
}

/// Built-in exception and option constructors with their arities.
pub const BUILTIN_CTORS: &[(&str, usize)] = &[
    ("Division_by_zero", 0),
    ("Match_failure", 0),
    ("End_of_file", 0),
    ("Not_found", 0),
    ("Io_error", 1),
    ("Failure", 1),
    ("Invalid_argument", 1),
    ("None", 0),
    ("Some", 1),
];

impl Prelude {
    pub fn empty() -> Prelude {
        Prelude { bindings: IndexMap::new(), full: false }
    }

    pub fn get(&self, name: &str) -> Option<&PreludeBinding> {
        self.bindings.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.bindings.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &Name> {
        self.bindings.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Name, &PreludeBinding)> {
        self.bindings.iter()
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    /// Sub-prelude keeping only the names accepted by `keep`.
    pub fn retain(&self, mut keep: impl FnMut(&str) -> bool) -> Prelude {
        let bindings = self.bindings.iter().filter(|(n, _)| keep(n)).map(|(n, b)| (n.clone(), b.clone())).collect();
        Prelude { bindings, full: false }
    }
}

impl std::fmt::Debug for Prelude {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Prelude")
            .field("full", &self.full)
            .field("names", &self.bindings.keys().collect::<Vec<_>>())
            .finish()
    }
}

pub fn primitive(def: &'static PrimDef) -> Value {
    Value::Primitive(Arc::new(PrimApp { def, args: Vec::new() }))
}

/// The full, trusted prelude. Built once; IO and thread primitives act on
/// whichever machine executes them, so the table itself is stateless.
pub fn default_prelude() -> Arc<Prelude> {
    static FULL: OnceLock<Arc<Prelude>> = OnceLock::new();
    FULL.get_or_init(|| {
        let mut bindings = IndexMap::new();
        for def in PRIMS {
            bindings.insert(Name::from(def.name), PreludeBinding::Value(primitive(def)));
        }
        for (name, arity) in BUILTIN_CTORS {
            bindings.insert(Name::from(*name), PreludeBinding::Ctor { arity: *arity });
        }
        Arc::new(Prelude { bindings, full: true })
    })
    .clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_prelude_has_required_surface() {
        let p = default_prelude();
        assert!(p.full);
        for name in [
            "+",
            "-",
            "*",
            "/",
            "mod",
            "=",
            "<>",
            "<",
            "<=",
            ">",
            ">=",
            "not",
            "^",
            "string_of_int",
            "int_of_string",
            "print_string",
            "print_newline",
            "ref",
            "!",
            ":=",
            "List.map",
            "List.filter",
            "List.fold_left",
            "List.rev",
            "List.length",
            "List.append",
            "List.nth",
            "Array.make",
            "Array.get",
            "Array.set",
            "Array.length",
            "Array.to_list",
            "Array.of_list",
            "Queue.create",
            "Queue.push",
            "Queue.pop",
            "Queue.is_empty",
            "String.length",
            "String.sub",
            "String.concat",
            "open_in",
            "open_out",
            "input_line",
            "output_string",
            "close_in",
            "close_out",
            "Thread.create",
            "Thread.join",
            "Thread.yield",
            "Event.new_channel",
            "Event.send",
            "Event.receive",
        ] {
            assert!(p.contains(name), "missing {name}");
        }
    }

    #[test]
    fn retain_is_removal_only() {
        let full = default_prelude();
        let sub = full.retain(|n| !n.starts_with("List."));
        assert!(!sub.full);
        assert!(!sub.contains("List.map"));
        for (n, b) in sub.iter() {
            assert!(b.same_as(full.get(n).unwrap()));
        }
    }
}
