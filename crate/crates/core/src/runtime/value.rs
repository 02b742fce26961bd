use std::cell::{Cell, RefCell};
use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use crate::syntax::{Expr, Name};

use super::prelude::{Prelude, PreludeBinding};
use super::prims::PrimDef;

pub type CellId = usize;

#[derive(Clone)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Str(Arc<[u8]>),
    Unit,
    Tuple(Arc<Fields>),
    List(List),
    Ctor(Name, Arc<Fields>),
    Closure(Arc<Closure>),
    Ref(CellId),
    Array(Arc<[CellId]>),
    Queue(CellId),
    Handle(u64),
    Thread(u64),
    Channel(u64),
    Primitive(Arc<PrimApp>),
}

pub struct Closure {
    pub param: Name,
    pub body: Arc<Expr>,
    pub env: Env,
    /// Set for `let rec` bindings: the closure sees itself under this name.
    pub rec_name: Option<Name>,
    pub trusted: bool,
}

/// A primitive together with the arguments it has been applied to so far.
pub struct PrimApp {
    pub def: &'static PrimDef,
    pub args: Vec<Value>,
}

/// Immutable payload of tuples and constructors.
pub struct Fields(Vec<Value>);

impl Deref for Fields {
    type Target = [Value];
    fn deref(&self) -> &[Value] {
        &self.0
    }
}

impl From<Vec<Value>> for Fields {
    fn from(v: Vec<Value>) -> Fields {
        Fields(v)
    }
}

// ---------------------------------------------------------------------------
// Deferred destruction. Student code can build arbitrarily deep values
// (Peano towers, closure chains); dropping them recursively would overflow
// the host stack, so composite drops push their children onto a per-thread
// queue that is drained by the outermost drop.

#[allow(dead_code)] // payloads are only held so they can be dropped
enum Garbage {
    Value(Value),
    Binding(Arc<Binding>),
}

thread_local! {
    static DRAINING: Cell<bool> = const { Cell::new(false) };
    static PENDING: RefCell<Vec<Garbage>> = const { RefCell::new(Vec::new()) };
}

fn is_composite(v: &Value) -> bool {
    matches!(v, Value::Tuple(_) | Value::Ctor(..) | Value::List(_) | Value::Closure(_) | Value::Primitive(_))
}

fn defer(items: impl Iterator<Item = Garbage>) {
    let queued = PENDING.try_with(|p| {
        let mut p = p.borrow_mut();
        for g in items {
            p.push(g);
        }
    });
    if queued.is_err() || DRAINING.try_with(|d| d.replace(true)).unwrap_or(true) {
        return;
    }
    loop {
        let next = PENDING.with(|p| p.borrow_mut().pop());
        match next {
            Some(g) => drop(g),
            None => break,
        }
    }
    DRAINING.with(|d| d.set(false));
}

fn defer_values(vs: Vec<Value>) {
    if vs.iter().any(is_composite) {
        defer(vs.into_iter().filter(is_composite).map(Garbage::Value));
    }
}

impl Drop for Fields {
    fn drop(&mut self) {
        defer_values(std::mem::take(&mut self.0));
    }
}

impl Drop for PrimApp {
    fn drop(&mut self) {
        defer_values(std::mem::take(&mut self.args));
    }
}

impl Drop for Closure {
    fn drop(&mut self) {
        if let Some(b) = self.env.locals.take() {
            defer(std::iter::once(Garbage::Binding(b)));
        }
    }
}

impl Value {
    pub fn str(s: &str) -> Value {
        Value::Str(Arc::from(s.as_bytes()))
    }

    pub fn bytes(b: &[u8]) -> Value {
        Value::Str(Arc::from(b))
    }

    pub fn ctor(name: &str, args: Vec<Value>) -> Value {
        Value::Ctor(name.into(), Arc::new(args.into()))
    }

    pub fn tuple(items: Vec<Value>) -> Value {
        Value::Tuple(Arc::new(items.into()))
    }

    pub fn list(items: Vec<Value>) -> Value {
        Value::List(List::from_vec(items))
    }

    pub fn is_callable(&self) -> bool {
        matches!(self, Value::Closure(_) | Value::Primitive(_))
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Bool(_) => "bool",
            Value::Str(_) => "string",
            Value::Unit => "unit",
            Value::Tuple(_) => "tuple",
            Value::List(_) => "list",
            Value::Ctor(..) => "constructor",
            Value::Closure(_) | Value::Primitive(_) => "function",
            Value::Ref(_) => "ref",
            Value::Array(_) => "array",
            Value::Queue(_) => "queue",
            Value::Handle(_) => "channel handle",
            Value::Thread(_) => "thread",
            Value::Channel(_) => "event channel",
        }
    }

    /// Exception constructor name, if this value is a constructor.
    pub fn ctor_name(&self) -> Option<&str> {
        match self {
            Value::Ctor(n, _) => Some(n),
            _ => None,
        }
    }

    /// Structural equality for values that do not reference the heap.
    pub fn structural_eq(&self, other: &Value) -> Result<bool, CompareError> {
        Ok(compare_values(self, other, &|_| None, u64::MAX)?.0 == Ordering::Equal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum CompareError {
    #[error("functional values cannot be compared")]
    Incomparable,
    #[error("comparison budget exhausted")]
    Budget,
}

/// Total structural order, computed iteratively. `deref` resolves heap cells
/// so that refs and arrays compare by contents. At most `budget` node pairs
/// are visited; the number actually visited is returned with the ordering.
pub fn compare_values(
    a: &Value,
    b: &Value,
    deref: &dyn Fn(CellId) -> Option<Value>,
    budget: u64,
) -> Result<(Ordering, u64), CompareError> {
    use Value::*;
    fn rank(v: &Value) -> u8 {
        match v {
            Int(_) => 0,
            Bool(_) => 1,
            Str(_) => 2,
            Unit => 3,
            Tuple(_) => 4,
            List(_) => 5,
            Ctor(..) => 6,
            Ref(_) => 7,
            Array(_) => 8,
            Queue(_) => 9,
            Handle(_) => 10,
            Thread(_) => 11,
            Channel(_) => 12,
            Closure(_) | Primitive(_) => 13,
        }
    }
    let mut work = vec![(a.clone(), b.clone())];
    let mut visited = 0u64;
    while let Some((x, y)) = work.pop() {
        visited += 1;
        if visited > budget {
            return Err(CompareError::Budget);
        }
        let o = match (&x, &y) {
            (Closure(_) | Primitive(_), _) | (_, Closure(_) | Primitive(_)) => return Err(CompareError::Incomparable),
            (Int(p), Int(q)) => p.cmp(q),
            (Bool(p), Bool(q)) => p.cmp(q),
            (Str(p), Str(q)) => p.cmp(q),
            (Unit, Unit) => Ordering::Equal,
            (Tuple(p), Tuple(q)) => {
                let o = p.len().cmp(&q.len());
                if o == Ordering::Equal {
                    work.extend(p.iter().cloned().zip(q.iter().cloned()).rev());
                }
                o
            }
            (List(p), List(q)) => match (p.head_tail(), q.head_tail()) {
                (None, None) => Ordering::Equal,
                (None, Some(_)) => Ordering::Less,
                (Some(_), None) => Ordering::Greater,
                (Some((ph, pt)), Some((qh, qt))) => {
                    work.push((List(pt.clone()), List(qt.clone())));
                    work.push((ph.clone(), qh.clone()));
                    Ordering::Equal
                }
            },
            (Ctor(n, p), Ctor(m, q)) => {
                let o = n.cmp(m).then(p.len().cmp(&q.len()));
                if o == Ordering::Equal {
                    work.extend(p.iter().cloned().zip(q.iter().cloned()).rev());
                }
                o
            }
            (Ref(p), Ref(q)) => match (deref(*p), deref(*q)) {
                (Some(pv), Some(qv)) => {
                    work.push((pv, qv));
                    Ordering::Equal
                }
                _ => p.cmp(q),
            },
            (Array(p), Array(q)) => {
                let o = p.len().cmp(&q.len());
                if o == Ordering::Equal {
                    for (i, j) in p.iter().zip(q.iter()).rev() {
                        match (deref(*i), deref(*j)) {
                            (Some(pv), Some(qv)) => work.push((pv, qv)),
                            _ => work.push((Int(*i as i64), Int(*j as i64))),
                        }
                    }
                }
                o
            }
            (Queue(p), Queue(q)) => p.cmp(q),
            (Handle(p), Handle(q)) | (Thread(p), Thread(q)) | (Channel(p), Channel(q)) => p.cmp(q),
            _ => rank(&x).cmp(&rank(&y)),
        };
        if o != Ordering::Equal {
            return Ok((o, visited));
        }
    }
    Ok((Ordering::Equal, visited))
}

/// Persistent singly linked list with O(1) cons.
#[derive(Clone, Default)]
pub struct List(Option<Arc<ListNode>>);

pub struct ListNode {
    head: Value,
    tail: List,
}

impl Drop for ListNode {
    fn drop(&mut self) {
        let mut next = self.tail.0.take();
        while let Some(node) = next {
            match Arc::try_unwrap(node) {
                Ok(mut n) => {
                    next = n.tail.0.take();
                    let head = std::mem::replace(&mut n.head, Value::Unit);
                    if is_composite(&head) {
                        defer(std::iter::once(Garbage::Value(head)));
                    }
                }
                Err(_) => break,
            }
        }
        let head = std::mem::replace(&mut self.head, Value::Unit);
        if is_composite(&head) {
            defer(std::iter::once(Garbage::Value(head)));
        }
    }
}

impl List {
    pub fn nil() -> List {
        List(None)
    }

    pub fn cons(head: Value, tail: List) -> List {
        List(Some(Arc::new(ListNode { head, tail })))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_none()
    }

    pub fn head_tail(&self) -> Option<(&Value, &List)> {
        self.0.as_ref().map(|n| (&n.head, &n.tail))
    }

    pub fn iter(&self) -> ListIter<'_> {
        ListIter(self.0.as_deref())
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    /// Builds a list from elements given last-first.
    pub fn from_iter_rev(rev: impl IntoIterator<Item = Value>) -> List {
        let mut l = List::nil();
        for v in rev {
            l = List::cons(v, l);
        }
        l
    }

    pub fn from_vec(items: Vec<Value>) -> List {
        List::from_iter_rev(items.into_iter().rev())
    }

    pub fn to_vec(&self) -> Vec<Value> {
        self.iter().cloned().collect()
    }
}

pub struct ListIter<'a>(Option<&'a ListNode>);

impl<'a> Iterator for ListIter<'a> {
    type Item = &'a Value;
    fn next(&mut self) -> Option<&'a Value> {
        let n = self.0?;
        self.0 = n.tail.0.as_deref();
        Some(&n.head)
    }
}

/// Top-level scope: program globals, declared constructors and the prelude.
pub struct Scope {
    pub globals: HashMap<Name, Value>,
    pub ctors: HashMap<Name, usize>,
    pub prelude: Arc<Prelude>,
}

impl Scope {
    pub fn new(prelude: Arc<Prelude>) -> Scope {
        Scope { globals: HashMap::new(), ctors: HashMap::new(), prelude }
    }

    /// Copy of this scope, for extension by the next declaration.
    pub fn extend(&self) -> Scope {
        Scope { globals: self.globals.clone(), ctors: self.ctors.clone(), prelude: self.prelude.clone() }
    }

    pub fn ctor_arity(&self, name: &str) -> Option<usize> {
        if let Some(a) = self.ctors.get(name) {
            return Some(*a);
        }
        match self.prelude.get(name) {
            Some(PreludeBinding::Ctor { arity }) => Some(*arity),
            _ => None,
        }
    }
}

pub struct Binding {
    name: Name,
    value: Value,
    next: Option<Arc<Binding>>,
}

impl Drop for Binding {
    fn drop(&mut self) {
        let value = std::mem::replace(&mut self.value, Value::Unit);
        let next = self.next.take().map(Garbage::Binding);
        let value = is_composite(&value).then_some(Garbage::Value(value));
        if next.is_some() || value.is_some() {
            defer(next.into_iter().chain(value));
        }
    }
}

/// Lexical environment: a chain of local bindings over a shared scope.
#[derive(Clone)]
pub struct Env {
    locals: Option<Arc<Binding>>,
    pub scope: Arc<Scope>,
}

impl Env {
    pub fn new(scope: Arc<Scope>) -> Env {
        Env { locals: None, scope }
    }

    pub fn bind(&self, name: Name, value: Value) -> Env {
        Env { locals: Some(Arc::new(Binding { name, value, next: self.locals.clone() })), scope: self.scope.clone() }
    }

    pub fn lookup(&self, name: &str) -> Option<Value> {
        let mut cur = self.locals.as_deref();
        while let Some(b) = cur {
            if &*b.name == name {
                return Some(b.value.clone());
            }
            cur = b.next.as_deref();
        }
        if let Some(v) = self.scope.globals.get(name) {
            return Some(v.clone());
        }
        match self.scope.prelude.get(name) {
            Some(PreludeBinding::Value(v)) => Some(v.clone()),
            _ => None,
        }
    }
}

// Rendering is recursive, so it is cut off below a fixed nesting depth and
// after a fixed amount of output; both only matter for hostile values.
const RENDER_DEPTH: usize = 200;
const RENDER_CHARS: usize = 4096;

struct Render {
    out: String,
}

impl Render {
    fn full(&self) -> bool {
        self.out.len() >= RENDER_CHARS
    }

    fn push(&mut self, s: &str) {
        if !self.full() {
            self.out.push_str(s);
        }
    }

    fn value(&mut self, v: &Value, depth: usize) {
        if self.full() {
            return;
        }
        if depth > RENDER_DEPTH {
            self.push("...");
            return;
        }
        match v {
            Value::Int(n) => self.push(&n.to_string()),
            Value::Bool(b) => self.push(&b.to_string()),
            Value::Str(s) => self.push(&format!("{:?}", String::from_utf8_lossy(s))),
            Value::Unit => self.push("()"),
            Value::Tuple(vs) => {
                self.push("(");
                self.seq(vs, ", ", depth);
                self.push(")");
            }
            Value::List(l) => {
                self.push("[");
                for (i, x) in l.iter().enumerate() {
                    if self.full() {
                        break;
                    }
                    if i > 0 {
                        self.push("; ");
                    }
                    self.value(x, depth + 1);
                }
                self.push("]");
            }
            Value::Ctor(name, args) => {
                self.push(name);
                match args.len() {
                    0 => {}
                    1 => {
                        self.push(" ");
                        let a = &args[0];
                        let paren =
                            matches!(a, Value::Int(n) if *n < 0) || matches!(a, Value::Ctor(_, xs) if !xs.is_empty());
                        if paren {
                            self.push("(");
                        }
                        self.value(a, depth + 1);
                        if paren {
                            self.push(")");
                        }
                    }
                    _ => {
                        self.push(" (");
                        self.seq(args, ", ", depth);
                        self.push(")");
                    }
                }
            }
            Value::Closure(_) | Value::Primitive(_) => self.push("<fun>"),
            Value::Ref(id) => self.push(&format!("<ref #{id}>")),
            Value::Array(ids) => self.push(&format!("<array of {}>", ids.len())),
            Value::Queue(_) => self.push("<queue>"),
            Value::Handle(id) => self.push(&format!("<handle #{id}>")),
            Value::Thread(id) => self.push(&format!("<thread #{id}>")),
            Value::Channel(id) => self.push(&format!("<channel #{id}>")),
        }
    }

    fn seq(&mut self, vs: &[Value], sep: &str, depth: usize) {
        for (i, x) in vs.iter().enumerate() {
            if i > 0 {
                self.push(sep);
            }
            self.value(x, depth + 1);
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut r = Render { out: String::new() };
        r.value(self, 0);
        if r.full() {
            r.out.push_str("...");
        }
        f.write_str(&r.out)
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Structural equality; functions compare unequal.
impl PartialEq for Value {
    fn eq(&self, other: &Value) -> bool {
        self.structural_eq(other).unwrap_or(false)
    }
}
