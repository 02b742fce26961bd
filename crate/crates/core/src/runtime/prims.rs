//! Host implementations of every prelude function.
//!
//! Primitives only ever touch the executing [`Machine`]: its heap, mock
//! filesystem, output buffer and scheduler. None of them reach the host.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::sync::Arc;

use crate::vfs::{Mode, VfsError};

use super::machine::{ChannelState, Frame, HeapCell, Machine, Stop, Thread, ThreadState};
use super::value::{List, Value};
use super::ResourceKind;

pub(crate) enum PrimOut {
    Ret(Value),
    /// Apply a function in the calling thread (frames already pushed).
    Call(Value, Value),
    /// The thread blocked; its state has been set.
    Block,
    Yield,
}

pub(crate) enum Fault {
    Raise(Value),
    Stop(Stop),
}

impl From<Stop> for Fault {
    fn from(s: Stop) -> Fault {
        Fault::Stop(s)
    }
}

type PrimResult = Result<PrimOut, Fault>;
type PrimFn = fn(&mut Machine, &mut Thread, Vec<Value>) -> PrimResult;

pub struct PrimDef {
    pub name: &'static str,
    pub arity: usize,
    pub(crate) run: PrimFn,
}

impl std::fmt::Debug for PrimDef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "<prim {}/{}>", self.name, self.arity)
    }
}

pub fn lookup(name: &str) -> Option<&'static PrimDef> {
    PRIMS.iter().find(|p| p.name == name)
}

pub(crate) fn invalid_arg(msg: &str) -> Value {
    Value::ctor("Invalid_argument", vec![Value::str(msg)])
}

fn failure(msg: &str) -> Fault {
    Fault::Raise(Value::ctor("Failure", vec![Value::str(msg)]))
}

fn raise(name: &str) -> Fault {
    Fault::Raise(Value::ctor(name, vec![]))
}

fn type_err(prim: &str, expected: &str, got: &Value) -> Fault {
    let msg = format!("{prim}: expected {expected}, got {}", got.type_name());
    Fault::Raise(Value::ctor("Type_error", vec![Value::str(&msg)]))
}

fn int(prim: &str, v: &Value) -> Result<i64, Fault> {
    match v {
        Value::Int(n) => Ok(*n),
        other => Err(type_err(prim, "int", other)),
    }
}

fn boolean(prim: &str, v: &Value) -> Result<bool, Fault> {
    match v {
        Value::Bool(b) => Ok(*b),
        other => Err(type_err(prim, "bool", other)),
    }
}

fn string<'a>(prim: &str, v: &'a Value) -> Result<&'a [u8], Fault> {
    match v {
        Value::Str(s) => Ok(s),
        other => Err(type_err(prim, "string", other)),
    }
}

fn list<'a>(prim: &str, v: &'a Value) -> Result<&'a List, Fault> {
    match v {
        Value::List(l) => Ok(l),
        other => Err(type_err(prim, "list", other)),
    }
}

fn ret(v: Value) -> PrimResult {
    Ok(PrimOut::Ret(v))
}

/// Cell backing element `index` of `array`, or the exception to raise.
pub(crate) fn array_cell(array: &Value, index: &Value) -> Result<usize, Value> {
    let type_error = |what: &str, v: &Value| {
        Value::ctor("Type_error", vec![Value::str(&format!("array access: expected {what}, got {}", v.type_name()))])
    };
    let Value::Array(cells) = array else { return Err(type_error("array", array)) };
    let Value::Int(i) = index else { return Err(type_error("int", index)) };
    usize::try_from(*i).ok().and_then(|i| cells.get(i).copied()).ok_or_else(|| invalid_arg("index out of bounds"))
}

// -- arithmetic and comparison ----------------------------------------------

fn arith(name: &'static str, a: &[Value], op: fn(i64, i64) -> Option<i64>) -> PrimResult {
    let (x, y) = (int(name, &a[0])?, int(name, &a[1])?);
    op(x, y).map(|n| PrimOut::Ret(Value::Int(n))).ok_or_else(|| raise("Division_by_zero"))
}

fn p_add(_: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    arith("+", &a, |x, y| Some(x.wrapping_add(y)))
}
fn p_sub(_: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    arith("-", &a, |x, y| Some(x.wrapping_sub(y)))
}
fn p_mul(_: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    arith("*", &a, |x, y| Some(x.wrapping_mul(y)))
}
fn p_div(_: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    arith("/", &a, |x, y| (y != 0).then(|| x.wrapping_div(y)))
}
fn p_mod(_: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    arith("mod", &a, |x, y| (y != 0).then(|| x.wrapping_rem(y)))
}
fn p_neg(_: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    ret(Value::Int(int("~-", &a[0])?.wrapping_neg()))
}

fn compare_with(m: &mut Machine, a: &[Value], test: fn(Ordering) -> bool) -> PrimResult {
    let o = m.compare_charged(&a[0], &a[1])?;
    ret(Value::Bool(test(o)))
}

fn p_eq(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    compare_with(m, &a, |o| o == Ordering::Equal)
}
fn p_ne(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    compare_with(m, &a, |o| o != Ordering::Equal)
}
fn p_lt(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    compare_with(m, &a, |o| o == Ordering::Less)
}
fn p_le(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    compare_with(m, &a, |o| o != Ordering::Greater)
}
fn p_gt(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    compare_with(m, &a, |o| o == Ordering::Greater)
}
fn p_ge(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    compare_with(m, &a, |o| o != Ordering::Less)
}
fn p_not(_: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    ret(Value::Bool(!boolean("not", &a[0])?))
}

// -- strings and output -----------------------------------------------------

/// Charge for copying `n` bytes.
fn charge_bytes(m: &mut Machine, n: usize) -> Result<(), Fault> {
    m.charge(1 + n as u64 / 16).map_err(Fault::Stop)
}

fn p_concat(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    let (x, y) = (string("^", &a[0])?, string("^", &a[1])?);
    charge_bytes(m, x.len() + y.len())?;
    let mut out = Vec::with_capacity(x.len() + y.len());
    out.extend_from_slice(x);
    out.extend_from_slice(y);
    ret(Value::bytes(&out))
}

fn p_string_of_int(_: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    ret(Value::str(&int("string_of_int", &a[0])?.to_string()))
}

fn p_int_of_string(_: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    let s = string("int_of_string", &a[0])?;
    std::str::from_utf8(s)
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .map(|n| PrimOut::Ret(Value::Int(n)))
        .ok_or_else(|| failure("int_of_string"))
}

fn p_print_string(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    let s = string("print_string", &a[0])?;
    charge_bytes(m, s.len())?;
    m.stdout.extend_from_slice(s);
    ret(Value::Unit)
}

fn p_print_int(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    let n = int("print_int", &a[0])?;
    m.stdout.extend_from_slice(n.to_string().as_bytes());
    ret(Value::Unit)
}

fn p_print_newline(m: &mut Machine, _: &mut Thread, _: Vec<Value>) -> PrimResult {
    m.stdout.push(b'\n');
    ret(Value::Unit)
}

fn p_string_length(_: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    ret(Value::Int(string("String.length", &a[0])?.len() as i64))
}

fn p_string_sub(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    let s = string("String.sub", &a[0])?;
    let (start, len) = (int("String.sub", &a[1])?, int("String.sub", &a[2])?);
    let range = usize::try_from(start).ok().zip(usize::try_from(len).ok()).and_then(|(st, ln)| {
        let end = st.checked_add(ln)?;
        (end <= s.len()).then_some(st..end)
    });
    let Some(range) = range else {
        return Err(Fault::Raise(invalid_arg("String.sub / Bytes.sub")));
    };
    charge_bytes(m, range.len())?;
    ret(Value::bytes(&s[range]))
}

fn p_string_concat(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    let sep = string("String.concat", &a[0])?;
    let parts = list("String.concat", &a[1])?;
    let mut out = Vec::new();
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            out.extend_from_slice(sep);
        }
        out.extend_from_slice(string("String.concat", p)?);
        charge_bytes(m, out.len().min(64))?;
    }
    charge_bytes(m, out.len())?;
    ret(Value::bytes(&out))
}

// -- references ---------------------------------------------------------------

fn p_ref(m: &mut Machine, _: &mut Thread, mut a: Vec<Value>) -> PrimResult {
    let v = a.pop().expect("arity 1");
    let id = m.alloc([HeapCell::Val(v)], 1)?;
    ret(Value::Ref(id))
}

fn p_deref(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    match &a[0] {
        Value::Ref(id) => ret(m.deref(*id).unwrap_or(Value::Unit)),
        other => Err(type_err("!", "ref", other)),
    }
}

fn p_assign(m: &mut Machine, _: &mut Thread, mut a: Vec<Value>) -> PrimResult {
    let v = a.pop().expect("arity 2");
    match &a[0] {
        Value::Ref(id) => {
            m.cells[*id] = HeapCell::Val(v);
            ret(Value::Unit)
        }
        other => Err(type_err(":=", "ref", other)),
    }
}

// -- lists ------------------------------------------------------------------

fn p_list_map(_: &mut Machine, t: &mut Thread, a: Vec<Value>) -> PrimResult {
    let f = a[0].clone();
    let l = list("List.map", &a[1])?;
    match l.head_tail() {
        None => ret(Value::List(List::nil())),
        Some((h, tl)) => {
            t.stack.push(Frame::Map { f: f.clone(), rest: tl.clone(), acc: Vec::new() });
            Ok(PrimOut::Call(f, h.clone()))
        }
    }
}

fn p_list_filter(_: &mut Machine, t: &mut Thread, a: Vec<Value>) -> PrimResult {
    let f = a[0].clone();
    let l = list("List.filter", &a[1])?;
    match l.head_tail() {
        None => ret(Value::List(List::nil())),
        Some((h, tl)) => {
            t.stack.push(Frame::Filter { f: f.clone(), item: h.clone(), rest: tl.clone(), acc: Vec::new() });
            Ok(PrimOut::Call(f, h.clone()))
        }
    }
}

fn p_list_fold_left(_: &mut Machine, t: &mut Thread, a: Vec<Value>) -> PrimResult {
    let f = a[0].clone();
    let l = list("List.fold_left", &a[2])?;
    match l.head_tail() {
        None => ret(a[1].clone()),
        Some((h, tl)) => {
            t.stack.push(Frame::Fold { f: f.clone(), rest: tl.clone() });
            t.stack.push(Frame::ApplyRest { args: vec![h.clone()] });
            Ok(PrimOut::Call(f, a[1].clone()))
        }
    }
}

fn p_list_iter(_: &mut Machine, t: &mut Thread, a: Vec<Value>) -> PrimResult {
    let f = a[0].clone();
    let l = list("List.iter", &a[1])?;
    match l.head_tail() {
        None => ret(Value::Unit),
        Some((h, tl)) => {
            t.stack.push(Frame::Iter { f: f.clone(), rest: tl.clone() });
            t.stack.push(Frame::Discard);
            Ok(PrimOut::Call(f, h.clone()))
        }
    }
}

fn p_list_rev(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    let l = list("List.rev", &a[0])?;
    m.charge(l.len() as u64)?;
    ret(Value::List(List::from_iter_rev(l.iter().cloned())))
}

fn p_list_length(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    let n = list("List.length", &a[0])?.len();
    m.charge(n as u64)?;
    ret(Value::Int(n as i64))
}

fn p_list_append(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    let (x, y) = (list("List.append", &a[0])?, list("List.append", &a[1])?);
    m.charge(x.len() as u64)?;
    ret(Value::List(x.append_to(y)))
}

fn p_list_nth(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    let l = list("List.nth", &a[0])?;
    let n = int("List.nth", &a[1])?;
    if n < 0 {
        return Err(Fault::Raise(invalid_arg("List.nth")));
    }
    m.charge(1 + n as u64)?;
    l.iter().nth(n as usize).cloned().map(PrimOut::Ret).ok_or_else(|| failure("nth"))
}

fn p_list_hd(_: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    match list("List.hd", &a[0])?.head_tail() {
        Some((h, _)) => ret(h.clone()),
        None => Err(failure("hd")),
    }
}

fn p_list_tl(_: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    match list("List.tl", &a[0])?.head_tail() {
        Some((_, t)) => ret(Value::List(t.clone())),
        None => Err(failure("tl")),
    }
}

impl List {
    /// `self @ tail`, copying the cells of `self`.
    fn append_to(&self, tail: &List) -> List {
        let items = self.to_vec();
        let mut out = tail.clone();
        for v in items.into_iter().rev() {
            out = List::cons(v, out);
        }
        out
    }
}

// -- arrays -----------------------------------------------------------------

fn p_array_make(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    let n = int("Array.make", &a[0])?;
    let Ok(n) = usize::try_from(n) else {
        return Err(Fault::Raise(invalid_arg("Array.make")));
    };
    if n as u64 > m.limits.max_heap_cells {
        return Err(Fault::Stop(Stop::Resource { kind: ResourceKind::Heap, step: m.step_index() }));
    }
    m.charge(n as u64)?;
    let v = a[1].clone();
    let first = m.alloc((0..n).map(|_| HeapCell::Val(v.clone())), n)?;
    ret(Value::Array((first..first + n).collect()))
}

fn p_array_get(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    let id = array_cell(&a[0], &a[1]).map_err(Fault::Raise)?;
    ret(m.deref(id).unwrap_or(Value::Unit))
}

fn p_array_set(m: &mut Machine, _: &mut Thread, mut a: Vec<Value>) -> PrimResult {
    let v = a.pop().expect("arity 3");
    let id = array_cell(&a[0], &a[1]).map_err(Fault::Raise)?;
    m.cells[id] = HeapCell::Val(v);
    ret(Value::Unit)
}

fn array<'a>(prim: &str, v: &'a Value) -> Result<&'a Arc<[usize]>, Fault> {
    match v {
        Value::Array(cells) => Ok(cells),
        other => Err(type_err(prim, "array", other)),
    }
}

fn p_array_length(_: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    ret(Value::Int(array("Array.length", &a[0])?.len() as i64))
}

fn p_array_to_list(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    let cells = array("Array.to_list", &a[0])?;
    m.charge(cells.len() as u64)?;
    let items: Vec<Value> = cells.iter().map(|id| m.deref(*id).unwrap_or(Value::Unit)).collect();
    ret(Value::List(List::from_vec(items)))
}

fn p_array_of_list(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    let items = list("Array.of_list", &a[0])?.to_vec();
    let n = items.len();
    m.charge(n as u64)?;
    let first = m.alloc(items.into_iter().map(HeapCell::Val), n)?;
    ret(Value::Array((first..first + n).collect()))
}

// -- queues -----------------------------------------------------------------

fn queue<'a>(m: &'a mut Machine, prim: &str, v: &Value) -> Result<&'a mut VecDeque<Value>, Fault> {
    match v {
        Value::Queue(id) => match &mut m.cells[*id] {
            HeapCell::Queue(q) => Ok(q),
            HeapCell::Val(_) => Err(type_err(prim, "queue", v)),
        },
        other => Err(type_err(prim, "queue", other)),
    }
}

fn p_queue_create(m: &mut Machine, _: &mut Thread, _: Vec<Value>) -> PrimResult {
    let id = m.alloc([HeapCell::Queue(VecDeque::new())], 1)?;
    ret(Value::Queue(id))
}

fn p_queue_push(m: &mut Machine, _: &mut Thread, mut a: Vec<Value>) -> PrimResult {
    let q = a.pop().expect("arity 2");
    let v = a.pop().expect("arity 2");
    queue(m, "Queue.push", &q)?.push_back(v);
    ret(Value::Unit)
}

fn p_queue_pop(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    queue(m, "Queue.pop", &a[0])?.pop_front().map(PrimOut::Ret).ok_or_else(|| failure("Queue.pop: empty queue"))
}

fn p_queue_is_empty(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    let empty = queue(m, "Queue.is_empty", &a[0])?.is_empty();
    ret(Value::Bool(empty))
}

// -- mock IO ------------------------------------------------------------------

fn io_fault(e: VfsError) -> Fault {
    match e {
        VfsError::EndOfFile => raise("End_of_file"),
        other => Fault::Raise(Value::ctor("Io_error", vec![Value::str(&other.to_string())])),
    }
}

fn handle(prim: &str, v: &Value) -> Result<u64, Fault> {
    match v {
        Value::Handle(id) => Ok(*id),
        other => Err(type_err(prim, "channel handle", other)),
    }
}

fn open(m: &mut Machine, prim: &str, a: &[Value], mode: Mode) -> PrimResult {
    let path = String::from_utf8_lossy(string(prim, &a[0])?).into_owned();
    m.vfs.set_clock(m.step_index());
    let id = m.vfs.open(&path, mode).map_err(io_fault)?;
    ret(Value::Handle(id))
}

fn p_open_in(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    open(m, "open_in", &a, Mode::Read)
}

fn p_open_out(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    open(m, "open_out", &a, Mode::Write)
}

fn p_input_line(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    let id = handle("input_line", &a[0])?;
    m.vfs.set_clock(m.step_index());
    let line = m.vfs.read_line(id).map_err(io_fault)?;
    charge_bytes(m, line.len())?;
    ret(Value::bytes(&line))
}

fn p_output_string(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    let id = handle("output_string", &a[0])?;
    let s = string("output_string", &a[1])?;
    charge_bytes(m, s.len())?;
    m.vfs.set_clock(m.step_index());
    m.vfs.write(id, s).map_err(io_fault)?;
    ret(Value::Unit)
}

fn p_close(m: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    let id = handle("close", &a[0])?;
    m.vfs.set_clock(m.step_index());
    m.vfs.close(id).map_err(io_fault)?;
    ret(Value::Unit)
}

// -- threads and events -------------------------------------------------------

fn p_thread_create(m: &mut Machine, t: &mut Thread, a: Vec<Value>) -> PrimResult {
    if m.live_workers(t) + 1 > m.limits.max_live_threads {
        return Err(Fault::Stop(Stop::Resource { kind: ResourceKind::Threads, step: m.step_index() }));
    }
    let tid = m.spawn(t, a[0].clone(), a[1].clone());
    ret(Value::Thread(tid))
}

fn p_thread_join(m: &mut Machine, t: &mut Thread, a: Vec<Value>) -> PrimResult {
    let Value::Thread(target) = a[0] else {
        return Err(type_err("Thread.join", "thread", &a[0]));
    };
    match m.thread_finished(target) {
        Some(true) => {
            let step = m.step_index();
            m.registry.events.push(super::ThreadEvent::Joined { joiner: t.tid, joinee: target, step });
            ret(Value::Unit)
        }
        Some(false) => {
            t.state = ThreadState::BlockedJoin(target);
            Ok(PrimOut::Block)
        }
        None if target == t.tid => {
            t.state = ThreadState::BlockedJoin(target);
            Ok(PrimOut::Block)
        }
        None => Err(Fault::Raise(invalid_arg("Thread.join: unknown thread"))),
    }
}

fn p_thread_yield(_: &mut Machine, _: &mut Thread, _: Vec<Value>) -> PrimResult {
    Ok(PrimOut::Yield)
}

fn p_new_channel(m: &mut Machine, _: &mut Thread, _: Vec<Value>) -> PrimResult {
    m.channels.push(ChannelState::default());
    ret(Value::Channel(m.channels.len() as u64 - 1))
}

fn channel<'a>(m: &'a mut Machine, prim: &str, v: &Value) -> Result<&'a mut ChannelState, Fault> {
    match v {
        Value::Channel(id) => Ok(&mut m.channels[*id as usize]),
        other => Err(type_err(prim, "event channel", other)),
    }
}

fn p_send(m: &mut Machine, t: &mut Thread, mut a: Vec<Value>) -> PrimResult {
    let v = a.pop().expect("arity 2");
    let ch = channel(m, "Event.send", &a[0])?;
    match ch.receivers.pop_front() {
        Some(receiver) => {
            m.wake(receiver, v);
            ret(Value::Unit)
        }
        None => {
            ch.senders.push_back((t.tid, v));
            t.state = ThreadState::BlockedSend;
            Ok(PrimOut::Block)
        }
    }
}

fn p_receive(m: &mut Machine, t: &mut Thread, a: Vec<Value>) -> PrimResult {
    let ch = channel(m, "Event.receive", &a[0])?;
    match ch.senders.pop_front() {
        Some((sender, v)) => {
            m.wake(sender, Value::Unit);
            ret(v)
        }
        None => {
            ch.receivers.push_back(t.tid);
            t.state = ThreadState::BlockedRecv;
            Ok(PrimOut::Block)
        }
    }
}

// -- misc -------------------------------------------------------------------

fn p_failwith(_: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    let msg = string("failwith", &a[0])?;
    Err(Fault::Raise(Value::ctor("Failure", vec![Value::bytes(msg)])))
}

fn pair<'a>(prim: &str, v: &'a Value) -> Result<&'a [Value], Fault> {
    match v {
        Value::Tuple(f) if f.len() == 2 => Ok(f),
        other => Err(type_err(prim, "pair", other)),
    }
}

fn p_fst(_: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    ret(pair("fst", &a[0])?[0].clone())
}

fn p_snd(_: &mut Machine, _: &mut Thread, a: Vec<Value>) -> PrimResult {
    ret(pair("snd", &a[0])?[1].clone())
}

fn p_ignore(_: &mut Machine, _: &mut Thread, _: Vec<Value>) -> PrimResult {
    ret(Value::Unit)
}

macro_rules! prim {
    ($name:expr, $arity:expr, $run:expr) => {
        PrimDef { name: $name, arity: $arity, run: $run }
    };
}

pub static PRIMS: &[PrimDef] = &[
    prim!("+", 2, p_add),
    prim!("-", 2, p_sub),
    prim!("*", 2, p_mul),
    prim!("/", 2, p_div),
    prim!("mod", 2, p_mod),
    prim!("~-", 1, p_neg),
    prim!("=", 2, p_eq),
    prim!("<>", 2, p_ne),
    prim!("<", 2, p_lt),
    prim!("<=", 2, p_le),
    prim!(">", 2, p_gt),
    prim!(">=", 2, p_ge),
    prim!("not", 1, p_not),
    prim!("^", 2, p_concat),
    prim!("string_of_int", 1, p_string_of_int),
    prim!("int_of_string", 1, p_int_of_string),
    prim!("print_string", 1, p_print_string),
    prim!("print_int", 1, p_print_int),
    prim!("print_newline", 1, p_print_newline),
    prim!("failwith", 1, p_failwith),
    prim!("fst", 1, p_fst),
    prim!("snd", 1, p_snd),
    prim!("ignore", 1, p_ignore),
    prim!("ref", 1, p_ref),
    prim!("!", 1, p_deref),
    prim!(":=", 2, p_assign),
    prim!("List.map", 2, p_list_map),
    prim!("List.filter", 2, p_list_filter),
    prim!("List.fold_left", 3, p_list_fold_left),
    prim!("List.iter", 2, p_list_iter),
    prim!("List.rev", 1, p_list_rev),
    prim!("List.length", 1, p_list_length),
    prim!("List.append", 2, p_list_append),
    prim!("List.nth", 2, p_list_nth),
    prim!("List.hd", 1, p_list_hd),
    prim!("List.tl", 1, p_list_tl),
    prim!("Array.make", 2, p_array_make),
    prim!("Array.get", 2, p_array_get),
    prim!("Array.set", 3, p_array_set),
    prim!("Array.length", 1, p_array_length),
    prim!("Array.to_list", 1, p_array_to_list),
    prim!("Array.of_list", 1, p_array_of_list),
    prim!("Queue.create", 1, p_queue_create),
    prim!("Queue.push", 2, p_queue_push),
    prim!("Queue.pop", 1, p_queue_pop),
    prim!("Queue.is_empty", 1, p_queue_is_empty),
    prim!("String.length", 1, p_string_length),
    prim!("String.sub", 3, p_string_sub),
    prim!("String.concat", 2, p_string_concat),
    prim!("open_in", 1, p_open_in),
    prim!("open_out", 1, p_open_out),
    prim!("input_line", 1, p_input_line),
    prim!("output_string", 2, p_output_string),
    prim!("close_in", 1, p_close),
    prim!("close_out", 1, p_close),
    prim!("Thread.create", 2, p_thread_create),
    prim!("Thread.join", 1, p_thread_join),
    prim!("Thread.yield", 1, p_thread_yield),
    prim!("Event.new_channel", 1, p_new_channel),
    prim!("Event.send", 2, p_send),
    prim!("Event.receive", 1, p_receive),
];
