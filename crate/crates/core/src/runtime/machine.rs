use std::cmp::Ordering;
use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;
use std::time::Instant;

use crate::syntax::{Arm, DeclKind, Expr, ExprKind, Name, Pattern, PatternKind, Program, Span};
use crate::vfs::VfsState;

use super::prelude::{primitive, Prelude};
use super::prims::{self, Fault, PrimOut};
use super::value::{compare_values, Closure, CompareError, List, PrimApp, Scope, Value};
use super::{Env, Limits, ResourceKind, RunOutcome, RunResult, ThreadEvent, ThreadRegistry};

/// Why a run stopped without producing a value.
#[derive(Debug, Clone)]
pub enum Stop {
    /// Uncaught MiniML exception in the main thread.
    Exception {
        exn: Value,
        summary: String,
    },
    Resource {
        kind: ResourceKind,
        step: u64,
    },
    Deadlock {
        blocked: Vec<u64>,
    },
}

impl Stop {
    pub fn into_result(self) -> RunResult {
        match self {
            Stop::Exception { exn, summary } => RunResult::LangTrap { exception: exn, summary },
            Stop::Resource { kind, step } => RunResult::ResourceTrap { kind, step },
            Stop::Deadlock { blocked } => RunResult::Deadlock { blocked },
        }
    }
}

/// Result of loading a program's declarations.
pub struct ProgramRun {
    /// Scope holding every binding established before evaluation stopped.
    pub scope: Arc<Scope>,
    pub failure: Option<DeclFailure>,
}

pub struct DeclFailure {
    /// Index of the declaration whose evaluation stopped.
    pub index: usize,
    pub name: Option<Name>,
    pub stop: Stop,
}

pub(crate) enum Ctrl {
    Eval(Arc<Expr>, Env),
    Ret(Value),
    Raise(Value),
    Apply(Value, Value),
    Blocked,
}

pub(crate) enum Frame {
    /// Marks a closure activation; restores the caller's trust on return.
    Call {
        trusted: bool,
    },
    AppFn {
        arg: Arc<Expr>,
        env: Env,
    },
    AppArg {
        func: Value,
    },
    /// Further arguments to apply to the returned function, last one first.
    ApplyRest {
        args: Vec<Value>,
    },
    Let {
        name: Name,
        body: Arc<Expr>,
        env: Env,
    },
    If {
        node: Arc<Expr>,
        env: Env,
    },
    Match {
        node: Arc<Expr>,
        env: Env,
    },
    Try {
        node: Arc<Expr>,
        env: Env,
    },
    Seq {
        second: Arc<Expr>,
        env: Env,
    },
    Collect {
        node: Arc<Expr>,
        env: Env,
        vals: Vec<Value>,
    },
    WhileCond {
        node: Arc<Expr>,
        env: Env,
    },
    WhileBody {
        node: Arc<Expr>,
        env: Env,
    },
    ForBody {
        node: Arc<Expr>,
        env: Env,
        next: i128,
        hi: i128,
    },
    Raise,
    And {
        rhs: Arc<Expr>,
        env: Env,
    },
    Or {
        rhs: Arc<Expr>,
        env: Env,
    },
    Map {
        f: Value,
        rest: List,
        acc: Vec<Value>,
    },
    Filter {
        f: Value,
        item: Value,
        rest: List,
        acc: Vec<Value>,
    },
    Fold {
        f: Value,
        rest: List,
    },
    Iter {
        f: Value,
        rest: List,
    },
    Discard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ThreadState {
    Runnable,
    BlockedJoin(u64),
    BlockedSend,
    BlockedRecv,
    Finished,
}

pub(crate) struct Thread {
    pub tid: u64,
    pub state: ThreadState,
    pub ctrl: Ctrl,
    pub stack: Vec<Frame>,
    pub depth: usize,
    pub trusted: bool,
    pub yielded: bool,
    last_span: Span,
    raise_span: Span,
}

impl Thread {
    fn new(tid: u64, ctrl: Ctrl, trusted: bool) -> Thread {
        Thread {
            tid,
            state: ThreadState::Runnable,
            ctrl,
            stack: Vec::new(),
            depth: 0,
            trusted,
            yielded: false,
            last_span: Span::default(),
            raise_span: Span::default(),
        }
    }

    fn placeholder() -> Thread {
        let mut t = Thread::new(u64::MAX, Ctrl::Blocked, true);
        t.state = ThreadState::Finished;
        t
    }

    pub(crate) fn raise(&mut self, exn: Value) {
        self.raise_span = self.last_span;
        self.ctrl = Ctrl::Raise(exn);
    }
}

pub(crate) enum HeapCell {
    Val(Value),
    Queue(VecDeque<Value>),
}

#[derive(Default)]
pub(crate) struct ChannelState {
    pub senders: VecDeque<(u64, Value)>,
    pub receivers: VecDeque<u64>,
}

enum SliceEnd {
    Finished(Result<Value, Value>),
    Paused,
}

/// One interpreter instance: heap, mock filesystem, output buffer, thread
/// registry and budgets. Several runs (declarations, harness calls) may share
/// a machine; each run gets fresh step and heap budgets.
pub struct Machine {
    pub vfs: VfsState,
    pub limits: Limits,
    pub(crate) cells: Vec<HeapCell>,
    pub(crate) channels: Vec<ChannelState>,
    pub(crate) threads: Vec<Thread>,
    pub(crate) registry: ThreadRegistry,
    pub(crate) stdout: Vec<u8>,
    next_tid: u64,
    run_steps: u64,
    run_heap: u64,
    total_steps: u64,
    max_depth: usize,
    prim_calls: BTreeMap<&'static str, u64>,
    deadline: Option<Instant>,
}

impl Machine {
    pub fn new(vfs: VfsState, limits: Limits) -> Machine {
        Machine {
            vfs,
            limits,
            cells: Vec::new(),
            channels: Vec::new(),
            threads: Vec::new(),
            registry: ThreadRegistry::default(),
            stdout: Vec::new(),
            next_tid: 1,
            run_steps: 0,
            run_heap: 0,
            total_steps: 0,
            max_depth: 0,
            prim_calls: BTreeMap::new(),
            deadline: None,
        }
    }

    /// Wall-clock limit for everything this machine still runs.
    pub fn set_deadline(&mut self, deadline: Option<Instant>) {
        self.deadline = deadline;
    }

    pub fn stdout(&self) -> &[u8] {
        &self.stdout
    }

    pub fn registry(&self) -> &ThreadRegistry {
        &self.registry
    }

    pub fn steps_used(&self) -> u64 {
        self.total_steps
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    /// Primitive invocations made while untrusted code was running.
    pub fn untrusted_prim_calls(&self) -> &BTreeMap<&'static str, u64> {
        &self.prim_calls
    }

    /// Packages a run result together with the machine's observable state.
    pub fn outcome(&self, result: Result<Value, Stop>) -> RunOutcome {
        RunOutcome {
            result: match result {
                Ok(v) => RunResult::Done(v),
                Err(s) => s.into_result(),
            },
            registry: self.registry.clone(),
            vfs_report: self.vfs.inspect(),
            stdout: self.stdout.clone(),
            steps_used: self.total_steps,
            max_depth: self.max_depth,
            prim_calls: self.prim_calls.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    // -- public entry points ------------------------------------------------

    /// Evaluates the declarations of `p` in order on top of `prelude`.
    pub fn load_program(&mut self, p: &Program, prelude: Arc<Prelude>, trusted: bool) -> ProgramRun {
        self.load_program_in(p, Arc::new(Scope::new(prelude)), trusted)
    }

    /// Like [`Machine::load_program`], extending an existing scope. All
    /// declarations share one step budget.
    pub fn load_program_in(&mut self, p: &Program, base: Arc<Scope>, trusted: bool) -> ProgramRun {
        self.reset_budgets();
        let mut scope = base;
        for (index, d) in p.decls.iter().enumerate() {
            match &d.kind {
                DeclKind::Type { ctors, .. } => {
                    let mut next = scope.extend();
                    for c in ctors {
                        next.ctors.insert(c.name.clone(), c.arity);
                    }
                    scope = Arc::new(next);
                }
                DeclKind::Let { recursive, name, expr } => {
                    let env = Env::new(scope.clone());
                    let ctrl = match (&expr.kind, recursive) {
                        (ExprKind::Lambda { param, body }, true) => Ctrl::Ret(Value::Closure(Arc::new(Closure {
                            param: param.clone(),
                            body: body.clone(),
                            env,
                            rec_name: Some(name.clone()),
                            trusted,
                        }))),
                        _ => Ctrl::Eval(expr.clone(), env),
                    };
                    match self.run(Thread::new(0, ctrl, trusted)) {
                        Ok(v) => {
                            let mut next = scope.extend();
                            next.globals.insert(name.clone(), v);
                            scope = Arc::new(next);
                        }
                        Err(stop) => {
                            return ProgramRun {
                                scope,
                                failure: Some(DeclFailure { index, name: Some(name.clone()), stop }),
                            }
                        }
                    }
                }
                DeclKind::Native { name, primitive: prim } => match prims::lookup(prim) {
                    Some(def) => {
                        let mut next = scope.extend();
                        next.globals.insert(name.clone(), primitive(def));
                        scope = Arc::new(next);
                    }
                    None => {
                        let exn =
                            Value::ctor("Invalid_argument", vec![Value::str(&format!("unknown primitive {prim}"))]);
                        let summary = format!("{exn} raised at {}", d.span);
                        return ProgramRun {
                            scope,
                            failure: Some(DeclFailure {
                                index,
                                name: Some(name.clone()),
                                stop: Stop::Exception { exn, summary },
                            }),
                        };
                    }
                },
            }
        }
        ProgramRun { scope, failure: None }
    }

    /// Evaluates an expression under fresh budgets.
    pub fn eval(&mut self, e: &Arc<Expr>, env: &Env, trusted: bool) -> Result<Value, Stop> {
        self.reset_budgets();
        self.run(Thread::new(0, Ctrl::Eval(e.clone(), env.clone()), trusted))
    }

    /// Applies `f` to `args` (curried) under fresh budgets.
    pub fn call(&mut self, f: &Value, args: &[Value], trusted: bool) -> Result<Value, Stop> {
        self.reset_budgets();
        let Some((first, rest)) = args.split_first() else {
            return Ok(f.clone());
        };
        let mut t = Thread::new(0, Ctrl::Apply(f.clone(), first.clone()), trusted);
        if !rest.is_empty() {
            t.stack.push(Frame::ApplyRest { args: rest.iter().rev().cloned().collect() });
        }
        self.run(t)
    }

    /// Structural comparison resolving heap cells, without step accounting.
    pub fn compare(&self, a: &Value, b: &Value) -> Result<Ordering, CompareError> {
        compare_values(a, b, &|id| self.deref(id), self.limits.max_steps).map(|(o, _)| o)
    }

    pub fn deref(&self, id: usize) -> Option<Value> {
        match self.cells.get(id) {
            Some(HeapCell::Val(v)) => Some(v.clone()),
            _ => None,
        }
    }

    // -- budgets ------------------------------------------------------------

    fn reset_budgets(&mut self) {
        self.run_steps = 0;
        self.run_heap = 0;
    }

    fn tick(&mut self) -> Result<(), Stop> {
        self.charge(1)
    }

    /// Counts `n` reduction steps against the current run.
    pub(crate) fn charge(&mut self, n: u64) -> Result<(), Stop> {
        let before = self.total_steps;
        self.run_steps += n;
        self.total_steps += n;
        if self.run_steps > self.limits.max_steps {
            return Err(Stop::Resource { kind: ResourceKind::Steps, step: self.total_steps });
        }
        if let Some(deadline) = self.deadline {
            if before >> 10 != self.total_steps >> 10 && Instant::now() >= deadline {
                return Err(Stop::Resource { kind: ResourceKind::WallClock, step: self.total_steps });
            }
        }
        Ok(())
    }

    pub(crate) fn remaining_steps(&self) -> u64 {
        self.limits.max_steps.saturating_sub(self.run_steps)
    }

    pub(crate) fn step_index(&self) -> u64 {
        self.total_steps
    }

    /// Reserves heap cells, trapping when the budget is exceeded.
    pub(crate) fn alloc(&mut self, init: impl IntoIterator<Item = HeapCell>, count: usize) -> Result<usize, Stop> {
        self.run_heap += count as u64;
        if self.run_heap > self.limits.max_heap_cells {
            return Err(Stop::Resource { kind: ResourceKind::Heap, step: self.total_steps });
        }
        let first = self.cells.len();
        self.cells.extend(init);
        Ok(first)
    }

    /// Budgeted structural comparison used by the comparison primitives.
    pub(crate) fn compare_charged(&mut self, a: &Value, b: &Value) -> Result<Ordering, Fault> {
        let budget = self.remaining_steps();
        let result = compare_values(a, b, &|id| self.deref(id), budget);
        match result {
            Ok((o, visited)) => {
                self.charge(visited)?;
                Ok(o)
            }
            Err(CompareError::Incomparable) => Err(Fault::Raise(prims::invalid_arg("compare: functional value"))),
            Err(CompareError::Budget) => {
                Err(Fault::Stop(Stop::Resource { kind: ResourceKind::Steps, step: self.total_steps }))
            }
        }
    }

    pub(crate) fn log_prim(&mut self, name: &'static str) {
        *self.prim_calls.entry(name).or_default() += 1;
    }

    // -- threads ------------------------------------------------------------

    pub(crate) fn live_workers(&self, current: &Thread) -> usize {
        let others = self.threads.iter().filter(|t| t.tid != 0 && t.state != ThreadState::Finished).count();
        others + usize::from(current.tid != 0)
    }

    pub(crate) fn spawn(&mut self, parent: &Thread, f: Value, arg: Value) -> u64 {
        let tid = self.next_tid;
        self.next_tid += 1;
        self.threads.push(Thread::new(tid, Ctrl::Apply(f, arg), parent.trusted));
        self.registry.events.push(ThreadEvent::Spawned { tid, parent: parent.tid, step: self.total_steps });
        tid
    }

    pub(crate) fn thread_finished(&self, tid: u64) -> Option<bool> {
        self.threads.iter().find(|t| t.tid == tid).map(|t| t.state == ThreadState::Finished)
    }

    /// Resumes a blocked thread with `v` as the result of its blocking call.
    pub(crate) fn wake(&mut self, tid: u64, v: Value) {
        if let Some(t) = self.threads.iter_mut().find(|t| t.tid == tid) {
            t.state = ThreadState::Runnable;
            t.ctrl = Ctrl::Ret(v);
        }
    }

    fn run(&mut self, main: Thread) -> Result<Value, Stop> {
        self.threads.clear();
        self.threads.push(main);
        let result = self.schedule();
        self.threads.clear();
        self.channels.iter_mut().for_each(|c| *c = ChannelState::default());
        result
    }

    fn schedule(&mut self) -> Result<Value, Stop> {
        let mut cur = 0;
        loop {
            let mut t = std::mem::replace(&mut self.threads[cur], Thread::placeholder());
            let end = self.run_slice(&mut t);
            let tid = t.tid;
            let raise_span = t.raise_span;
            match end {
                Err(stop) => return Err(stop),
                Ok(SliceEnd::Paused) => self.threads[cur] = t,
                Ok(SliceEnd::Finished(result)) => {
                    t.state = ThreadState::Finished;
                    t.stack = Vec::new();
                    self.threads[cur] = t;
                    if cur == 0 {
                        return result.map_err(|exn| {
                            let summary = format!("{exn} raised at {raise_span}");
                            Stop::Exception { exn, summary }
                        });
                    }
                    if let Err(exn) = result {
                        let msg = format!("Thread {tid} killed on uncaught exception {exn}\n");
                        self.stdout.extend_from_slice(msg.as_bytes());
                    }
                    let step = self.total_steps;
                    self.registry.events.push(ThreadEvent::Completed { tid, step });
                    let joiners: Vec<u64> = self
                        .threads
                        .iter()
                        .filter(|j| j.state == ThreadState::BlockedJoin(tid))
                        .map(|j| j.tid)
                        .collect();
                    for j in joiners {
                        self.registry.events.push(ThreadEvent::Joined { joiner: j, joinee: tid, step });
                        self.wake(j, Value::Unit);
                    }
                }
            }
            let n = self.threads.len();
            match (1..=n).map(|k| (cur + k) % n).find(|&i| self.threads[i].state == ThreadState::Runnable) {
                Some(i) => cur = i,
                None => {
                    let blocked =
                        self.threads.iter().filter(|t| t.state != ThreadState::Finished).map(|t| t.tid).collect();
                    return Err(Stop::Deadlock { blocked });
                }
            }
        }
    }

    fn run_slice(&mut self, t: &mut Thread) -> Result<SliceEnd, Stop> {
        let mut budget = self.limits.slice_steps;
        loop {
            if t.yielded {
                t.yielded = false;
                return Ok(SliceEnd::Paused);
            }
            match std::mem::replace(&mut t.ctrl, Ctrl::Blocked) {
                Ctrl::Eval(e, env) => {
                    if budget == 0 {
                        t.ctrl = Ctrl::Eval(e, env);
                        return Ok(SliceEnd::Paused);
                    }
                    budget -= 1;
                    self.tick()?;
                    t.last_span = e.span;
                    self.eval_node(t, e, env)?;
                }
                Ctrl::Ret(v) => match t.stack.pop() {
                    None => return Ok(SliceEnd::Finished(Ok(v))),
                    Some(frame) => self.resume(t, frame, v)?,
                },
                Ctrl::Raise(exn) => {
                    if let Some(exn) = self.unwind(t, exn) {
                        return Ok(SliceEnd::Finished(Err(exn)));
                    }
                }
                Ctrl::Apply(f, x) => self.apply(t, f, x)?,
                Ctrl::Blocked => return Ok(SliceEnd::Paused),
            }
        }
    }

    // -- evaluation ---------------------------------------------------------

    fn eval_node(&mut self, t: &mut Thread, e: Arc<Expr>, env: Env) -> Result<(), Stop> {
        use ExprKind as K;
        t.ctrl = match &e.kind {
            K::Int(n) => Ctrl::Ret(Value::Int(*n)),
            K::Bool(b) => Ctrl::Ret(Value::Bool(*b)),
            K::Str(s) => Ctrl::Ret(Value::bytes(s)),
            K::Unit => Ctrl::Ret(Value::Unit),
            K::Var(n) => match env.lookup(n) {
                Some(v) => Ctrl::Ret(v),
                None => {
                    t.raise(Value::ctor("Unbound_value", vec![Value::str(n)]));
                    return Ok(());
                }
            },
            K::Native(n) => match prims::lookup(n) {
                Some(def) => Ctrl::Ret(primitive(def)),
                None => {
                    t.raise(prims::invalid_arg(&format!("unknown primitive {n}")));
                    return Ok(());
                }
            },
            K::Lambda { param, body } => Ctrl::Ret(Value::Closure(Arc::new(Closure {
                param: param.clone(),
                body: body.clone(),
                env,
                rec_name: None,
                trusted: t.trusted,
            }))),
            K::Apply { func, arg } => {
                t.stack.push(Frame::AppFn { arg: arg.clone(), env: env.clone() });
                Ctrl::Eval(func.clone(), env)
            }
            K::Let { recursive, name, bound, body } => match (&bound.kind, recursive) {
                (K::Lambda { param, body: fbody }, true) => {
                    let clo = Value::Closure(Arc::new(Closure {
                        param: param.clone(),
                        body: fbody.clone(),
                        env: env.clone(),
                        rec_name: Some(name.clone()),
                        trusted: t.trusted,
                    }));
                    Ctrl::Eval(body.clone(), env.bind(name.clone(), clo))
                }
                _ => {
                    t.stack.push(Frame::Let { name: name.clone(), body: body.clone(), env: env.clone() });
                    Ctrl::Eval(bound.clone(), env)
                }
            },
            K::If { cond, .. } => {
                t.stack.push(Frame::If { node: e.clone(), env: env.clone() });
                Ctrl::Eval(cond.clone(), env)
            }
            K::Match { scrutinee, .. } => {
                t.stack.push(Frame::Match { node: e.clone(), env: env.clone() });
                Ctrl::Eval(scrutinee.clone(), env)
            }
            K::Try { body, .. } => {
                t.stack.push(Frame::Try { node: e.clone(), env: env.clone() });
                Ctrl::Eval(body.clone(), env)
            }
            K::Sequence { first, second } => {
                t.stack.push(Frame::Seq { second: second.clone(), env: env.clone() });
                Ctrl::Eval(first.clone(), env)
            }
            K::While { cond, .. } => {
                t.stack.push(Frame::WhileCond { node: e.clone(), env: env.clone() });
                Ctrl::Eval(cond.clone(), env)
            }
            K::Raise(x) => {
                t.stack.push(Frame::Raise);
                Ctrl::Eval(x.clone(), env)
            }
            K::AndAlso(a, b) => {
                t.stack.push(Frame::And { rhs: b.clone(), env: env.clone() });
                Ctrl::Eval(a.clone(), env)
            }
            K::OrElse(a, b) => {
                t.stack.push(Frame::Or { rhs: b.clone(), env: env.clone() });
                Ctrl::Eval(a.clone(), env)
            }
            K::Tuple(_)
            | K::List(_)
            | K::ArrayLit(_)
            | K::Ctor { .. }
            | K::Cons { .. }
            | K::ArrayGet { .. }
            | K::ArrayPut { .. }
            | K::For { .. } => match collect_item(&e, 0) {
                Some(first) => {
                    let first = first.clone();
                    let n = collect_len(&e);
                    t.stack.push(Frame::Collect { node: e, env: env.clone(), vals: Vec::with_capacity(n) });
                    Ctrl::Eval(first, env)
                }
                None => return self.finish_collect(t, &e, env, Vec::new()),
            },
        };
        Ok(())
    }

    fn resume(&mut self, t: &mut Thread, frame: Frame, v: Value) -> Result<(), Stop> {
        use ExprKind as K;
        t.ctrl = match frame {
            Frame::Call { trusted } => {
                t.depth -= 1;
                t.trusted = trusted;
                Ctrl::Ret(v)
            }
            Frame::AppFn { arg, env } => {
                t.stack.push(Frame::AppArg { func: v });
                Ctrl::Eval(arg, env)
            }
            Frame::AppArg { func } => Ctrl::Apply(func, v),
            Frame::ApplyRest { mut args } => {
                let next = args.pop().expect("ApplyRest frames are never empty");
                if !args.is_empty() {
                    t.stack.push(Frame::ApplyRest { args });
                }
                Ctrl::Apply(v, next)
            }
            Frame::Let { name, body, env } => Ctrl::Eval(body, env.bind(name, v)),
            Frame::If { node, env } => {
                let K::If { then_branch, else_branch, .. } = &node.kind else { unreachable!() };
                match v {
                    Value::Bool(true) => Ctrl::Eval(then_branch.clone(), env),
                    Value::Bool(false) => Ctrl::Eval(else_branch.clone(), env),
                    other => {
                        type_error(t, "if condition", "bool", &other);
                        return Ok(());
                    }
                }
            }
            Frame::Match { node, env } => {
                let K::Match { arms, .. } = &node.kind else { unreachable!() };
                match select_arm(arms, &v, &env) {
                    Some(ctrl) => ctrl,
                    None => {
                        t.raise(Value::ctor("Match_failure", vec![]));
                        return Ok(());
                    }
                }
            }
            Frame::Try { .. } => Ctrl::Ret(v),
            Frame::Seq { second, env } => Ctrl::Eval(second, env),
            Frame::Collect { node, env, mut vals } => {
                vals.push(v);
                match collect_item(&node, vals.len()) {
                    Some(next) => {
                        let next = next.clone();
                        t.stack.push(Frame::Collect { node, env: env.clone(), vals });
                        Ctrl::Eval(next, env)
                    }
                    None => return self.finish_collect(t, &node, env, vals),
                }
            }
            Frame::WhileCond { node, env } => {
                let K::While { body, .. } = &node.kind else { unreachable!() };
                match v {
                    Value::Bool(true) => {
                        let body = body.clone();
                        t.stack.push(Frame::WhileBody { node, env: env.clone() });
                        Ctrl::Eval(body, env)
                    }
                    Value::Bool(false) => Ctrl::Ret(Value::Unit),
                    other => {
                        type_error(t, "while condition", "bool", &other);
                        return Ok(());
                    }
                }
            }
            Frame::WhileBody { node, env } => {
                let K::While { cond, .. } = &node.kind else { unreachable!() };
                let cond = cond.clone();
                t.stack.push(Frame::WhileCond { node, env: env.clone() });
                Ctrl::Eval(cond, env)
            }
            Frame::ForBody { node, env, next, hi } => {
                if next > hi {
                    Ctrl::Ret(Value::Unit)
                } else {
                    for_iteration(t, node, env, next, hi)
                }
            }
            Frame::Raise => match v {
                Value::Ctor(..) => {
                    t.raise(v);
                    return Ok(());
                }
                other => {
                    type_error(t, "raise", "exception", &other);
                    return Ok(());
                }
            },
            Frame::And { rhs, env } => match v {
                Value::Bool(false) => Ctrl::Ret(Value::Bool(false)),
                Value::Bool(true) => Ctrl::Eval(rhs, env),
                other => {
                    type_error(t, "&&", "bool", &other);
                    return Ok(());
                }
            },
            Frame::Or { rhs, env } => match v {
                Value::Bool(true) => Ctrl::Ret(Value::Bool(true)),
                Value::Bool(false) => Ctrl::Eval(rhs, env),
                other => {
                    type_error(t, "||", "bool", &other);
                    return Ok(());
                }
            },
            Frame::Map { f, rest, mut acc } => {
                acc.push(v);
                match rest.head_tail() {
                    None => Ctrl::Ret(Value::List(List::from_vec(acc))),
                    Some((h, tl)) => {
                        let (h, tl) = (h.clone(), tl.clone());
                        t.stack.push(Frame::Map { f: f.clone(), rest: tl, acc });
                        Ctrl::Apply(f, h)
                    }
                }
            }
            Frame::Filter { f, item, rest, mut acc } => {
                match v {
                    Value::Bool(true) => acc.push(item),
                    Value::Bool(false) => {}
                    other => {
                        type_error(t, "List.filter predicate", "bool", &other);
                        return Ok(());
                    }
                }
                match rest.head_tail() {
                    None => Ctrl::Ret(Value::List(List::from_vec(acc))),
                    Some((h, tl)) => {
                        let (h, tl) = (h.clone(), tl.clone());
                        t.stack.push(Frame::Filter { f: f.clone(), item: h.clone(), rest: tl, acc });
                        Ctrl::Apply(f, h)
                    }
                }
            }
            Frame::Fold { f, rest } => match rest.head_tail() {
                None => Ctrl::Ret(v),
                Some((h, tl)) => {
                    let (h, tl) = (h.clone(), tl.clone());
                    t.stack.push(Frame::Fold { f: f.clone(), rest: tl });
                    t.stack.push(Frame::ApplyRest { args: vec![h] });
                    Ctrl::Apply(f, v)
                }
            },
            Frame::Iter { f, rest } => match rest.head_tail() {
                None => Ctrl::Ret(Value::Unit),
                Some((h, tl)) => {
                    let (h, tl) = (h.clone(), tl.clone());
                    t.stack.push(Frame::Iter { f: f.clone(), rest: tl });
                    Ctrl::Apply(f, h)
                }
            },
            Frame::Discard => Ctrl::Ret(Value::Unit),
        };
        Ok(())
    }

    /// Pops frames up to the nearest handler whose arms match `exn`.
    /// Returns the exception back when the thread's stack is exhausted.
    fn unwind(&mut self, t: &mut Thread, exn: Value) -> Option<Value> {
        loop {
            match t.stack.pop() {
                None => return Some(exn),
                Some(Frame::Call { trusted }) => {
                    t.depth -= 1;
                    t.trusted = trusted;
                }
                Some(Frame::Try { node, env }) => {
                    let ExprKind::Try { arms, .. } = &node.kind else { unreachable!() };
                    if let Some(ctrl) = select_arm(arms, &exn, &env) {
                        t.ctrl = ctrl;
                        return None;
                    }
                }
                Some(_) => {}
            }
        }
    }

    fn apply(&mut self, t: &mut Thread, f: Value, x: Value) -> Result<(), Stop> {
        match f {
            Value::Closure(c) => {
                if !matches!(t.stack.last(), Some(Frame::Call { .. })) {
                    t.stack.push(Frame::Call { trusted: t.trusted });
                    t.depth += 1;
                    if t.depth > self.limits.max_call_depth {
                        return Err(Stop::Resource { kind: ResourceKind::Depth, step: self.total_steps });
                    }
                    self.max_depth = self.max_depth.max(t.depth);
                }
                let mut env = c.env.clone();
                if let Some(n) = &c.rec_name {
                    env = env.bind(n.clone(), Value::Closure(c.clone()));
                }
                env = env.bind(c.param.clone(), x);
                t.trusted = c.trusted;
                t.ctrl = Ctrl::Eval(c.body.clone(), env);
            }
            Value::Primitive(app) => {
                let mut args = Vec::with_capacity(app.args.len() + 1);
                args.extend(app.args.iter().cloned());
                args.push(x);
                if args.len() < app.def.arity {
                    t.ctrl = Ctrl::Ret(Value::Primitive(Arc::new(PrimApp { def: app.def, args })));
                    return Ok(());
                }
                if !t.trusted {
                    self.log_prim(app.def.name);
                }
                match (app.def.run)(self, t, args) {
                    Ok(PrimOut::Ret(v)) => t.ctrl = Ctrl::Ret(v),
                    Ok(PrimOut::Call(f, a)) => t.ctrl = Ctrl::Apply(f, a),
                    Ok(PrimOut::Block) => t.ctrl = Ctrl::Blocked,
                    Ok(PrimOut::Yield) => {
                        t.ctrl = Ctrl::Ret(Value::Unit);
                        t.yielded = true;
                    }
                    Err(Fault::Raise(exn)) => t.raise(exn),
                    Err(Fault::Stop(stop)) => return Err(stop),
                }
            }
            other => {
                type_error(t, "application", "function", &other);
            }
        }
        Ok(())
    }

    fn finish_collect(&mut self, t: &mut Thread, node: &Arc<Expr>, env: Env, mut vals: Vec<Value>) -> Result<(), Stop> {
        use ExprKind as K;
        t.ctrl = match &node.kind {
            K::Tuple(_) => Ctrl::Ret(Value::tuple(vals)),
            K::List(_) => Ctrl::Ret(Value::List(List::from_vec(vals))),
            K::ArrayLit(_) => {
                let n = vals.len();
                let first = self.alloc(vals.into_iter().map(HeapCell::Val), n)?;
                Ctrl::Ret(Value::Array((first..first + n).collect()))
            }
            K::Ctor { name, .. } => {
                let Some(arity) = env.scope.ctor_arity(name) else {
                    t.raise(Value::ctor("Unbound_value", vec![Value::str(name)]));
                    return Ok(());
                };
                let args = if vals.len() == arity {
                    vals
                } else if arity > 1 && vals.len() == 1 && matches!(&vals[0], Value::Tuple(f) if f.len() == arity) {
                    let Value::Tuple(f) = &vals[0] else { unreachable!() };
                    f.to_vec()
                } else if arity == 1 && vals.len() > 1 {
                    vec![Value::tuple(vals)]
                } else {
                    let msg = format!("constructor {name} expects {arity} argument(s), got {}", vals.len());
                    t.raise(Value::ctor("Type_error", vec![Value::str(&msg)]));
                    return Ok(());
                };
                Ctrl::Ret(Value::Ctor(name.clone(), Arc::new(args.into())))
            }
            K::Cons { .. } => {
                let tail = vals.pop().expect("two operands");
                let head = vals.pop().expect("two operands");
                match tail {
                    Value::List(l) => Ctrl::Ret(Value::List(List::cons(head, l))),
                    other => {
                        type_error(t, "::", "list", &other);
                        return Ok(());
                    }
                }
            }
            K::ArrayGet { .. } => {
                let index = vals.pop().expect("two operands");
                let array = vals.pop().expect("two operands");
                match prims::array_cell(&array, &index) {
                    Ok(id) => Ctrl::Ret(self.deref(id).unwrap_or(Value::Unit)),
                    Err(exn) => {
                        t.raise(exn);
                        return Ok(());
                    }
                }
            }
            K::ArrayPut { .. } => {
                let value = vals.pop().expect("three operands");
                let index = vals.pop().expect("three operands");
                let array = vals.pop().expect("three operands");
                match prims::array_cell(&array, &index) {
                    Ok(id) => {
                        self.cells[id] = HeapCell::Val(value);
                        Ctrl::Ret(Value::Unit)
                    }
                    Err(exn) => {
                        t.raise(exn);
                        return Ok(());
                    }
                }
            }
            K::For { .. } => {
                let hi = vals.pop().expect("two bounds");
                let lo = vals.pop().expect("two bounds");
                match (lo, hi) {
                    (Value::Int(lo), Value::Int(hi)) if lo <= hi => {
                        for_iteration(t, node.clone(), env, lo as i128, hi as i128)
                    }
                    (Value::Int(_), Value::Int(_)) => Ctrl::Ret(Value::Unit),
                    (Value::Int(_), other) | (other, _) => {
                        type_error(t, "for bound", "int", &other);
                        return Ok(());
                    }
                }
            }
            _ => unreachable!("not a collecting node"),
        };
        Ok(())
    }
}

fn for_iteration(t: &mut Thread, node: Arc<Expr>, env: Env, i: i128, hi: i128) -> Ctrl {
    let ExprKind::For { var, body, .. } = &node.kind else { unreachable!() };
    let (var, body) = (var.clone(), body.clone());
    t.stack.push(Frame::ForBody { node, env: env.clone(), next: i + 1, hi });
    Ctrl::Eval(body, env.bind(var, Value::Int(i as i64)))
}

/// Number of operands a collecting node evaluates.
fn collect_len(e: &Expr) -> usize {
    use ExprKind as K;
    match &e.kind {
        K::Tuple(v) | K::List(v) | K::ArrayLit(v) => v.len(),
        K::Ctor { args, .. } => args.len(),
        K::Cons { .. } | K::ArrayGet { .. } | K::For { .. } => 2,
        K::ArrayPut { .. } => 3,
        _ => 0,
    }
}

fn collect_item(e: &Expr, i: usize) -> Option<&Arc<Expr>> {
    use ExprKind as K;
    match &e.kind {
        K::Tuple(v) | K::List(v) | K::ArrayLit(v) => v.get(i),
        K::Ctor { args, .. } => args.get(i),
        K::Cons { head, tail } => [head, tail].get(i).copied(),
        K::ArrayGet { array, index } => [array, index].get(i).copied(),
        K::For { from, to, .. } => [from, to].get(i).copied(),
        K::ArrayPut { array, index, value } => [array, index, value].get(i).copied(),
        _ => None,
    }
}

fn type_error(t: &mut Thread, what: &str, expected: &str, got: &Value) {
    let msg = format!("{what}: expected {expected}, got {}", got.type_name());
    t.raise(Value::ctor("Type_error", vec![Value::str(&msg)]));
}

fn select_arm(arms: &[Arm], v: &Value, env: &Env) -> Option<Ctrl> {
    let mut binds = Vec::new();
    for arm in arms {
        binds.clear();
        if match_pattern(&arm.pattern, v, &mut binds) {
            let mut env = env.clone();
            for (n, x) in binds.drain(..) {
                env = env.bind(n, x);
            }
            return Some(Ctrl::Eval(arm.body.clone(), env));
        }
    }
    None
}

pub(crate) fn match_pattern(p: &Pattern, v: &Value, out: &mut Vec<(Name, Value)>) -> bool {
    match (&p.kind, v) {
        (PatternKind::Wildcard, _) => true,
        (PatternKind::Var(n), _) => {
            out.push((n.clone(), v.clone()));
            true
        }
        (PatternKind::Int(a), Value::Int(b)) => a == b,
        (PatternKind::Bool(a), Value::Bool(b)) => a == b,
        (PatternKind::Str(a), Value::Str(b)) => a.as_slice() == &b[..],
        (PatternKind::Unit, Value::Unit) => true,
        (PatternKind::Tuple(ps), Value::Tuple(vs)) => {
            ps.len() == vs.len() && ps.iter().zip(vs.iter()).all(|(p, v)| match_pattern(p, v, out))
        }
        (PatternKind::Nil, Value::List(l)) => l.is_empty(),
        (PatternKind::Cons(hp, tp), Value::List(l)) => match l.head_tail() {
            Some((h, tl)) => match_pattern(hp, h, out) && match_pattern(tp, &Value::List(tl.clone()), out),
            None => false,
        },
        (PatternKind::Ctor(name, ps), Value::Ctor(n, vs)) => {
            if name != n {
                return false;
            }
            if ps.len() == vs.len() {
                ps.iter().zip(vs.iter()).all(|(p, v)| match_pattern(p, v, out))
            } else if ps.len() == 1 && vs.len() > 1 {
                match_pattern(&ps[0], &Value::Tuple(vs.clone()), out)
            } else {
                false
            }
        }
        _ => false,
    }
}
