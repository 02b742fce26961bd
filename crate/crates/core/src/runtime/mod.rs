//! Deterministic interpreter for MiniML.
//!
//! Evaluation is a small-step machine with an explicit continuation stack, so
//! neither deep recursion in student code nor hostile input can exhaust the
//! host stack. Closure calls push a call marker unless the continuation is
//! already one; that is what makes tail calls proper. Green threads are
//! scheduled round-robin in spawn order with a fixed step quantum.

mod machine;
mod prelude;
mod prims;
mod value;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::syntax::{Expr, Program};
use crate::vfs::{InspectionReport, VfsState};

pub use machine::{DeclFailure, Machine, ProgramRun, Stop};
pub use prelude::{default_prelude, Prelude, PreludeBinding, BUILTIN_CTORS};
pub use prims::{lookup as lookup_primitive, PrimDef, PRIMS};
pub use value::{compare_values, Closure, CompareError, Env, Fields, List, PrimApp, Scope, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limits {
    pub max_steps: u64,
    pub max_call_depth: usize,
    pub max_live_threads: usize,
    pub max_heap_cells: u64,
    pub slice_steps: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_steps: 10_000_000,
            max_call_depth: 10_000,
            max_live_threads: 16,
            max_heap_cells: 1_000_000,
            slice_steps: 100,
        }
    }
}

impl Limits {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("max_steps", self.max_steps),
            ("max_call_depth", self.max_call_depth as u64),
            ("max_live_threads", self.max_live_threads as u64),
            ("max_heap_cells", self.max_heap_cells),
            ("slice_steps", self.slice_steps),
        ];
        match fields.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(format!("{name} must be at least 1")),
            None => Ok(()),
        }
    }
}

/// Which budget a run exhausted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResourceKind {
    Steps,
    Depth,
    Heap,
    Threads,
    WallClock,
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResourceKind::Steps => "step budget exhausted",
            ResourceKind::Depth => "call depth limit exceeded",
            ResourceKind::Heap => "heap cell limit exceeded",
            ResourceKind::Threads => "live thread limit exceeded",
            ResourceKind::WallClock => "timeout",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThreadEvent {
    Spawned { tid: u64, parent: u64, step: u64 },
    Completed { tid: u64, step: u64 },
    Joined { joiner: u64, joinee: u64, step: u64 },
}

impl ThreadEvent {
    pub fn step(&self) -> u64 {
        match self {
            ThreadEvent::Spawned { step, .. }
            | ThreadEvent::Completed { step, .. }
            | ThreadEvent::Joined { step, .. } => *step,
        }
    }
}

/// Creation, completion and join events of worker threads, in step order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ThreadRegistry {
    pub events: Vec<ThreadEvent>,
}

impl ThreadRegistry {
    pub fn spawned(&self) -> Vec<u64> {
        self.events
            .iter()
            .filter_map(|e| match e {
                ThreadEvent::Spawned { tid, .. } => Some(*tid),
                _ => None,
            })
            .collect()
    }

    pub fn completed(&self) -> Vec<u64> {
        self.events
            .iter()
            .filter_map(|e| match e {
                ThreadEvent::Completed { tid, .. } => Some(*tid),
                _ => None,
            })
            .collect()
    }

    /// Largest number of simultaneously live worker threads.
    pub fn max_live(&self) -> usize {
        let mut live = 0usize;
        let mut peak = 0;
        for e in &self.events {
            match e {
                ThreadEvent::Spawned { .. } => {
                    live += 1;
                    peak = peak.max(live);
                }
                ThreadEvent::Completed { .. } => live = live.saturating_sub(1),
                ThreadEvent::Joined { .. } => {}
            }
        }
        peak
    }

    /// Every spawned thread has completed.
    pub fn all_completed(&self) -> bool {
        let done = self.completed();
        self.spawned().iter().all(|t| done.contains(t))
    }
}

#[derive(Debug, Clone)]
pub enum RunResult {
    Done(Value),
    LangTrap { exception: Value, summary: String },
    ResourceTrap { kind: ResourceKind, step: u64 },
    Deadlock { blocked: Vec<u64> },
}

impl fmt::Display for RunResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunResult::Done(v) => write!(f, "{v}"),
            RunResult::LangTrap { exception, .. } => write!(f, "exception {exception}"),
            RunResult::ResourceTrap { kind, step } => write!(f, "{kind} (at step {step})"),
            RunResult::Deadlock { blocked } => {
                let tids: Vec<String> = blocked.iter().map(u64::to_string).collect();
                write!(f, "deadlock: threads {} blocked", tids.join(", "))
            }
        }
    }
}

/// Everything observable about one sandboxed evaluation.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub result: RunResult,
    pub registry: ThreadRegistry,
    pub vfs_report: InspectionReport,
    pub stdout: Vec<u8>,
    pub steps_used: u64,
    pub max_depth: usize,
    /// Primitive calls made by untrusted code, by name.
    pub prim_calls: BTreeMap<String, u64>,
}

/// Evaluates the declarations of `p`, then `entry` if given. Code is trusted
/// exactly when `prelude` is the full prelude.
pub fn evaluate(
    p: &Program,
    prelude: Arc<Prelude>,
    vfs: VfsState,
    limits: Limits,
    entry: Option<&Arc<Expr>>,
) -> RunOutcome {
    let trusted = prelude.full;
    let mut m = Machine::new(vfs, limits);
    let run = m.load_program(p, prelude, trusted);
    let result = match (run.failure, entry) {
        (Some(f), _) => Err(f.stop),
        (None, Some(e)) => m.eval(e, &Env::new(run.scope), trusted),
        (None, None) => Ok(Value::Unit),
    };
    m.outcome(result)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("value of type {0} is not callable")]
pub struct NotCallable(pub &'static str);

/// Applies `f` to `args` in `ctx` under fresh budgets `limits`.
pub fn call_value(f: &Value, args: &[Value], limits: Limits, ctx: &mut Machine) -> Result<RunOutcome, NotCallable> {
    if !f.is_callable() {
        return Err(NotCallable(f.type_name()));
    }
    let saved = std::mem::replace(&mut ctx.limits, limits);
    let result = ctx.call(f, args, true);
    ctx.limits = saved;
    Ok(ctx.outcome(result))
}

#[cfg(test)]
mod tests;
