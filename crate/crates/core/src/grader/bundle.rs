//! Exercise bundles: `exercise.json` plus the reference `solution.mml`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::featuregate::{restrict_prelude, FeaturePolicy};
use crate::property::{GenSpec, PropertyConfig};
use crate::runtime::{default_prelude, Limits, Prelude, ResourceKind};
use crate::syntax::{parse_expr, Expr};
use crate::vfs::{FaultRule, Node, TreeJson};

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedBinding {
    pub name: String,
    /// Trusted expression standing in for a missing or broken binding.
    pub dummy: String,
}

/// Expected result of a harness call.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ExpectedResult {
    /// Any value.
    #[default]
    Done,
    /// Anything at all, traps included (except timeouts).
    Any,
    /// A value equal to this trusted expression's.
    Value(String),
    /// An exception with this constructor.
    Exception(String),
    Resource(ResourceKind),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoExpect {
    /// The whole tree after the call must equal this one.
    #[serde(default)]
    pub files_exact: Option<TreeJson>,
    #[serde(default = "yes")]
    pub no_open_handles: bool,
    #[serde(default)]
    pub result: ExpectedResult,
    #[serde(default)]
    pub stdout: Option<String>,
}

fn yes() -> bool {
    true
}

impl Default for IoExpect {
    fn default() -> Self {
        IoExpect { files_exact: None, no_open_handles: true, result: ExpectedResult::Done, stdout: None }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreadsExpect {
    /// Upper bound on simultaneously live worker threads.
    #[serde(default)]
    pub max_live: Option<usize>,
    #[serde(default)]
    pub min_spawned: Option<usize>,
    #[serde(default)]
    pub all_completed: bool,
    #[serde(default)]
    pub result: ExpectedResult,
}

/// Per-test overrides of the exercise limits.
#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsPatch {
    pub max_steps: Option<u64>,
    pub max_call_depth: Option<usize>,
    pub max_live_threads: Option<usize>,
    pub max_heap_cells: Option<u64>,
    pub slice_steps: Option<u64>,
}

impl LimitsPatch {
    pub fn apply(&self, base: Limits) -> Limits {
        Limits {
            max_steps: self.max_steps.unwrap_or(base.max_steps),
            max_call_depth: self.max_call_depth.unwrap_or(base.max_call_depth),
            max_live_threads: self.max_live_threads.unwrap_or(base.max_live_threads),
            max_heap_cells: self.max_heap_cells.unwrap_or(base.max_heap_cells),
            slice_steps: self.slice_steps.unwrap_or(base.slice_steps),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestKind {
    Property {
        target: String,
        /// Reference function to compare against; defaults to `target`.
        #[serde(default)]
        reference_name: Option<String>,
        arg_gens: Vec<GenSpec>,
        #[serde(default)]
        cfg: PropertyConfig,
    },
    IoScenario {
        call: String,
        /// Initial tree for this test; the exercise tree when absent.
        #[serde(default)]
        fs_before: Option<TreeJson>,
        #[serde(default)]
        faults: Vec<FaultRule>,
        #[serde(default)]
        expect: IoExpect,
    },
    Resource {
        call: String,
        #[serde(default)]
        limits_override: LimitsPatch,
        #[serde(default)]
        expect: ExpectedResult,
    },
    Threads {
        call: String,
        #[serde(default)]
        expect: ThreadsExpect,
    },
    GateOnly,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TestSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: TestKind,
}

impl TestSpec {
    /// The harness expression, for tests that have one.
    pub fn call(&self) -> Option<&str> {
        match &self.kind {
            TestKind::IoScenario { call, .. } | TestKind::Resource { call, .. } | TestKind::Threads { call, .. } => {
                Some(call)
            }
            _ => None,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExerciseJson {
    name: String,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    policy: FeaturePolicy,
    #[serde(default)]
    limits: Limits,
    #[serde(default)]
    fs: TreeJson,
    #[serde(default)]
    allowed_write_prefixes: Vec<String>,
    #[serde(default)]
    expected_bindings: Vec<ExpectedBinding>,
    tests: Vec<TestSpec>,
}

/// A validated exercise. The reference source is kept as bytes and only
/// parsed when grading, so that nothing about it ends up in load errors.
#[derive(Debug, Clone)]
pub struct ExerciseBundle {
    pub name: String,
    pub seed: u64,
    pub policy: FeaturePolicy,
    pub limits: Limits,
    pub initial_fs: Node,
    pub allowed_write_prefixes: Vec<String>,
    pub expected_bindings: Vec<ExpectedBinding>,
    pub reference_source: Vec<u8>,
    pub tests: Vec<TestSpec>,
    /// Prelude derived from `policy`.
    pub restricted: Arc<Prelude>,
}

pub const CONFIG_FILE: &str = "exercise.json";
pub const REFERENCE_FILE: &str = "solution.mml";

/// Reads and validates the bundle in `dir`.
pub fn load_bundle(dir: &Path) -> Result<ExerciseBundle, BundleError> {
    let read = |name: &str| {
        let path = dir.join(name);
        std::fs::read(&path).map_err(|e| BundleError::Io { path, message: e.to_string() })
    };
    let config = read(CONFIG_FILE)?;
    let reference = read(REFERENCE_FILE)?;
    ExerciseBundle::from_parts(&config, reference)
        .map_err(|message| BundleError::Invalid { path: dir.join(CONFIG_FILE), message })
}

fn parse_call(what: &str, src: &str) -> Result<Arc<Expr>, String> {
    parse_expr(src).map_err(|e| format!("{what}: {e}"))
}

impl ExerciseBundle {
    /// Builds a bundle from the contents of `exercise.json` and the reference.
    pub fn from_parts(config: &[u8], reference_source: Vec<u8>) -> Result<ExerciseBundle, String> {
        let json: ExerciseJson = serde_json::from_slice(config).map_err(|e| e.to_string())?;
        json.limits.validate().map_err(|e| format!("limits: {e}"))?;
        let restricted = restrict_prelude(&default_prelude(), &json.policy).map_err(|e| format!("policy: {e}"))?;
        let initial_fs = json.fs.to_node().map_err(|e| format!("fs: {e}"))?;

        let mut bindings = HashSet::new();
        for b in &json.expected_bindings {
            if !bindings.insert(b.name.as_str()) {
                return Err(format!("expected binding {} listed twice", b.name));
            }
            parse_call(&format!("dummy for {}", b.name), &b.dummy)?;
        }
        let mut names = HashSet::new();
        for t in &json.tests {
            if !names.insert(t.name.as_str()) {
                return Err(format!("duplicate test name {:?}", t.name));
            }
            let ctx = |what: &str| format!("test {:?}: {what}", t.name);
            if let Some(call) = t.call() {
                parse_call(&ctx("call"), call)?;
            }
            match &t.kind {
                TestKind::Property { target, arg_gens, cfg, .. } => {
                    if !bindings.contains(target.as_str()) {
                        return Err(ctx(&format!("target {target} is not an expected binding")));
                    }
                    if cfg.trials == 0 {
                        return Err(ctx("trials must be at least 1"));
                    }
                    if let Some(l) = &cfg.limits {
                        l.validate().map_err(|e| ctx(&format!("limits: {e}")))?;
                    }
                    for g in arg_gens {
                        g.validate().map_err(|e| ctx(&e.to_string()))?;
                    }
                }
                TestKind::IoScenario { fs_before, expect, .. } => {
                    if let Some(t) = fs_before {
                        t.to_node().map_err(|e| ctx(&format!("fs_before: {e}")))?;
                    }
                    if let Some(t) = &expect.files_exact {
                        t.to_node().map_err(|e| ctx(&format!("files_exact: {e}")))?;
                    }
                    check_expected(&expect.result).map_err(|e| ctx(&e))?;
                }
                TestKind::Resource { limits_override, expect, .. } => {
                    limits_override.apply(json.limits).validate().map_err(|e| ctx(&format!("limits_override: {e}")))?;
                    check_expected(expect).map_err(|e| ctx(&e))?;
                }
                TestKind::Threads { expect, .. } => check_expected(&expect.result).map_err(|e| ctx(&e))?,
                TestKind::GateOnly => {}
            }
        }
        Ok(ExerciseBundle {
            name: json.name,
            seed: json.seed,
            policy: json.policy,
            limits: json.limits,
            initial_fs,
            allowed_write_prefixes: json.allowed_write_prefixes,
            expected_bindings: json.expected_bindings,
            reference_source,
            tests: json.tests,
            restricted,
        })
    }
}

fn check_expected(e: &ExpectedResult) -> Result<(), String> {
    match e {
        ExpectedResult::Value(src) => parse_call("expected value", src).map(|_| ()),
        _ => Ok(()),
    }
}
