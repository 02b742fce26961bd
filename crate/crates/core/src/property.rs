//! Property-based comparison of a submission against a reference.
//!
//! Generation is pure: a [`GenSpec`] and a [`Seed`] determine a [`Sample`],
//! plain data that is independent of any interpreter. A sample becomes a
//! MiniML value only when it is realized inside a machine, which is also
//! where `map` generators run their mapper. Shrinking works on samples, so a
//! mapped value shrinks by shrinking its base and mapping again.
//!
//! Trial `i` draws its arguments from `seed.split(i)`, so trials can run in
//! any order (or in parallel) and still give the same first failure.

use std::cmp::Ordering;
use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::parallel::{self, Parallelism};
use crate::runtime::{CompareError, Limits, ResourceKind, RunOutcome, RunResult, Value};
use crate::syntax::parse_expr;

/// Generator state. Advancing it is a pure function of the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed {
    pub state: u64,
}

impl Seed {
    pub fn new(state: u64) -> Seed {
        Seed { state }
    }

    fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.state)
    }

    /// Independent seed for the `i`-th sub-computation.
    pub fn split(self, i: u64) -> Seed {
        let mut rng = self.rng();
        rng.set_stream(i.wrapping_add(1));
        Seed { state: rng.next_u64() }
    }
}

fn default_alphabet() -> String {
    "abcdefghijklmnopqrstuvwxyz".into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "gen", rename_all = "snake_case", deny_unknown_fields)]
pub enum GenSpec {
    Int {
        min: i64,
        max: i64,
    },
    Bool,
    String {
        #[serde(default = "default_alphabet")]
        alphabet: String,
        max_len: usize,
    },
    List {
        elem: Box<GenSpec>,
        max_len: usize,
    },
    Tuple {
        elems: Vec<GenSpec>,
    },
    /// `expr` is a trusted one-argument function applied to the base value.
    Map {
        base: Box<GenSpec>,
        expr: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenError {
    #[error("invalid generator: {0}")]
    Invalid(String),
    #[error("generator mapper failed: {0}")]
    Mapper(String),
}

impl GenSpec {
    pub fn int(min: i64, max: i64) -> GenSpec {
        GenSpec::Int { min, max }
    }

    pub fn list(elem: GenSpec, max_len: usize) -> GenSpec {
        GenSpec::List { elem: Box::new(elem), max_len }
    }

    pub fn map(base: GenSpec, expr: &str) -> GenSpec {
        GenSpec::Map { base: Box::new(base), expr: expr.into() }
    }

    /// Checks ranges, alphabets and that mapper expressions parse.
    pub fn validate(&self) -> Result<(), GenError> {
        match self {
            GenSpec::Int { min, max } if min > max => {
                Err(GenError::Invalid(format!("int range {min}..{max} is empty")))
            }
            GenSpec::String { alphabet, max_len } if alphabet.is_empty() && *max_len > 0 => {
                Err(GenError::Invalid("string alphabet is empty".into()))
            }
            GenSpec::List { elem, .. } => elem.validate(),
            GenSpec::Tuple { elems } => elems.iter().try_for_each(GenSpec::validate),
            GenSpec::Map { base, expr } => {
                base.validate()?;
                parse_expr(expr).map_err(|e| GenError::Invalid(format!("mapper: {e}")))?;
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Interpreter-independent generated data. `map` generators contribute the
/// sample of their base.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Sample {
    Int(i64),
    Bool(bool),
    Str(String),
    List(Vec<Sample>),
    Tuple(Vec<Sample>),
}

impl Sample {
    /// Size order used by shrinking; every shrink candidate is strictly smaller.
    pub fn size(&self) -> u128 {
        match self {
            Sample::Int(n) => n.unsigned_abs() as u128,
            Sample::Bool(b) => *b as u128,
            Sample::Str(s) => s.chars().count() as u128 * 1024 + s.chars().map(|c| c as u128).sum::<u128>(),
            Sample::List(xs) | Sample::Tuple(xs) => {
                xs.len() as u128 * (1 << 64) + xs.iter().map(Sample::size).fold(0u128, u128::saturating_add)
            }
        }
    }
}

impl fmt::Display for Sample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sample::Int(n) if *n < 0 => write!(f, "({n})"),
            Sample::Int(n) => write!(f, "{n}"),
            Sample::Bool(b) => write!(f, "{b}"),
            Sample::Str(s) => write!(f, "{s:?}"),
            Sample::List(xs) => {
                f.write_str("[")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str("; ")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str("]")
            }
            Sample::Tuple(xs) => {
                f.write_str("(")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str(")")
            }
        }
    }
}

fn draw(g: &GenSpec, rng: &mut ChaCha8Rng) -> Sample {
    match g {
        GenSpec::Int { min, max } => Sample::Int(rng.gen_range(*min..=*max)),
        GenSpec::Bool => Sample::Bool(rng.gen()),
        GenSpec::String { alphabet, max_len } => {
            let chars: Vec<char> = alphabet.chars().collect();
            let len = if chars.is_empty() { 0 } else { rng.gen_range(0..=*max_len) };
            Sample::Str((0..len).map(|_| chars[rng.gen_range(0..chars.len())]).collect())
        }
        GenSpec::List { elem, max_len } => {
            let len = rng.gen_range(0..=*max_len);
            Sample::List((0..len).map(|_| draw(elem, rng)).collect())
        }
        GenSpec::Tuple { elems } => Sample::Tuple(elems.iter().map(|e| draw(e, rng)).collect()),
        GenSpec::Map { base, .. } => draw(base, rng),
    }
}

/// Draws one sample; returns it with the advanced seed.
pub fn generate(g: &GenSpec, seed: Seed) -> (Sample, Seed) {
    let mut rng = seed.rng();
    let s = draw(g, &mut rng);
    (s, Seed { state: rng.next_u64() })
}

/// One sample per generator, threading the seed left to right.
pub fn generate_args(gens: &[GenSpec], seed: Seed) -> Vec<Sample> {
    let mut seed = seed;
    gens.iter()
        .map(|g| {
            let (s, next) = generate(g, seed);
            seed = next;
            s
        })
        .collect()
}

/// Turns a sample into a value; `mapper(expr, v)` applies a map generator's
/// function inside whatever machine the value is destined for.
pub fn realize(
    g: &GenSpec,
    s: &Sample,
    mapper: &mut dyn FnMut(&str, Value) -> Result<Value, GenError>,
) -> Result<Value, GenError> {
    Ok(match (g, s) {
        (GenSpec::Map { base, expr }, _) => {
            let v = realize(base, s, mapper)?;
            mapper(expr, v)?
        }
        (_, Sample::Int(n)) => Value::Int(*n),
        (_, Sample::Bool(b)) => Value::Bool(*b),
        (_, Sample::Str(st)) => Value::str(st),
        (GenSpec::List { elem, .. }, Sample::List(xs)) => {
            Value::list(xs.iter().map(|x| realize(elem, x, mapper)).collect::<Result<_, _>>()?)
        }
        (GenSpec::Tuple { elems }, Sample::Tuple(xs)) if elems.len() == xs.len() => {
            let mut vs: Vec<Value> =
                elems.iter().zip(xs).map(|(e, x)| realize(e, x, mapper)).collect::<Result<_, _>>()?;
            match vs.len() {
                0 => Value::Unit,
                1 => vs.pop().unwrap(),
                _ => Value::tuple(vs),
            }
        }
        _ => return Err(GenError::Invalid(format!("sample {s} does not fit its generator"))),
    })
}

fn int_candidates(x: i64, min: i64, max: i64) -> Vec<i64> {
    let target = 0i64.clamp(min, max);
    let mut out = vec![target];
    let diff = x as i128 - target as i128;
    let mut h = diff / 2;
    while h != 0 {
        out.push((x as i128 - h) as i64);
        h /= 2;
    }
    out.dedup();
    out.retain(|c| *c != x);
    out
}

/// All ways of deleting one aligned chunk, largest chunks first.
fn chunk_removals<T: Clone>(xs: &[T]) -> Vec<Vec<T>> {
    let n = xs.len();
    let mut out = Vec::new();
    let mut k = n;
    while k > 0 {
        let mut start = 0;
        while start < n {
            let end = (start + k).min(n);
            let mut v = xs[..start].to_vec();
            v.extend_from_slice(&xs[end..]);
            out.push(v);
            start += k;
        }
        k /= 2;
    }
    out
}

/// Candidates strictly smaller than `s`, most aggressive first.
pub fn shrink(g: &GenSpec, s: &Sample) -> Vec<Sample> {
    let mut out = match (g, s) {
        (GenSpec::Map { base, .. }, _) => shrink(base, s),
        (GenSpec::Int { min, max }, Sample::Int(x)) => {
            int_candidates(*x, *min, *max).into_iter().map(Sample::Int).collect()
        }
        (GenSpec::Bool, Sample::Bool(true)) => vec![Sample::Bool(false)],
        (GenSpec::String { alphabet, .. }, Sample::Str(st)) => {
            let chars: Vec<char> = st.chars().collect();
            let mut out: Vec<Sample> =
                chunk_removals(&chars).into_iter().map(|cs| Sample::Str(cs.into_iter().collect())).collect();
            // Replace towards the smallest character so the size order drops.
            if let Some(least) = alphabet.chars().min() {
                for (i, c) in chars.iter().enumerate() {
                    if *c > least {
                        let mut cs = chars.clone();
                        cs[i] = least;
                        out.push(Sample::Str(cs.into_iter().collect()));
                    }
                }
            }
            out
        }
        (GenSpec::List { elem, .. }, Sample::List(xs)) => {
            let mut out: Vec<Sample> = chunk_removals(xs).into_iter().map(Sample::List).collect();
            for (i, x) in xs.iter().enumerate() {
                for c in shrink(elem, x) {
                    let mut ys = xs.clone();
                    ys[i] = c;
                    out.push(Sample::List(ys));
                }
            }
            out
        }
        (GenSpec::Tuple { elems }, Sample::Tuple(xs)) if elems.len() == xs.len() => {
            let mut out = Vec::new();
            for (i, (e, x)) in elems.iter().zip(xs).enumerate() {
                for c in shrink(e, x) {
                    let mut ys = xs.clone();
                    ys[i] = c;
                    out.push(Sample::Tuple(ys));
                }
            }
            out
        }
        _ => Vec::new(),
    };
    out.retain(|c| c != s);
    out
}

/// Shrinks one argument at a time, leftmost first.
fn shrink_args(gens: &[GenSpec], args: &[Sample]) -> Vec<Vec<Sample>> {
    let mut out = Vec::new();
    for (i, (g, a)) in gens.iter().zip(args).enumerate() {
        for c in shrink(g, a) {
            let mut v = args.to_vec();
            v[i] = c;
            out.push(v);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_shrink_steps")]
    pub max_shrink_steps: usize,
    /// Budgets for each call; the exercise limits when absent.
    #[serde(default)]
    pub limits: Option<Limits>,
}

fn default_trials() -> usize {
    100
}

fn default_shrink_steps() -> usize {
    200
}

impl Default for PropertyConfig {
    fn default() -> Self {
        PropertyConfig { trials: default_trials(), max_shrink_steps: default_shrink_steps(), limits: None }
    }
}

/// Hard cap on candidate evaluations during one shrink, whatever the
/// accepted-step budget.
pub const MAX_SHRINK_ATTEMPTS: usize = 5_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PropertyError {
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error("results cannot be compared (they contain functions)")]
    Incomparable,
    /// The reference side misbehaved; details stay internal.
    #[error("internal: {0}")]
    Internal(String),
    #[error("timeout")]
    Timeout,
}

/// What one side or the other did differently on one input.
#[derive(Debug, Clone)]
pub struct Discrepancy {
    /// Realized arguments, pretty-printed.
    pub rendered_args: Vec<String>,
    pub student: RunOutcome,
    pub reference: RunOutcome,
}

#[derive(Debug, Clone)]
pub enum TrialOutcome {
    Agree,
    Disagree(Box<Discrepancy>),
}

#[derive(Debug, Clone)]
pub struct Counterexample {
    pub args: Vec<Sample>,
    pub rendered_args: Vec<String>,
    pub student: RunOutcome,
    pub reference: RunOutcome,
    pub shrink_steps: usize,
}

#[derive(Debug, Clone)]
pub enum PropertyResult {
    Pass { trials: usize },
    Fail(Box<Counterexample>),
}

/// Whether two run results count as the same observable behaviour: equal
/// values, or exceptions with the same constructor. A reference that runs
/// out of resources is an internal error.
pub fn outcomes_agree(
    student: &RunOutcome,
    reference: &RunOutcome,
    compare: impl Fn(&Value, &Value) -> Result<Ordering, CompareError>,
) -> Result<bool, PropertyError> {
    use RunResult::*;
    let timed_out = |r: &RunResult| matches!(r, ResourceTrap { kind: ResourceKind::WallClock, .. });
    if timed_out(&student.result) || timed_out(&reference.result) {
        return Err(PropertyError::Timeout);
    }
    let same = match (&student.result, &reference.result) {
        (_, ResourceTrap { .. }) => return Err(PropertyError::Internal("reference exhausted its resources".into())),
        (_, Deadlock { .. }) => return Err(PropertyError::Internal("reference deadlocked".into())),
        (Done(a), Done(b)) => match compare(a, b) {
            Ok(o) => o == Ordering::Equal,
            Err(CompareError::Incomparable) => return Err(PropertyError::Incomparable),
            Err(CompareError::Budget) => false,
        },
        (LangTrap { exception: a, .. }, LangTrap { exception: b, .. }) => a.ctor_name() == b.ctor_name(),
        _ => false,
    };
    Ok(same && student.stdout == reference.stdout)
}

/// Runs `cfg.trials` trials; on the first (lowest-index) failure, shrinks it
/// greedily. `trial` must be deterministic in its arguments.
pub fn run_property<F>(
    gens: &[GenSpec],
    cfg: &PropertyConfig,
    seed: Seed,
    mode: Parallelism,
    trial: F,
) -> Result<PropertyResult, PropertyError>
where
    F: Fn(&[Sample]) -> Result<TrialOutcome, PropertyError> + Sync + Send,
{
    for g in gens {
        g.validate()?;
    }
    let first = parallel::find_first(cfg.trials, mode, |i| {
        let args = generate_args(gens, seed.split(i as u64));
        match trial(&args) {
            Ok(TrialOutcome::Agree) => None,
            Ok(TrialOutcome::Disagree(d)) => Some(Ok((args, d))),
            Err(e) => Some(Err(e)),
        }
    });
    let (mut args, mut disc) = match first {
        None => return Ok(PropertyResult::Pass { trials: cfg.trials }),
        Some(r) => r?,
    };
    let mut steps = 0;
    let mut attempts = 0;
    'outer: while steps < cfg.max_shrink_steps {
        for cand in shrink_args(gens, &args) {
            attempts += 1;
            if attempts > MAX_SHRINK_ATTEMPTS {
                break 'outer;
            }
            match trial(&cand) {
                Ok(TrialOutcome::Disagree(d)) => {
                    args = cand;
                    disc = d;
                    steps += 1;
                    continue 'outer;
                }
                Ok(TrialOutcome::Agree) => {}
                Err(PropertyError::Timeout) => break 'outer,
                // A candidate the reference cannot handle is not a counterexample.
                Err(_) => {}
            }
        }
        break;
    }
    let Discrepancy { rendered_args, student, reference } = *disc;
    Ok(PropertyResult::Fail(Box::new(Counterexample { args, rendered_args, student, reference, shrink_steps: steps })))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_range() {
        for s in 0..50 {
            assert_eq!(generate(&GenSpec::int(0, 0), Seed::new(s)).0, Sample::Int(0));
        }
    }

    #[test]
    fn list_bounds_over_many_samples() {
        let g = GenSpec::list(GenSpec::int(0, 9), 5);
        let mut seed = Seed::new(42);
        let mut lens = std::collections::BTreeSet::new();
        for _ in 0..1000 {
            let (s, next) = generate(&g, seed);
            seed = next;
            let Sample::List(xs) = s else { panic!("not a list") };
            assert!(xs.len() <= 5);
            lens.insert(xs.len());
            assert!(xs.iter().all(|x| matches!(x, Sample::Int(0..=9))));
        }
        assert_eq!(lens.len(), 6, "every length 0..=5 should occur");
    }

    #[test]
    fn generation_is_pure() {
        let g = GenSpec::Tuple { elems: vec![GenSpec::Bool, GenSpec::String { alphabet: "xy".into(), max_len: 4 }] };
        assert_eq!(generate(&g, Seed::new(9)), generate(&g, Seed::new(9)));
        assert_ne!(Seed::new(9).split(0), Seed::new(9).split(1));
    }

    #[test]
    fn int_shrinks_by_halving() {
        let c = shrink(&GenSpec::int(-100, 100), &Sample::Int(8));
        assert_eq!(c, [0, 4, 6, 7].map(Sample::Int));
        assert!(shrink(&GenSpec::int(-100, 100), &Sample::Int(0)).is_empty());
        let c = shrink(&GenSpec::int(-100, 100), &Sample::Int(-5));
        assert_eq!(c, [0, -3, -4].map(Sample::Int));
    }

    #[test]
    fn list_shrinks_remove_chunks_first() {
        let g = GenSpec::list(GenSpec::int(0, 9), 10);
        let l = |xs: &[i64]| Sample::List(xs.iter().map(|x| Sample::Int(*x)).collect());
        let c = shrink(&g, &l(&[1, 2, 3]));
        let pos = |s: &Sample| c.iter().position(|x| x == s).unwrap();
        let first_elem_shrink = pos(&l(&[0, 2, 3]));
        for removal in [l(&[]), l(&[2, 3]), l(&[1, 2])] {
            assert!(pos(&removal) < first_elem_shrink);
        }
    }

    #[test]
    fn gen_spec_json() {
        let g: GenSpec =
            serde_json::from_str(r#"{"gen":"list","elem":{"gen":"int","min":0,"max":9},"max_len":10}"#).unwrap();
        assert_eq!(g, GenSpec::list(GenSpec::int(0, 9), 10));
        let g: GenSpec =
            serde_json::from_str(r#"{"gen":"map","base":{"gen":"int","min":0,"max":4},"expr":"fun n -> peano n"}"#)
                .unwrap();
        assert!(g.validate().is_ok());
        assert!(serde_json::from_str::<GenSpec>(r#"{"gen":"int","min":0,"max":9,"extra":1}"#).is_err());
        assert!(GenSpec::int(3, 1).validate().is_err());
    }

    fn sum(args: &[Sample]) -> i64 {
        match &args[0] {
            Sample::List(xs) => xs.iter().map(|x| if let Sample::Int(n) = x { *n } else { 0 }).sum(),
            _ => 0,
        }
    }

    fn fake_outcome(v: i64) -> RunOutcome {
        RunOutcome {
            result: RunResult::Done(Value::Int(v)),
            registry: Default::default(),
            vfs_report: Default::default(),
            stdout: Vec::new(),
            steps_used: 0,
            max_depth: 0,
            prim_calls: Default::default(),
        }
    }

    #[test]
    fn shrinks_to_a_local_minimum() {
        // "sum < 10" fails; the minimal failing list is [10].
        let gens = [GenSpec::list(GenSpec::int(0, 50), 8)];
        let trial = |a: &[Sample]| {
            Ok(if sum(a) < 10 {
                TrialOutcome::Agree
            } else {
                TrialOutcome::Disagree(Box::new(Discrepancy {
                    rendered_args: vec![a[0].to_string()],
                    student: fake_outcome(sum(a)),
                    reference: fake_outcome(0),
                }))
            })
        };
        let r = run_property(&gens, &PropertyConfig::default(), Seed::new(1), Parallelism::Sequential, trial).unwrap();
        let PropertyResult::Fail(cx) = r else { panic!("expected failure") };
        assert_eq!(cx.args, vec![Sample::List(vec![Sample::Int(10)])]);
        let par = run_property(&gens, &PropertyConfig::default(), Seed::new(1), Parallelism::Parallel, trial).unwrap();
        let PropertyResult::Fail(cx2) = par else { panic!("expected failure") };
        assert_eq!(cx.args, cx2.args);
        assert_eq!(cx.shrink_steps, cx2.shrink_steps);
    }

    #[test]
    fn always_true_passes() {
        let r = run_property(&[GenSpec::Bool], &PropertyConfig::default(), Seed::new(0), Parallelism::Parallel, |_| {
            Ok(TrialOutcome::Agree)
        })
        .unwrap();
        assert!(matches!(r, PropertyResult::Pass { trials: 100 }));
    }
}
