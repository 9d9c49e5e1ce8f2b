//! Evaluation metrics and the behavioral analyses.

mod analysis;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::curation::{CurationError, EpisodeKind, EpisodeSpec};
use crate::derive_seed;
use crate::map::LaneGraph;
use crate::planners::{with_action_noise, BadProbability, Oracle, OracleConfig};
use crate::sim::{run_episode, EpisodeStatus, Policy, SimConfig};

pub use analysis::*;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("nothing to evaluate: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Curation(#[from] CurationError),
    #[error(transparent)]
    Noise(#[from] BadProbability),
    #[error("driver type {0} outside [-1, 1]")]
    BadBeta(f64),
}

/// Shared evaluation context.
#[derive(Debug, Clone)]
pub struct EvalContext<'g> {
    pub graph: &'g LaneGraph,
    pub sim: SimConfig,
    pub oracle: OracleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub index: usize,
    pub kind: EpisodeKind,
    /// Junction kind of the curated conflict, `none` for generic scenes.
    pub junction: String,
    pub status: EpisodeStatus,
    pub length: u32,
    pub total_reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub episodes: usize,
    pub time_to_finish: f64,
    pub collision_pct: f64,
    pub timeout_pct: f64,
    pub success_pct: f64,
}

impl Metrics {
    pub fn of(outcomes: &[EpisodeOutcome]) -> Metrics {
        let n = outcomes.len();
        if n == 0 {
            return Metrics::default();
        }
        let pct = |s: EpisodeStatus| 100.0 * outcomes.iter().filter(|o| o.status == s).count() as f64 / n as f64;
        let collision_pct = pct(EpisodeStatus::Collision);
        let timeout_pct = pct(EpisodeStatus::Timeout);
        Metrics {
            episodes: n,
            time_to_finish: outcomes.iter().map(|o| o.length as f64).sum::<f64>() / n as f64,
            collision_pct,
            timeout_pct,
            // Complement so the three always sum to exactly 100.
            success_pct: 100.0 - collision_pct - timeout_pct,
        }
    }
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    if n == 0.0 {
        return (0.0, 0.0);
    }
    let m = xs.clone().sum::<f64>() / n;
    let v = xs.map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: String,
    pub seeds: Vec<u64>,
    pub noise_p: f64,
    /// Over every episode of every seed.
    pub overall: Metrics,
    /// Standard deviation across seeds of each seed's metrics.
    pub std: Metrics,
    pub per_seed: Vec<(u64, Metrics)>,
    pub per_junction: BTreeMap<String, Metrics>,
    pub outcomes: Vec<(u64, EpisodeOutcome)>,
}

/// Runs each spec once with `ego` in the ego seat and `others` everywhere
/// else. `ego_beta` overrides the stored ego driver type.
pub fn run_specs(
    ctx: &EvalContext<'_>,
    specs: &[&EpisodeSpec],
    ego: &mut dyn Policy,
    others: &mut dyn Policy,
    seed: u64,
    ego_beta: Option<f64>,
) -> Result<Vec<EpisodeOutcome>, EvalError> {
    if let Some(b) = ego_beta.filter(|b| !(-1.0..=1.0).contains(b)) {
        return Err(EvalError::BadBeta(b));
    }
    let mut out = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let world = spec.instantiate_with_beta(ctx.graph, ego_beta)?;
        let r = run_episode(world, ego, others, &ctx.sim, derive_seed(seed, i as u64));
        out.push(EpisodeOutcome {
            index: i,
            kind: spec.kind,
            junction: spec.junction_kind.map_or("none", |k| k.label()).to_string(),
            status: r.status,
            length: r.length,
            total_reward: r.total_reward,
        });
    }
    Ok(out)
}

/// Evaluates `make_ego(seed)` against Oracle traffic whose actions are
/// flipped with probability `noise_p`, once per seed.
pub fn evaluate(
    ctx: &EvalContext<'_>,
    specs: &[&EpisodeSpec],
    make_ego: &mut dyn FnMut(u64) -> Box<dyn Policy>,
    seeds: &[u64],
    noise_p: f64,
    ego_beta: Option<f64>,
) -> Result<MetricsReport, EvalError> {
    if specs.is_empty() {
        return Err(EvalError::Empty("split has no episodes"));
    }
    if seeds.is_empty() {
        return Err(EvalError::Empty("no seeds"));
    }
    let mut outcomes = Vec::new();
    let mut per_seed = Vec::new();
    let mut name = String::new();
    for &seed in seeds {
        let mut ego = make_ego(seed);
        name = ego.name();
        let mut others = with_action_noise(Oracle::new(ctx.sim.clone(), ctx.oracle.clone()), noise_p, seed)?;
        let o = run_specs(ctx, specs, &mut ego, &mut others, seed, ego_beta)?;
        per_seed.push((seed, Metrics::of(&o)));
        outcomes.extend(o.into_iter().map(|x| (seed, x)));
    }
    let all: Vec<EpisodeOutcome> = outcomes.iter().map(|(_, o)| o.clone()).collect();
    let mut by_junction: BTreeMap<String, Vec<EpisodeOutcome>> = BTreeMap::new();
    for o in &all {
        by_junction.entry(o.junction.clone()).or_default().push(o.clone());
    }
    let ms = |f: fn(&Metrics) -> f64| mean_std(per_seed.iter().map(move |(_, m)| f(m))).1;
    Ok(MetricsReport {
        policy: name,
        seeds: seeds.to_vec(),
        noise_p,
        overall: Metrics::of(&all),
        std: Metrics {
            episodes: specs.len(),
            time_to_finish: ms(|m| m.time_to_finish),
            collision_pct: ms(|m| m.collision_pct),
            timeout_pct: ms(|m| m.timeout_pct),
            success_pct: ms(|m| m.success_pct),
        },
        per_seed,
        per_junction: by_junction.iter().map(|(k, v)| (k.clone(), Metrics::of(v))).collect(),
        outcomes,
    })
}

/// [`evaluate`] with noisy traffic; kept separate for clarity at call sites.
pub fn noise_robustness(
    ctx: &EvalContext<'_>,
    specs: &[&EpisodeSpec],
    make_ego: &mut dyn FnMut(u64) -> Box<dyn Policy>,
    seeds: &[u64],
    p: f64,
) -> Result<MetricsReport, EvalError> {
    evaluate(ctx, specs, make_ego, seeds, p, None)
}
