//! Behavioral analyses. Each produces an [`AnalysisRecord`]: a table keyed
//! by a sorted independent variable, plus a few named summary numbers.

use std::collections::BTreeMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate, EvalContext, EvalError};
use crate::curation::{first_meeting, Curator, EpisodeSpec, MEET_TOLERANCE};
use crate::derive_seed;
use crate::obs::MAX_AGENTS;
use crate::planners::{oracle_observes, Oracle};
use crate::sim::{time_to_collision, time_to_collision_with_margin, Action, EpisodeStatus, Episode, Policy, Ttc, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalysisKind {
    Perturbation,
    MinTtc,
    Counterfactual,
    Sweep,
    Density,
}

impl AnalysisKind {
    pub const ALL: [AnalysisKind; 5] = [
        AnalysisKind::Perturbation,
        AnalysisKind::MinTtc,
        AnalysisKind::Counterfactual,
        AnalysisKind::Sweep,
        AnalysisKind::Density,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AnalysisKind::Perturbation => "perturbation",
            AnalysisKind::MinTtc => "minttc",
            AnalysisKind::Counterfactual => "counterfactual",
            AnalysisKind::Sweep => "sweep",
            AnalysisKind::Density => "density",
        }
    }
}

impl std::str::FromStr for AnalysisKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AnalysisKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| format!("unknown analysis `{s}`"))
    }
}

/// Rows are sorted by the first column, the independent variable. Missing
/// measurements are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub kind: AnalysisKind,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub summary: BTreeMap<String, f64>,
    /// Seeds of the episode specs the record was measured on.
    pub episodes: Vec<u64>,
}

impl AnalysisRecord {
    fn new(kind: AnalysisKind, columns: &[&str]) -> Self {
        AnalysisRecord {
            kind,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            summary: BTreeMap::new(),
            episodes: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Row whose first column equals `x`.
    pub fn row_at(&self, x: f64) -> Option<&[f64]> {
        self.rows.iter().find(|r| r[0] == x).map(Vec::as_slice)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Pre-step state of one ego decision.
pub struct EgoStep<'a> {
    pub world: &'a WorldState,
    pub action: Action,
    pub reward: f64,
}

/// Runs one episode exactly like [`crate::sim::run_episode`], calling
/// `visit` after every step with the world the ego acted on.
pub fn drive(
    ctx: &EvalContext<'_>,
    world: WorldState,
    ego: &mut dyn Policy,
    others: &mut dyn Policy,
    seed: u64,
    mut visit: impl FnMut(&EgoStep<'_>),
) -> EpisodeStatus {
    ego.reset(derive_seed(seed, 1));
    others.reset(derive_seed(seed, 2));
    let mut ep = Episode::new(world, ctx.sim.clone());
    while !ep.finished() {
        let before = ep.world.clone();
        let actions = ep.collect_actions(ego, others);
        let (_, reward) = ep.advance(&actions).expect("every active agent has an action");
        visit(&EgoStep {
            world: &before,
            action: actions[&before.ego],
            reward: reward.total,
        });
    }
    ep.world.status
}

fn go_pct(go: usize, n: usize) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        100.0 * go as f64 / n as f64
    }
}

/// Grid from `lo` to `hi` inclusive at `step`, rounded to micro-units so
/// that grid points print cleanly and zero is exactly zero.
pub fn offset_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as i64;
    (0..=n).map(|i| ((lo + i as f64 * step) * 1e6).round() / 1e6 + 0.0).collect()
}

/// Go-percentage of the ego before it reaches its conflict point, as a
/// function of how many seconds the other agent precedes it. Positive
/// offsets mean the other agent arrives first.
pub fn perturbation_study(
    ctx: &EvalContext<'_>,
    curator: &Curator<'_>,
    ego: &mut dyn Policy,
    offsets: &[f64],
    per_offset: usize,
    seed: u64,
) -> Result<AnalysisRecord, EvalError> {
    if offsets.is_empty() || per_offset == 0 {
        return Err(EvalError::Empty("perturbation grid"));
    }
    let mut grid = offsets.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut rec = AnalysisRecord::new(AnalysisKind::Perturbation, &["offset_s", "steps", "go_pct", "collision_pct"]);
    let mut others = Oracle::new(ctx.sim.clone(), ctx.oracle.clone());
    let mut regions: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (gi, &off) in grid.iter().enumerate() {
        let k = -(off / ctx.sim.dt).round() as i32;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, gi as u64));
        let (mut steps, mut go, mut crashes) = (0, 0, 0);
        for e in 0..per_offset {
            let spec = curator.gen_interaction_with_offset(k, &mut rng)?;
            rec.episodes.push(spec.seed);
            let world = spec.instantiate(ctx.graph)?;
            let other = spec.conflict_agents.iter().copied().find(|&a| a != spec.ego).expect("two conflict agents");
            let (me, them) = (world.ego_agent(), world.agent(other).expect("conflict agent exists"));
            let Some((s_conflict, _)) = first_meeting(&me.route, 0.0, &them.route, 0.0, MEET_TOLERANCE) else {
                continue;
            };
            let status = drive(ctx, world, ego, &mut others, derive_seed(derive_seed(seed, gi as u64), e as u64), |st| {
                if st.world.ego_agent().s < s_conflict {
                    steps += 1;
                    go += (st.action == Action::Go) as usize;
                }
            });
            crashes += (status == EpisodeStatus::Collision) as usize;
        }
        let region = match off.abs() {
            a if a <= 0.3 => "ambiguous",
            a if a >= 1.5 => "clear",
            _ => "middle",
        };
        let side = if off.abs() <= 0.3 { "" } else if off > 0.0 { "_other_first" } else { "_ego_first" };
        let r = regions.entry(format!("{region}{side}")).or_default();
        r.0 += steps;
        r.1 += go;
        rec.rows.push(vec![off, steps as f64, go_pct(go, steps), 100.0 * crashes as f64 / per_offset as f64]);
    }
    for (k, (n, g)) in regions {
        rec.summary.insert(format!("go_pct_{k}"), go_pct(g, n));
    }
    Ok(rec)
}

/// Default min-TTC bin edges in seconds; the last bin is open and a
/// separate bin collects infinite TTC.
pub const MIN_TTC_EDGES: [f64; 8] = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0, 10.0];

/// Smallest TTC between the ego and any agent it would notice if both
/// go, seen through the planner's own lens: Oracle observation rule,
/// rollout horizon and safety margin.
pub fn min_ttc_if_both_go(ctx: &EvalContext<'_>, world: &WorldState) -> Ttc {
    let mut rollout = ctx.sim.clone();
    rollout.ttc_horizon = ctx.oracle.ttc_horizon;
    world
        .agents
        .iter()
        .filter(|a| oracle_observes(world, world.ego, a.id, &ctx.sim, &ctx.oracle))
        .map(|a| time_to_collision_with_margin(world, world.ego, a.id, Action::Go, Action::Go, &rollout, ctx.oracle.safety_margin))
        .min()
        .unwrap_or(Ttc::INFINITE)
}

fn ttc_bin(ttc: Ttc, dt: f64, edges: &[f64]) -> usize {
    match ttc.0 {
        None => edges.len(),
        Some(_) => {
            let s = ttc.seconds(dt);
            edges.iter().rposition(|&e| s >= e).unwrap_or(0)
        }
    }
}

/// Go-percentage of each policy per bin of min TTC-if-both-go. Rows are
/// keyed by the bin's lower edge; the infinite bin is keyed by `inf`.
pub fn min_ttc_study(
    ctx: &EvalContext<'_>,
    specs: &[&EpisodeSpec],
    policies: [&mut dyn Policy; 2],
    edges: &[f64],
    seed: u64,
) -> Result<AnalysisRecord, EvalError> {
    if specs.is_empty() {
        return Err(EvalError::Empty("split has no episodes"));
    }
    let nb = edges.len() + 1;
    let mut counts = [vec![(0usize, 0usize); nb], vec![(0usize, 0usize); nb]];
    let mut others = Oracle::new(ctx.sim.clone(), ctx.oracle.clone());
    for (p, policy) in policies.into_iter().enumerate() {
        for (i, spec) in specs.iter().enumerate() {
            let world = spec.instantiate(ctx.graph)?;
            drive(ctx, world, policy, &mut others, derive_seed(seed, i as u64), |st| {
                let b = ttc_bin(min_ttc_if_both_go(ctx, st.world), ctx.sim.dt, edges);
                counts[p][b].0 += 1;
                counts[p][b].1 += (st.action == Action::Go) as usize;
            });
        }
    }
    let mut rec = AnalysisRecord::new(
        AnalysisKind::MinTtc,
        &["ttc_lo_s", "ttc_hi_s", "steps_a", "go_pct_a", "steps_b", "go_pct_b"],
    );
    rec.episodes = specs.iter().map(|s| s.seed).collect();
    for b in 0..nb {
        let ([na, ga], [nb_, gb]) = ([counts[0][b].0, counts[0][b].1], [counts[1][b].0, counts[1][b].1]);
        if na + nb_ == 0 {
            continue;
        }
        let (lo, hi) = if b == edges.len() {
            (f64::INFINITY, f64::INFINITY)
        } else {
            (edges[b], edges.get(b + 1).copied().unwrap_or(f64::INFINITY))
        };
        rec.rows.push(vec![lo, hi, na as f64, go_pct(ga, na), nb_ as f64, go_pct(gb, nb_)]);
    }
    Ok(rec)
}

/// Smallest TTC between the ego going and any other agent stopping.
pub fn min_ttc_go_vs_stop(ctx: &EvalContext<'_>, world: &WorldState) -> Ttc {
    world
        .agents
        .iter()
        .filter(|a| a.id != world.ego && a.active())
        .map(|a| time_to_collision(world, world.ego, a.id, Action::Go, Action::Stop, &ctx.sim))
        .min()
        .unwrap_or(Ttc::INFINITE)
}

/// Rolls out with `reference` as the ego and, at every highly interactive
/// step (ego-go / other-stop TTC below `threshold_s`), asks `probe` what
/// it would do in the same state. Rows: `(episode, t, ttc_s, reference,
/// probe)` with actions as 0 = stop, 1 = go.
pub fn counterfactual_log(
    ctx: &EvalContext<'_>,
    specs: &[&EpisodeSpec],
    reference: &mut dyn Policy,
    probe: &mut dyn Policy,
    threshold_s: f64,
    seed: u64,
) -> Result<AnalysisRecord, EvalError> {
    let mut rec = AnalysisRecord::new(AnalysisKind::Counterfactual, &["episode", "t", "ttc_s", "reference", "probe"]);
    rec.episodes = specs.iter().map(|s| s.seed).collect();
    let mut others = Oracle::new(ctx.sim.clone(), ctx.oracle.clone());
    let (mut agree, mut disagree) = (0usize, 0usize);
    for (i, spec) in specs.iter().enumerate() {
        let world = spec.instantiate(ctx.graph)?;
        let s = derive_seed(seed, i as u64);
        probe.reset(derive_seed(s, 1));
        drive(ctx, world, reference, &mut others, s, |st| {
            let ttc = min_ttc_go_vs_stop(ctx, st.world).seconds(ctx.sim.dt);
            if ttc < threshold_s {
                let alt = probe.act(st.world, st.world.ego);
                if alt == st.action {
                    agree += 1;
                } else {
                    disagree += 1;
                }
                rec.rows.push(vec![i as f64, st.world.t as f64, ttc, st.action.index() as f64, alt.index() as f64]);
            }
        });
    }
    rec.summary.insert("agree".into(), agree as f64);
    rec.summary.insert("disagree".into(), disagree as f64);
    Ok(rec)
}

/// Evaluates the same ego at each driver type; one metrics row per β.
pub fn driver_type_sweep(
    ctx: &EvalContext<'_>,
    specs: &[&EpisodeSpec],
    make_ego: &mut dyn FnMut(u64) -> Box<dyn Policy>,
    betas: &[f64],
    seeds: &[u64],
) -> Result<AnalysisRecord, EvalError> {
    if let Some(&b) = betas.iter().find(|b| !(-1.0..=1.0).contains(*b)) {
        return Err(EvalError::BadBeta(b));
    }
    if betas.is_empty() {
        return Err(EvalError::Empty("no driver types"));
    }
    let mut grid = betas.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut rec = AnalysisRecord::new(
        AnalysisKind::Sweep,
        &["beta", "time_to_finish", "collision_pct", "timeout_pct", "success_pct"],
    );
    rec.episodes = specs.iter().map(|s| s.seed).collect();
    for b in grid {
        let m = evaluate(ctx, specs, make_ego, seeds, 0.0, Some(b))?.overall;
        rec.rows.push(vec![b, m.time_to_finish, m.collision_pct, m.timeout_pct, m.success_pct]);
    }
    Ok(rec)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Ego reward per step binned by the number of other agents within the
/// observation radius (clamped to the encoder's capacity).
pub fn density_analysis(
    ctx: &EvalContext<'_>,
    specs: &[&EpisodeSpec],
    ego: &mut dyn Policy,
    seed: u64,
) -> Result<AnalysisRecord, EvalError> {
    let mut bins: Vec<Vec<f64>> = vec![Vec::new(); MAX_AGENTS + 1];
    let mut others = Oracle::new(ctx.sim.clone(), ctx.oracle.clone());
    for (i, spec) in specs.iter().enumerate() {
        let world = spec.instantiate(ctx.graph)?;
        drive(ctx, world, ego, &mut others, derive_seed(seed, i as u64), |st| {
            let n = st.world.neighbours(st.world.ego, ctx.sim.observation_radius).len().min(MAX_AGENTS);
            bins[n].push(st.reward);
        });
    }
    let mut rec = AnalysisRecord::new(
        AnalysisKind::Density,
        &["agents", "steps", "p0_5", "q1", "median", "q3", "p99_5"],
    );
    rec.episodes = specs.iter().map(|s| s.seed).collect();
    for (n, mut r) in bins.into_iter().enumerate() {
        if r.is_empty() {
            continue;
        }
        r.sort_by(f64::total_cmp);
        let q = |p| quantile(&r, p);
        rec.rows.push(vec![n as f64, r.len() as f64, q(0.005), q(0.25), q(0.5), q(0.75), q(0.995)]);
    }
    Ok(rec)
}
