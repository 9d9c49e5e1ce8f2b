//! Rule-based stop/go controllers.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::sim::{
    front_gap, time_to_collision_with_margin, Inflation, Action, AgentId, AgentState, Policy, SimConfig,
    WorldState,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// How far along either path another agent is noticed (meters).
    pub observation_travel_distance: f64,
    /// Rollout horizon for the pairwise time-to-collision, in steps.
    pub ttc_horizon: u32,
    /// Footprint inflation used in the Oracle's own rollouts.
    pub safety_margin: Inflation,
    /// Also notice agents whose upcoming path comes within the lateral
    /// tolerance of our own upcoming path.
    pub path_overlap: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            observation_travel_distance: 9.2,
            ttc_horizon: 100,
            safety_margin: Inflation { length: 3.0, width: 0.5 },
            path_overlap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarFollowerConfig {
    pub min_gap: f64,
}

impl Default for CarFollowerConfig {
    fn default() -> Self {
        CarFollowerConfig { min_gap: 4.0 }
    }
}

fn upcoming_points(a: &AgentState, dist: f64) -> impl Iterator<Item = crate::geometry::Vec2> + '_ {
    let len = a.route.total_length();
    let end = (a.s + dist).min(len);
    let n = ((end - a.s) / 0.5).ceil() as usize;
    (0..=n).map(move |k| {
        let s = if n == 0 { a.s } else { a.s + (end - a.s) * k as f64 / n as f64 };
        a.route.pose_clamped(s).position
    })
}

/// Whether `i` takes `j` into account.
pub fn oracle_observes(
    world: &WorldState,
    i: AgentId,
    j: AgentId,
    sim: &SimConfig,
    cfg: &OracleConfig,
) -> bool {
    let (Some(ai), Some(aj)) = (world.agent(i), world.agent(j)) else {
        return false;
    };
    if i == j || !aj.active() {
        return false;
    }
    let d = cfg.observation_travel_distance;
    let tol = sim.lateral_tolerance;
    let (pi, pj) = (ai.position(), aj.position());
    if pi.dist(pj) > 2.0 * d + tol + sim.footprint_length {
        return false;
    }
    // Bodies that are already close count regardless of the paths.
    if pi.dist(pj) <= sim.footprint_length + 2.0 * cfg.safety_margin.length.max(cfg.safety_margin.width) {
        return true;
    }
    if ai.route.travel_distance_within(ai.s, pj, tol, d).is_some()
        || aj.route.travel_distance_within(aj.s, pi, tol, d).is_some()
    {
        return true;
    }
    if cfg.path_overlap {
        let mine: Vec<_> = upcoming_points(ai, d).collect();
        for q in upcoming_points(aj, d) {
            if mine.iter().any(|p| p.dist(q) <= tol) {
                return true;
            }
        }
    }
    false
}

/// Pairwise time-to-collision comparison with every observed agent.
pub fn oracle_action(world: &WorldState, i: AgentId, sim: &SimConfig, cfg: &OracleConfig) -> Action {
    let Some(me) = world.agent(i) else { return Action::Stop };
    if !me.active() {
        return Action::Stop;
    }
    let mut rollout = sim.clone();
    rollout.ttc_horizon = cfg.ttc_horizon;
    for other in &world.agents {
        let j = other.id;
        if !oracle_observes(world, i, j, sim, cfg) {
            continue;
        }
        let m = cfg.safety_margin;
        let mut stop_go = time_to_collision_with_margin(world, i, j, Action::Stop, Action::Go, &rollout, m);
        let mut go_stop = time_to_collision_with_margin(world, i, j, Action::Go, Action::Stop, &rollout, m);
        if stop_go == go_stop && stop_go.is_finite() && m != Inflation::NONE {
            // Inflated footprints cannot separate the two; let the true ones
            // decide when they can.
            let exact_sg = time_to_collision_with_margin(world, i, j, Action::Stop, Action::Go, &rollout, Inflation::NONE);
            let exact_gs = time_to_collision_with_margin(world, i, j, Action::Go, Action::Stop, &rollout, Inflation::NONE);
            if exact_sg != exact_gs {
                (stop_go, go_stop) = (exact_sg, exact_gs);
            }
        }
        if stop_go > go_stop || (stop_go == go_stop && stop_go.is_finite() && j < i) {
            return Action::Stop;
        }
    }
    Action::Go
}

/// Stops whenever the agent ahead is within `min_gap` (bumper to bumper).
pub fn car_follower_action(
    world: &WorldState,
    i: AgentId,
    sim: &SimConfig,
    cfg: &CarFollowerConfig,
) -> Action {
    match front_gap(world, i, sim, cfg.min_gap) {
        Some(gap) if gap <= cfg.min_gap => Action::Stop,
        _ => Action::Go,
    }
}

#[derive(Debug, Clone, Default)]
pub struct Oracle {
    pub sim: SimConfig,
    pub cfg: OracleConfig,
}

impl Oracle {
    pub fn new(sim: SimConfig, cfg: OracleConfig) -> Self {
        Oracle { sim, cfg }
    }
}

impl Policy for Oracle {
    fn act(&mut self, world: &WorldState, agent: AgentId) -> Action {
        oracle_action(world, agent, &self.sim, &self.cfg)
    }
    fn name(&self) -> String {
        "oracle".into()
    }
}

#[derive(Debug, Clone, Default)]
pub struct CarFollower {
    pub sim: SimConfig,
    pub cfg: CarFollowerConfig,
}

impl CarFollower {
    pub fn new(sim: SimConfig, cfg: CarFollowerConfig) -> Self {
        CarFollower { sim, cfg }
    }
}

impl Policy for CarFollower {
    fn act(&mut self, world: &WorldState, agent: AgentId) -> Action {
        car_follower_action(world, agent, &self.sim, &self.cfg)
    }
    fn name(&self) -> String {
        "car-follower".into()
    }
}

/// Always returns the same action.
#[derive(Debug, Clone, Copy)]
pub struct Constant(pub Action);

impl Policy for Constant {
    fn act(&mut self, _world: &WorldState, _agent: AgentId) -> Action {
        self.0
    }
    fn name(&self) -> String {
        match self.0 {
            Action::Go => "always-go".into(),
            Action::Stop => "always-stop".into(),
        }
    }
}

/// Flips the wrapped policy's action with probability `p`, drawing from an
/// independent random stream per agent.
#[derive(Debug, Clone)]
pub struct Noisy<P> {
    pub inner: P,
    p: f64,
    seed: u64,
    streams: BTreeMap<AgentId, ChaCha8Rng>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("noise probability {0} outside [0, 1]")]
pub struct BadProbability(pub f64);

/// Wraps `policy` so that each action is flipped with probability `p`.
pub fn with_action_noise<P: Policy>(policy: P, p: f64, seed: u64) -> Result<Noisy<P>, BadProbability> {
    if !(0.0..=1.0).contains(&p) {
        return Err(BadProbability(p));
    }
    Ok(Noisy {
        inner: policy,
        p,
        seed,
        streams: BTreeMap::new(),
    })
}

impl<P: Policy> Policy for Noisy<P> {
    fn act(&mut self, world: &WorldState, agent: AgentId) -> Action {
        let a = self.inner.act(world, agent);
        let seed = self.seed;
        let rng = self
            .streams
            .entry(agent)
            .or_insert_with(|| ChaCha8Rng::seed_from_u64(derive_seed(seed, agent as u64)));
        if rng.gen_bool(self.p) {
            a.flipped()
        } else {
            a
        }
    }

    fn reset(&mut self, seed: u64) {
        self.inner.reset(seed);
        self.seed = seed;
        self.streams.clear();
    }

    fn name(&self) -> String {
        format!("{}+noise({})", self.inner.name(), self.p)
    }
}
