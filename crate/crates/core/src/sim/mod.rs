//! Multi-agent world under binary stop/go control.
//!
//! Every agent follows a fixed route at the nominal speed of its driver-type
//! or stands still. The world is a plain value and [`step`] is a pure
//! function from the old state to the new one.

mod episode;
mod reward;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::{OrientedRect, Vec2};
use crate::map::{Pose, RoutePlan};

pub use episode::{
    TraceEvents,
    run_episode, write_trace_jsonl, AgentSnapshot, Episode, EpisodeResult, Policy, StepRecord,
};
pub use reward::{ego_reward, EgoEvents, RewardBreakdown};

pub type AgentId = u32;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimError {
    #[error("driver-type {0} outside [-1, 1]")]
    Domain(f64),
    #[error("no action supplied for agent {0}")]
    MissingAction(AgentId),
    #[error("episode already finished")]
    Finished,
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
}

/// Simulation constants. All of them are surfaced in the run config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Seconds per timestep.
    pub dt: f64,
    /// Episode limit in steps.
    pub t_max: u32,
    /// Rollout horizon for time-to-collision, in steps.
    pub ttc_horizon: u32,
    pub footprint_length: f64,
    pub footprint_width: f64,
    /// Bumper-to-bumper gap below which the follow penalty applies.
    pub follow_distance: f64,
    /// Consecutive all-stationary steps that count as a stalemate.
    pub stalemate_window: u32,
    /// Euclidean radius of the ego observation.
    pub observation_radius: f64,
    /// Corridor half-width used when matching positions to a route.
    pub lateral_tolerance: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.1,
            t_max: 200,
            ttc_horizon: 100,
            footprint_length: 4.6,
            footprint_width: 2.0,
            follow_distance: 5.0,
            stalemate_window: 5,
            observation_radius: 10.0,
            lateral_tolerance: 1.75,
        }
    }
}

impl SimConfig {
    pub fn footprint(&self, pose: Pose) -> OrientedRect {
        OrientedRect::new(pose.position, pose.heading, self.footprint_length, self.footprint_width)
    }

    /// Footprint grown by `margin` on each end and each side.
    pub fn inflated_footprint(&self, pose: Pose, margin: Inflation) -> OrientedRect {
        OrientedRect::new(
            pose.position,
            pose.heading,
            self.footprint_length + 2.0 * margin.length,
            self.footprint_width + 2.0 * margin.width,
        )
    }
}

/// Footprint growth in meters: `length` at each end, `width` at each side.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Inflation {
    pub length: f64,
    pub width: f64,
}

impl Inflation {
    pub const NONE: Inflation = Inflation { length: 0.0, width: 0.0 };

    pub fn uniform(m: f64) -> Self {
        Inflation { length: m, width: m }
    }
}

/// Speed in m/s for a driver-type: `v = 2.7 beta + 8.3`.
pub fn nominal_speed(beta: f64) -> Result<f64, SimError> {
    if !(-1.0..=1.0).contains(&beta) {
        return Err(SimError::Domain(beta));
    }
    Ok(2.7 * beta + 8.3)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Stop = 0,
    Go = 1,
}

impl Action {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        if i == 0 {
            Action::Stop
        } else {
            Action::Go
        }
    }

    pub fn flipped(self) -> Action {
        match self {
            Action::Stop => Action::Go,
            Action::Go => Action::Stop,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: AgentId,
    pub beta: f64,
    pub route: Arc<RoutePlan>,
    /// Arc-length travelled along the route.
    pub s: f64,
    pub done: bool,
    /// Removed from the world after a collision with another non-ego agent.
    pub crashed: bool,
    pub goal: Vec2,
    /// Whether the agent advanced during the last step.
    pub moved: bool,
}

impl AgentState {
    pub fn new(id: AgentId, beta: f64, route: RoutePlan) -> Result<Self, SimError> {
        nominal_speed(beta)?;
        let goal = route.goal();
        let done = route.total_length() <= 0.0;
        Ok(AgentState {
            id,
            beta,
            route: Arc::new(route),
            s: 0.0,
            done,
            crashed: false,
            goal,
            moved: false,
        })
    }

    pub fn speed(&self) -> f64 {
        2.7 * self.beta + 8.3
    }

    /// Distance covered by one Go step.
    pub fn stride(&self, dt: f64) -> f64 {
        self.speed() * dt
    }

    pub fn pose(&self) -> Pose {
        self.route.pose_clamped(self.s)
    }

    pub fn position(&self) -> Vec2 {
        self.pose().position
    }

    pub fn active(&self) -> bool {
        !self.done
    }

    pub fn remaining(&self) -> f64 {
        (self.route.total_length() - self.s).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpisodeStatus {
    Running,
    Success,
    Collision,
    Timeout,
}

impl EpisodeStatus {
    pub fn is_terminal(self) -> bool {
        self != EpisodeStatus::Running
    }
}

/// Full simulation state. Agents are kept sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub t: u32,
    pub agents: Vec<AgentState>,
    pub ego: AgentId,
    pub status: EpisodeStatus,
    /// Consecutive steps the ego and its neighbours have all stood still.
    pub stalemate_steps: u32,
}

/// Everything that happened during one transition.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepEvents {
    pub collisions: Vec<(AgentId, AgentId)>,
    pub arrived: Vec<AgentId>,
    pub ego: EgoEvents,
}

impl WorldState {
    pub fn new(mut agents: Vec<AgentState>, ego: AgentId) -> Result<Self, SimError> {
        agents.sort_by_key(|a| a.id);
        if !agents.iter().any(|a| a.id == ego) {
            return Err(SimError::UnknownAgent(ego));
        }
        Ok(WorldState {
            t: 0,
            agents,
            ego,
            status: EpisodeStatus::Running,
            stalemate_steps: 0,
        })
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentState> {
        self.agents
            .binary_search_by_key(&id, |a| a.id)
            .ok()
            .map(|i| &self.agents[i])
    }

    pub fn agent_mut(&mut self, id: AgentId) -> Option<&mut AgentState> {
        self.agents
            .binary_search_by_key(&id, |a| a.id)
            .ok()
            .map(move |i| &mut self.agents[i])
    }

    pub fn ego_agent(&self) -> &AgentState {
        self.agent(self.ego).expect("ego present")
    }

    pub fn active_ids(&self) -> Vec<AgentId> {
        self.agents.iter().filter(|a| a.active()).map(|a| a.id).collect()
    }

    /// Active agents other than `id` within Euclidean `radius` (closed ball).
    pub fn neighbours(&self, id: AgentId, radius: f64) -> Vec<&AgentState> {
        let Some(me) = self.agent(id) else { return Vec::new() };
        let p = me.position();
        self.agents
            .iter()
            .filter(|a| a.id != id && a.active() && a.position().dist(p) <= radius)
            .collect()
    }
}

/// All unordered pairs of active agents whose footprints overlap, as
/// `(smaller id, larger id)` in ascending order.
pub fn detect_collisions(world: &WorldState, cfg: &SimConfig) -> Vec<(AgentId, AgentId)> {
    let rects: Vec<(AgentId, OrientedRect)> = world
        .agents
        .iter()
        .filter(|a| a.active())
        .map(|a| (a.id, cfg.footprint(a.pose())))
        .collect();
    let mut pairs = Vec::new();
    for i in 0..rects.len() {
        for j in i + 1..rects.len() {
            if rects[i].1.overlaps(&rects[j].1) {
                pairs.push((rects[i].0, rects[j].0));
            }
        }
    }
    pairs
}

/// Bumper-to-bumper gap to the closest active agent ahead on `id`'s route.
pub fn front_gap(world: &WorldState, id: AgentId, cfg: &SimConfig, look_ahead: f64) -> Option<f64> {
    let me = world.agent(id)?;
    world
        .agents
        .iter()
        .filter(|o| o.id != id && o.active())
        .filter_map(|o| {
            me.route.travel_distance_within(
                me.s,
                o.position(),
                cfg.lateral_tolerance,
                look_ahead + cfg.footprint_length,
            )
        })
        .filter(|d| *d > 0.0)
        .map(|d| d - cfg.footprint_length)
        .min_by(|a, b| a.total_cmp(b))
}

/// Advances the world by one timestep.
pub fn step(
    world: &WorldState,
    actions: &BTreeMap<AgentId, Action>,
    cfg: &SimConfig,
) -> Result<(WorldState, StepEvents), SimError> {
    if world.status.is_terminal() {
        return Err(SimError::Finished);
    }
    let mut next = world.clone();
    let mut events = StepEvents::default();
    for a in next.agents.iter_mut() {
        a.moved = false;
        if a.done {
            continue;
        }
        let act = *actions.get(&a.id).ok_or(SimError::MissingAction(a.id))?;
        if act == Action::Go {
            let total = a.route.total_length();
            a.s = (a.s + a.stride(cfg.dt)).min(total);
            a.moved = true;
            if a.s >= total - 1e-9 {
                a.s = total;
                a.done = true;
                events.arrived.push(a.id);
            }
        }
    }
    next.t += 1;

    events.collisions = detect_collisions(&next, cfg);
    let ego = next.ego;
    let ego_hit = events.collisions.iter().any(|&(a, b)| a == ego || b == ego);
    for &(a, b) in &events.collisions {
        for id in [a, b] {
            if id != ego {
                let ag = next.agent_mut(id).unwrap();
                ag.done = true;
                ag.crashed = true;
            }
        }
    }

    let ego_state = next.ego_agent();
    let ego_moved = ego_state.moved;
    let neighbours = next.neighbours(ego, cfg.observation_radius);
    let standstill = !ego_moved
        && ego_state.active()
        && !neighbours.is_empty()
        && neighbours.iter().all(|n| !n.moved);
    next.stalemate_steps = if standstill { next.stalemate_steps + 1 } else { 0 };

    next.status = if ego_hit {
        EpisodeStatus::Collision
    } else if next.ego_agent().done {
        EpisodeStatus::Success
    } else if next.t >= cfg.t_max {
        EpisodeStatus::Timeout
    } else {
        EpisodeStatus::Running
    };

    let follow_gap = if next.ego_agent().active() {
        front_gap(&next, ego, cfg, cfg.follow_distance).filter(|g| *g <= cfg.follow_distance)
    } else {
        None
    };
    events.ego = EgoEvents {
        moved: ego_moved,
        timeout: next.status == EpisodeStatus::Timeout,
        stalemate: next.stalemate_steps >= cfg.stalemate_window,
        collision: ego_hit,
        follow_gap,
    };
    Ok((next, events))
}

/// Time-to-collision in whole steps; `None` is infinity. Orders so that
/// infinity is larger than every finite value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ttc(pub Option<u32>);

impl Ttc {
    pub const INFINITE: Ttc = Ttc(None);

    pub fn is_finite(self) -> bool {
        self.0.is_some()
    }

    pub fn seconds(self, dt: f64) -> f64 {
        self.0.map_or(f64::INFINITY, |k| k as f64 * dt)
    }
}

impl Ord for Ttc {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        match (self.0, other.0) {
            (None, None) => std::cmp::Ordering::Equal,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (Some(_), None) => std::cmp::Ordering::Less,
            (Some(a), Some(b)) => a.cmp(&b),
        }
    }
}

impl PartialOrd for Ttc {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Time until agents `i` and `j` first overlap when each holds its action
/// forever and every other agent is ignored. Footprints are grown by
/// `margin` meters per side. An agent that reaches the end of its route
/// leaves the world, so no collision can follow.
pub fn time_to_collision_with_margin(
    world: &WorldState,
    i: AgentId,
    j: AgentId,
    a_i: Action,
    a_j: Action,
    cfg: &SimConfig,
    margin: Inflation,
) -> Ttc {
    let (Some(ai), Some(aj)) = (world.agent(i), world.agent(j)) else {
        return Ttc::INFINITE;
    };
    if i == j || !ai.active() || !aj.active() {
        return Ttc::INFINITE;
    }
    let vi = if a_i == Action::Go { ai.stride(cfg.dt) } else { 0.0 };
    let vj = if a_j == Action::Go { aj.stride(cfg.dt) } else { 0.0 };
    let (li, lj) = (ai.route.total_length(), aj.route.total_length());
    let reach = (cfg.footprint_length + 2.0 * margin.length).hypot(cfg.footprint_width + 2.0 * margin.width);
    let mut si = ai.s;
    let mut sj = aj.s;
    let static_i = cfg.inflated_footprint(ai.pose(), margin);
    let static_j = cfg.inflated_footprint(aj.pose(), margin);
    for k in 1..=cfg.ttc_horizon {
        if vi > 0.0 {
            si = (si + vi).min(li);
            if si >= li - 1e-9 {
                return Ttc::INFINITE;
            }
        }
        if vj > 0.0 {
            sj = (sj + vj).min(lj);
            if sj >= lj - 1e-9 {
                return Ttc::INFINITE;
            }
        }
        if vi == 0.0 && vj == 0.0 {
            break;
        }
        let pi = ai.route.pose_clamped(si);
        let pj = aj.route.pose_clamped(sj);
        if pi.position.dist(pj.position) >= reach {
            continue;
        }
        let ri = if vi > 0.0 { cfg.inflated_footprint(pi, margin) } else { static_i };
        let rj = if vj > 0.0 { cfg.inflated_footprint(pj, margin) } else { static_j };
        if ri.overlaps(&rj) {
            return Ttc(Some(k));
        }
    }
    Ttc::INFINITE
}

/// Exact-footprint time-to-collision.
pub fn time_to_collision(
    world: &WorldState,
    i: AgentId,
    j: AgentId,
    a_i: Action,
    a_j: Action,
    cfg: &SimConfig,
) -> Ttc {
    time_to_collision_with_margin(world, i, j, a_i, a_j, cfg, Inflation::NONE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;

    pub(crate) fn straight_route(from: Vec2, dir: Vec2, len: f64) -> RoutePlan {
        let n = (len / 0.5).ceil() as usize;
        let pts = (0..=n).map(|k| from + dir * (len * k as f64 / n as f64)).collect();
        RoutePlan::from_waypoints(pts, vec![], dir.angle())
    }

    fn agent(id: AgentId, beta: f64, route: RoutePlan) -> AgentState {
        AgentState::new(id, beta, route).unwrap()
    }

    fn go_all(w: &WorldState) -> BTreeMap<AgentId, Action> {
        w.active_ids().into_iter().map(|id| (id, Action::Go)).collect()
    }

    #[test]
    fn nominal_speed_law() {
        assert_eq!(nominal_speed(1.0).unwrap(), 11.0);
        assert!((nominal_speed(-1.0).unwrap() - 5.6).abs() < 1e-12);
        assert_eq!(nominal_speed(0.0).unwrap(), 8.3);
        assert_eq!(nominal_speed(1.2), Err(SimError::Domain(1.2)));
    }

    #[test]
    fn go_advances_by_stride_and_stop_holds() {
        let cfg = SimConfig::default();
        let r = straight_route(Vec2::ZERO, Vec2::new(1.0, 0.0), 50.0);
        let w = WorldState::new(vec![agent(0, 0.0, r)], 0).unwrap();
        let (w1, _) = step(&w, &go_all(&w), &cfg).unwrap();
        assert!((w1.agents[0].s - 0.83).abs() < 1e-12);
        assert_eq!(w1.t, 1);
        let stop: BTreeMap<_, _> = [(0, Action::Stop)].into();
        let (w2, ev) = step(&w1, &stop, &cfg).unwrap();
        assert_eq!(w2.agents[0].s, w1.agents[0].s);
        assert_eq!(w2.t, 2);
        assert!(!ev.ego.moved);
    }

    #[test]
    fn missing_action_is_an_error() {
        let cfg = SimConfig::default();
        let r = straight_route(Vec2::ZERO, Vec2::new(1.0, 0.0), 50.0);
        let w = WorldState::new(vec![agent(3, 0.0, r)], 3).unwrap();
        assert_eq!(step(&w, &BTreeMap::new(), &cfg).unwrap_err(), SimError::MissingAction(3));
    }

    #[test]
    fn reaching_route_end_marks_done_and_success() {
        let cfg = SimConfig::default();
        let r = straight_route(Vec2::ZERO, Vec2::new(1.0, 0.0), 1.0);
        let w = WorldState::new(vec![agent(0, 0.0, r)], 0).unwrap();
        let (w1, _) = step(&w, &go_all(&w), &cfg).unwrap();
        assert!(!w1.agents[0].done);
        let (w2, ev) = step(&w1, &go_all(&w1), &cfg).unwrap();
        assert!(w2.agents[0].done);
        assert_eq!(w2.agents[0].s, 1.0);
        assert_eq!(w2.status, EpisodeStatus::Success);
        assert_eq!(ev.arrived, vec![0]);
        assert_eq!(step(&w2, &BTreeMap::new(), &cfg).unwrap_err(), SimError::Finished);
    }

    #[test]
    fn collision_pairs_are_symmetric_and_sorted() {
        let cfg = SimConfig::default();
        let r = straight_route(Vec2::ZERO, Vec2::new(1.0, 0.0), 50.0);
        let far = straight_route(Vec2::new(0.0, 50.0), Vec2::new(1.0, 0.0), 50.0);
        let w = WorldState::new(
            vec![agent(5, 0.0, r.clone()), agent(2, 0.5, r), agent(9, 0.0, far)],
            2,
        )
        .unwrap();
        assert_eq!(detect_collisions(&w, &cfg), vec![(2, 5)]);
    }

    #[test]
    fn ttc_infinite_when_paths_never_meet() {
        let cfg = SimConfig::default();
        let a = straight_route(Vec2::ZERO, Vec2::new(1.0, 0.0), 60.0);
        let b = straight_route(Vec2::new(0.0, 30.0), Vec2::new(1.0, 0.0), 60.0);
        let w = WorldState::new(vec![agent(0, 0.0, a), agent(1, 0.0, b)], 0).unwrap();
        for ai in [Action::Stop, Action::Go] {
            for aj in [Action::Stop, Action::Go] {
                assert_eq!(time_to_collision(&w, 0, 1, ai, aj, &cfg), Ttc::INFINITE);
            }
        }
    }

    #[test]
    fn ttc_ordering_puts_infinity_last() {
        assert!(Ttc(Some(3)) < Ttc(Some(4)));
        assert!(Ttc(Some(400)) < Ttc::INFINITE);
        assert_eq!(Ttc::INFINITE.seconds(0.1), f64::INFINITY);
        assert!((Ttc(Some(7)).seconds(0.1) - 0.7).abs() < 1e-12);
    }
}
