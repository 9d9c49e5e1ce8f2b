//! Scene builders shared by the integration tests.
#![allow(dead_code)]

use crossroads::curation::{CurationConfig, Curator};
use crossroads::geometry::Vec2;
use crossroads::map::{build_default_map, LaneGraph, RoutePlan};
use crossroads::planners::OracleConfig;
use crossroads::sim::{AgentId, AgentState, SimConfig, WorldState};

/// Straight route from `from` along `heading` (radians), sampled every 0.5 m.
pub fn straight(from: Vec2, heading: f64, len: f64) -> RoutePlan {
    let dir = Vec2::from_angle(heading);
    let n = (len / 0.5).ceil() as usize;
    let pts = (0..=n).map(|k| from + dir * (len * k as f64 / n as f64)).collect();
    RoutePlan::from_waypoints(pts, vec![], heading)
}

pub fn agent(id: AgentId, beta: f64, route: RoutePlan, s: f64) -> AgentState {
    let mut a = AgentState::new(id, beta, route).unwrap();
    a.s = s;
    a
}

pub fn world(agents: Vec<AgentState>, ego: AgentId) -> WorldState {
    WorldState::new(agents, ego).unwrap()
}

/// Ego (id 0) behind agent 1 on the same straight lane with a bumper gap.
pub fn following(gap: f64, beta_ego: f64, beta_lead: f64) -> WorldState {
    let sim = SimConfig::default();
    let route = straight(Vec2::ZERO, 0.0, 200.0);
    world(
        vec![agent(0, beta_ego, route.clone(), 10.0), agent(1, beta_lead, route, 10.0 + sim.footprint_length + gap)],
        0,
    )
}

/// Two agents heading for a right-angle crossing at the origin; each starts
/// `d` meters before it.
pub fn crossing(d0: f64, d1: f64, beta0: f64, beta1: f64) -> WorldState {
    let r0 = straight(Vec2::new(-d0, 0.0), 0.0, d0 + 40.0);
    let r1 = straight(Vec2::new(0.0, -d1), std::f64::consts::FRAC_PI_2, d1 + 40.0);
    world(vec![agent(0, beta0, r0, 0.0), agent(1, beta1, r1, 0.0)], 0)
}

pub fn default_parts() -> (LaneGraph, SimConfig, OracleConfig) {
    (build_default_map(), SimConfig::default(), OracleConfig::default())
}

pub fn curator(g: &LaneGraph) -> Curator<'_> {
    Curator::new(g, SimConfig::default(), OracleConfig::default(), CurationConfig::default())
}
