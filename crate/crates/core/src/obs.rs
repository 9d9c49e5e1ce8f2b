//! Ego-centric set observations.
//!
//! Row layout (version 1, 16 features):
//!
//! | index | feature                                        |
//! |-------|------------------------------------------------|
//! | 0, 1  | position relative to the ego, ego frame (m)    |
//! | 2, 3  | sin / cos of heading relative to the ego       |
//! | 4     | distance covered during the last step / dt     |
//! | 5     | 1 for the ego row, else 0                      |
//! | 6..16 | ego only: next 5 route points at 2 m spacing,  |
//! |       | ego frame, zero past the route end             |

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::sim::{AgentId, AgentState, WorldState};

pub const FEATURE_SCHEMA_VERSION: u32 = 1;
pub const WAYPOINTS: usize = 5;
pub const WAYPOINT_SPACING: f64 = 2.0;
pub const FEATURE_DIM: usize = 6 + 2 * WAYPOINTS;
/// Rows kept for fixed-size encodings.
pub const MAX_AGENTS: usize = 8;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "rel_x", "rel_y", "sin_heading", "cos_heading", "speed", "is_ego", "wp1_x", "wp1_y", "wp2_x",
    "wp2_y", "wp3_x", "wp3_y", "wp4_x", "wp4_y", "wp5_x", "wp5_y",
];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ObsError {
    #[error("{rows} rows exceed the limit of {max}")]
    TooManyAgents { rows: usize, max: usize },
    #[error("agent {0} is not active")]
    InactiveEgo(AgentId),
}

/// Ego row first, then every other active agent within the radius by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub rows: Vec<[f64; FEATURE_DIM]>,
    pub agent_ids: Vec<AgentId>,
}

impl ObservationSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Keeps the ego row and the `max - 1` closest others (ties by id),
    /// preserving id order among the kept rows.
    pub fn nearest(&self, max: usize) -> ObservationSet {
        if self.rows.len() <= max {
            return self.clone();
        }
        let mut order: Vec<usize> = (1..self.rows.len()).collect();
        let d = |k: usize| self.rows[k][0].hypot(self.rows[k][1]);
        order.sort_by(|&a, &b| d(a).total_cmp(&d(b)).then(a.cmp(&b)));
        let mut keep: Vec<usize> = order.into_iter().take(max.saturating_sub(1)).collect();
        keep.sort_unstable();
        let mut out = ObservationSet {
            rows: vec![self.rows[0]],
            agent_ids: vec![self.agent_ids[0]],
        };
        for k in keep {
            out.rows.push(self.rows[k]);
            out.agent_ids.push(self.agent_ids[k]);
        }
        out
    }

    pub fn flat(&self) -> Vec<f64> {
        self.rows.iter().flat_map(|r| r.iter().copied()).collect()
    }
}

fn to_frame(p: Vec2, origin: Vec2, heading: f64) -> Vec2 {
    (p - origin).rotate(-heading)
}

fn observed_speed(a: &AgentState) -> f64 {
    if a.moved {
        a.speed()
    } else {
        0.0
    }
}

/// Builds the observation of `ego` with every active agent inside the
/// closed ball of `radius` meters.
pub fn encode(world: &WorldState, ego: AgentId, radius: f64) -> Result<ObservationSet, ObsError> {
    let me = world.agent(ego).filter(|a| a.active()).ok_or(ObsError::InactiveEgo(ego))?;
    let pose = me.pose();
    let mut ego_row = [0.0; FEATURE_DIM];
    ego_row[3] = 1.0;
    ego_row[4] = observed_speed(me);
    ego_row[5] = 1.0;
    let len = me.route.total_length();
    for k in 0..WAYPOINTS {
        let s = me.s + WAYPOINT_SPACING * (k + 1) as f64;
        if s <= len {
            let q = to_frame(me.route.pose_clamped(s).position, pose.position, pose.heading);
            ego_row[6 + 2 * k] = q.x;
            ego_row[7 + 2 * k] = q.y;
        }
    }
    let mut out = ObservationSet {
        rows: vec![ego_row],
        agent_ids: vec![ego],
    };
    for a in world.agents.iter().filter(|a| a.id != ego && a.active()) {
        let p = a.pose();
        if p.position.dist(pose.position) > radius {
            continue;
        }
        let q = to_frame(p.position, pose.position, pose.heading);
        let dh = p.heading - pose.heading;
        let mut row = [0.0; FEATURE_DIM];
        row[0] = q.x;
        row[1] = q.y;
        row[2] = dh.sin();
        row[3] = dh.cos();
        row[4] = observed_speed(a);
        out.rows.push(row);
        out.agent_ids.push(a.id);
    }
    Ok(out)
}

/// Concatenates rows and zero-pads to `max_agents` rows.
pub fn pad_fixed(obs: &ObservationSet, max_agents: usize) -> Result<Vec<f64>, ObsError> {
    if obs.rows.len() > max_agents {
        return Err(ObsError::TooManyAgents {
            rows: obs.rows.len(),
            max: max_agents,
        });
    }
    let mut v = obs.flat();
    v.resize(max_agents * FEATURE_DIM, 0.0);
    Ok(v)
}
