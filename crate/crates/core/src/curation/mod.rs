//! Episode families (generic, collision, interaction) and dataset manifests.

mod conflicts;
mod generate;
mod manifest;

use serde::{Deserialize, Serialize};

use crate::map::{JunctionId, JunctionKind, LaneGraph, LanePoint, MapError, SegmentId};
use crate::sim::{AgentId, AgentState, SimConfig, SimError, WorldState};

pub use conflicts::{
    conflict_triples, first_meeting, movement_conflicts, movements, Movement, MovementConflict,
    MEET_TOLERANCE,
};
pub use generate::{arrival_step, verify_collision, verify_interaction, Curator};
pub use manifest::{build_datasets, DatasetCounts, DatasetManifest, ManifestEntry, Split};

#[derive(Debug, thiserror::Error)]
pub enum CurationError {
    #[error("no valid {what} episode after {tries} attempts")]
    GenerationExhausted { what: String, tries: u32 },
    #[error("invalid interaction setting {0}")]
    BadSetting(u8),
    #[error("episode spec is invalid: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpisodeKind {
    Generic,
    Collision,
    Interaction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: AgentId,
    pub spawn: LanePoint,
    pub goal: LanePoint,
    pub beta: f64,
    /// Segment ids the route follows from spawn to goal.
    pub route: Vec<SegmentId>,
}

/// Self-contained description of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub kind: EpisodeKind,
    /// Interaction setting (1, 2 or 3).
    pub setting: Option<u8>,
    pub ego: AgentId,
    pub agents: Vec<AgentSpec>,
    /// Agents whose arrival at the shared conflict point is synchronized.
    pub conflict_agents: Vec<AgentId>,
    /// Junction holding the curated conflict, if any.
    pub junction: Option<JunctionId>,
    pub junction_kind: Option<JunctionKind>,
    /// Arrival of the other conflict agent minus arrival of the ego, in steps.
    pub perturbation: Option<i32>,
    pub seed: u64,
}

impl EpisodeSpec {
    pub fn agent(&self, id: AgentId) -> Option<&AgentSpec> {
        self.agents.iter().find(|a| a.id == id)
    }

    /// Builds the initial world.
    pub fn instantiate(&self, graph: &LaneGraph) -> Result<WorldState, CurationError> {
        self.instantiate_with_beta(graph, None)
    }

    /// Builds the initial world, optionally overriding the ego driver-type.
    pub fn instantiate_with_beta(
        &self,
        graph: &LaneGraph,
        ego_beta: Option<f64>,
    ) -> Result<WorldState, CurationError> {
        let mut agents = Vec::with_capacity(self.agents.len());
        for a in &self.agents {
            let route = graph.route_via(a.spawn, a.goal, &a.route)?;
            let beta = match ego_beta {
                Some(b) if a.id == self.ego => b,
                _ => a.beta,
            };
            agents.push(AgentState::new(a.id, beta, route)?);
        }
        let ids: std::collections::BTreeSet<_> = agents.iter().map(|a| a.id).collect();
        if ids.len() != agents.len() {
            return Err(CurationError::InvalidSpec("duplicate agent id".into()));
        }
        Ok(WorldState::new(agents, self.ego)?)
    }
}

/// Knobs for the episode generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationConfig {
    /// Inclusive agent-count range of generic episodes.
    pub generic_agents: (usize, usize),
    /// Route-length window for generic goals (meters).
    pub min_route_length: f64,
    pub max_route_length: f64,
    /// Largest arrival perturbation, in steps.
    pub jitter: i32,
    /// Earliest arrival step at the conflict point.
    pub min_arrival_steps: u32,
    /// Largest arrival gap between conflict agents, in steps.
    pub arrival_window: u32,
    /// Distance of the goal past the start of the outgoing lane (meters).
    pub goal_downstream: (f64, f64),
    /// Bumper gap of the trailing agent in setting 2.
    pub trailing_gap: f64,
    /// Extra agents placed away from the conflict (inclusive range).
    pub background_agents: (usize, usize),
    pub retry_limit: u32,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            generic_agents: (2, 25),
            min_route_length: 10.0,
            max_route_length: 80.0,
            jitter: 4,
            min_arrival_steps: 10,
            arrival_window: 4,
            goal_downstream: (5.0, 20.0),
            trailing_gap: 4.0,
            background_agents: (0, 2),
            retry_limit: 1000,
        }
    }
}

/// Checks that no two agents overlap at `t = 0`.
pub fn initial_overlap_free(world: &WorldState, sim: &SimConfig) -> bool {
    crate::sim::detect_collisions(world, sim).is_empty()
}
