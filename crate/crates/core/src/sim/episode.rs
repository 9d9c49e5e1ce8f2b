use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use super::{
    ego_reward, step, Action, AgentId, EgoEvents, EpisodeStatus, RewardBreakdown, SimConfig,
    SimError, StepEvents, WorldState,
};
use crate::derive_seed;
use crate::geometry::Vec2;

/// A stop/go controller. One instance may drive several agents.
pub trait Policy {
    fn act(&mut self, world: &WorldState, agent: AgentId) -> Action;

    /// Called once at the start of every episode.
    fn reset(&mut self, _seed: u64) {}

    fn name(&self) -> String {
        "policy".into()
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn act(&mut self, world: &WorldState, agent: AgentId) -> Action {
        (**self).act(world, agent)
    }
    fn reset(&mut self, seed: u64) {
        (**self).reset(seed)
    }
    fn name(&self) -> String {
        (**self).name()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentSnapshot {
    pub id: AgentId,
    pub s: f64,
    pub position: Vec2,
    pub heading: f64,
    pub done: bool,
    /// Action taken during the step that produced this snapshot.
    pub action: Option<Action>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: u32,
    pub agents: Vec<AgentSnapshot>,
    pub reward: RewardBreakdown,
    pub events: TraceEvents,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEvents {
    pub collisions: Vec<(AgentId, AgentId)>,
    pub arrived: Vec<AgentId>,
    pub ego: EgoEvents,
    pub status: EpisodeStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub status: EpisodeStatus,
    /// Steps until the episode ended.
    pub length: u32,
    pub total_reward: f64,
    pub trace: Vec<StepRecord>,
}

/// Stateful driver around [`step`] that also computes the ego reward.
#[derive(Debug, Clone)]
pub struct Episode {
    pub world: WorldState,
    pub cfg: SimConfig,
}

impl Episode {
    pub fn new(world: WorldState, cfg: SimConfig) -> Self {
        Episode { world, cfg }
    }

    pub fn finished(&self) -> bool {
        self.world.status.is_terminal()
    }

    /// Asks `ego_policy` for the ego and `other_policy` for everyone else.
    pub fn collect_actions(
        &self,
        ego_policy: &mut dyn Policy,
        other_policy: &mut dyn Policy,
    ) -> BTreeMap<AgentId, Action> {
        let w = &self.world;
        w.agents
            .iter()
            .filter(|a| a.active())
            .map(|a| {
                let act = if a.id == w.ego {
                    ego_policy.act(w, a.id)
                } else {
                    other_policy.act(w, a.id)
                };
                (a.id, act)
            })
            .collect()
    }

    pub fn advance(
        &mut self,
        actions: &BTreeMap<AgentId, Action>,
    ) -> Result<(StepEvents, RewardBreakdown), SimError> {
        let (next, events) = step(&self.world, actions, &self.cfg)?;
        self.world = next;
        let beta = self.world.ego_agent().beta;
        Ok((events.clone(), ego_reward(beta, &events.ego)))
    }
}

fn snapshot(world: &WorldState, actions: &BTreeMap<AgentId, Action>) -> Vec<AgentSnapshot> {
    world
        .agents
        .iter()
        .map(|a| {
            let pose = a.pose();
            AgentSnapshot {
                id: a.id,
                s: a.s,
                position: pose.position,
                heading: pose.heading,
                done: a.done,
                action: actions.get(&a.id).copied(),
            }
        })
        .collect()
}

/// Runs one episode to termination. The trace holds the initial state
/// (`t = 0`, no actions) followed by one record per step.
pub fn run_episode(
    initial: WorldState,
    ego_policy: &mut dyn Policy,
    other_policy: &mut dyn Policy,
    cfg: &SimConfig,
    seed: u64,
) -> EpisodeResult {
    ego_policy.reset(derive_seed(seed, 1));
    other_policy.reset(derive_seed(seed, 2));
    let mut ep = Episode::new(initial, cfg.clone());
    let mut trace = vec![StepRecord {
        t: ep.world.t,
        agents: snapshot(&ep.world, &BTreeMap::new()),
        reward: RewardBreakdown::default(),
        events: TraceEvents {
            collisions: vec![],
            arrived: vec![],
            ego: EgoEvents::default(),
            status: ep.world.status,
        },
    }];
    let mut total = 0.0;
    while !ep.finished() {
        let actions = ep.collect_actions(ego_policy, other_policy);
        let (events, reward) = ep.advance(&actions).expect("every active agent has an action");
        total += reward.total;
        trace.push(StepRecord {
            t: ep.world.t,
            agents: snapshot(&ep.world, &actions),
            reward,
            events: TraceEvents {
                collisions: events.collisions,
                arrived: events.arrived,
                ego: events.ego,
                status: ep.world.status,
            },
        });
    }
    EpisodeResult {
        status: ep.world.status,
        length: ep.world.t,
        total_reward: total,
        trace,
    }
}

/// Writes one JSON object per step.
pub fn write_trace_jsonl<W: Write>(trace: &[StepRecord], mut out: W) -> std::io::Result<()> {
    for rec in trace {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
