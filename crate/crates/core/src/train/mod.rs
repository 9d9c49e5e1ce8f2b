//! Off-policy twin-head Q-learning against Oracle traffic.

mod qlearn;
mod replay;

use std::sync::Arc;

use crossroads_nn::{Adam, AdamConfig, ArchSpec, Checkpoint, Model, NnError, Parameters, Tape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curation::{CurationError, EpisodeSpec};
use crate::derive_seed;
use crate::eval::{run_specs, EvalContext, EvalError, Metrics};
use crate::obs::{encode, FEATURE_DIM, MAX_AGENTS};
use crate::planners::{Constant, Oracle};
use crate::sim::{Action, AgentId, Episode, Policy, SimError, WorldState};

pub use qlearn::*;
pub use replay::{ReplayBuffer, Transition};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("no training episodes")]
    NoEpisodes,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Curation(#[from] CurationError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid training config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub batch: usize,
    pub lr: f64,
    /// Training steps between lagged-parameter updates.
    pub lag_period: u64,
    pub lag_tau: f64,
    pub epsilon: EpsilonSchedule,
    pub replay_capacity: usize,
    /// Global gradient-norm bound.
    pub grad_clip: f64,
    pub episodes: usize,
    /// Gradient steps after each episode per environment step taken.
    pub updates_per_step: f64,
    /// Validate every this many episodes (0 disables periodic validation).
    pub val_every: usize,
    /// Use at most this many validation episodes.
    pub val_limit: Option<usize>,
    pub observation_radius: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            batch: 128,
            lr: 2e-5,
            lag_period: 100,
            lag_tau: 0.2,
            epsilon: EpsilonSchedule::default(),
            replay_capacity: 200_000,
            grad_clip: 10.0,
            episodes: 300,
            updates_per_step: 1.0,
            val_every: 50,
            val_limit: None,
            observation_radius: 10.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if self.batch == 0 || self.replay_capacity == 0 || self.lag_period == 0 {
            return bad("batch, replay_capacity and lag_period must be positive");
        }
        if !(self.lr > 0.0 && self.grad_clip > 0.0 && self.updates_per_step >= 0.0 && self.observation_radius > 0.0) {
            return bad("lr, grad_clip and observation_radius must be positive");
        }
        if !(0.0..=1.0).contains(&self.lag_tau) {
            return bad("lag_tau must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Greedy policy of a trained network (average of both heads).
#[derive(Debug, Clone)]
pub struct LearnedPolicy {
    pub model: Arc<Model>,
    pub params: Arc<Parameters>,
    pub radius: f64,
    pub label: String,
}

impl LearnedPolicy {
    pub fn new(model: Model, params: Parameters, radius: f64) -> Self {
        let label = model.spec.kind.label().to_string();
        LearnedPolicy {
            model: Arc::new(model),
            params: Arc::new(params),
            radius,
            label,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint, radius: f64) -> Result<Self, NnError> {
        let (m, p) = ck.load_model()?;
        Ok(LearnedPolicy::new(m, p, radius))
    }

    pub fn q(&self, world: &WorldState, agent: AgentId) -> Option<HeadValues> {
        let a = world.agent(agent)?;
        let obs = encode(world, agent, self.radius).ok()?;
        q_values(&self.model, &self.params, &obs, a.beta).ok()
    }
}

impl Policy for LearnedPolicy {
    fn act(&mut self, world: &WorldState, agent: AgentId) -> Action {
        self.q(world, agent).map_or(Action::Stop, |q| eval_action(&q))
    }
    fn name(&self) -> String {
        self.label.clone()
    }
}

/// One row of the learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub episode: usize,
    pub env_steps: u64,
    /// Mean per-step ego reward of the episode.
    pub mean_reward: f64,
    /// Mean loss over the gradient steps after the episode.
    pub loss: Option<f64>,
    pub val_success: Option<f64>,
    pub val_collision: Option<f64>,
    pub val_timeout: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub params: Parameters,
    pub train_steps: u64,
    pub curve: Vec<CurveRow>,
    /// Validation metrics of the untrained network.
    pub initial_val: Option<Metrics>,
    pub final_val: Option<Metrics>,
}

impl TrainOutcome {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.model.spec, self.train_steps, &self.params)
    }
}

pub fn default_spec(kind: crossroads_nn::ArchKind) -> ArchSpec {
    ArchSpec::new(kind, FEATURE_DIM, MAX_AGENTS)
}

/// Success/collision/timeout of the greedy network on `val`.
pub fn validate(
    ctx: &EvalContext<'_>,
    model: &Model,
    params: &Parameters,
    val: &[&EpisodeSpec],
    radius: f64,
) -> Result<Metrics, TrainError> {
    let mut ego = LearnedPolicy::new(model.clone(), params.clone(), radius);
    let mut others = Oracle::new(ctx.sim.clone(), ctx.oracle.clone());
    let o = run_specs(ctx, val, &mut ego, &mut others, 0, None)?;
    Ok(Metrics::of(&o))
}

struct Learner<'a> {
    cfg: &'a TrainConfig,
    model: Model,
    params: Parameters,
    lagged: Parameters,
    adam: Adam,
    replay: ReplayBuffer,
    rng: ChaCha8Rng,
    env_steps: u64,
    train_steps: u64,
}

impl Learner<'_> {
    /// Plays one episode with the exploring policy; returns (length, reward sum).
    fn play(&mut self, ctx: &EvalContext<'_>, spec: &EpisodeSpec) -> Result<(u32, f64), TrainError> {
        let beta = self.rng.gen_range(-1.0..=1.0);
        let world = spec.instantiate_with_beta(ctx.graph, Some(beta))?;
        let ego = world.ego;
        let mut ep = Episode::new(world, ctx.sim.clone());
        let mut oracle = Oracle::new(ctx.sim.clone(), ctx.oracle.clone());
        let mut obs = encode(&ep.world, ego, self.cfg.observation_radius).map_err(|e| TrainError::Config(e.to_string()))?;
        let mut total = 0.0;
        while !ep.finished() {
            let q = q_values(&self.model, &self.params, &obs, beta)?;
            let a = behavior_action(&q, self.env_steps, &self.cfg.epsilon, &mut self.rng);
            let mut actions = ep.collect_actions(&mut Constant(a), &mut oracle);
            actions.insert(ego, a);
            let (_, r) = ep.advance(&actions)?;
            self.env_steps += 1;
            total += r.total;
            let done = ep.finished();
            let next = if done { None } else { encode(&ep.world, ego, self.cfg.observation_radius).ok() };
            self.replay.push(Transition {
                obs,
                action: a,
                reward: r.total,
                next_obs: next.clone(),
                done: done || next.is_none(),
                beta,
            });
            match next {
                Some(n) => obs = n,
                None => break,
            }
        }
        Ok((ep.world.t, total))
    }

    fn update(&mut self) -> Result<f64, TrainError> {
        let idx = self.replay.sample_indices(self.cfg.batch, &mut self.rng);
        let batch: Vec<&Transition> = idx.iter().map(|&i| self.replay.get(i).expect("sampled index")).collect();
        let targets = td_targets(&self.model, &self.params, &self.lagged, &batch, self.cfg.gamma)?;
        let (loss, mut grads) = {
            let mut t = Tape::new(&self.params);
            let l = td_loss(&mut t, &self.model, &batch, &targets)?;
            (t.value(l)[0], t.backward(l).params)
        };
        grads.clip_global_norm(self.cfg.grad_clip);
        self.adam.step(&mut self.params, &grads);
        self.train_steps += 1;
        if self.train_steps % self.cfg.lag_period == 0 {
            self.lagged.blend_from(&self.params, self.cfg.lag_tau);
        }
        Ok(loss)
    }
}

/// Trains a fresh network. Deterministic for a given `seed`.
pub fn train(
    ctx: &EvalContext<'_>,
    cfg: &TrainConfig,
    spec: ArchSpec,
    train_set: &[&EpisodeSpec],
    val_set: &[&EpisodeSpec],
    seed: u64,
    mut progress: impl FnMut(&CurveRow),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::NoEpisodes);
    }
    let val: Vec<&EpisodeSpec> = match cfg.val_limit {
        Some(n) => val_set.iter().take(n).copied().collect(),
        None => val_set.to_vec(),
    };
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let (model, params) = Model::new(spec, &mut init_rng);
    let mut l = Learner {
        cfg,
        lagged: params.clone(),
        adam: Adam::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() }, &params),
        model,
        params,
        replay: ReplayBuffer::new(cfg.replay_capacity),
        rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, 1)),
        env_steps: 0,
        train_steps: 0,
    };
    let run_val = |l: &Learner| -> Result<Option<Metrics>, TrainError> {
        if val.is_empty() {
            return Ok(None);
        }
        validate(ctx, &l.model, &l.params, &val, cfg.observation_radius).map(Some)
    };
    let initial_val = run_val(&l)?;
    let mut curve = Vec::with_capacity(cfg.episodes + 1);
    let row0 = CurveRow {
        episode: 0,
        env_steps: 0,
        mean_reward: f64::NAN,
        loss: None,
        val_success: initial_val.map(|m| m.success_pct),
        val_collision: initial_val.map(|m| m.collision_pct),
        val_timeout: initial_val.map(|m| m.timeout_pct),
    };
    progress(&row0);
    curve.push(row0);
    let mut last_val = initial_val;
    for episode in 1..=cfg.episodes {
        let spec_idx = l.rng.gen_range(0..train_set.len());
        let (len, reward) = l.play(ctx, train_set[spec_idx])?;
        let n_updates = (len as f64 * cfg.updates_per_step).round() as usize;
        let mut losses = Vec::new();
        if l.replay.len() >= cfg.batch {
            for _ in 0..n_updates {
                losses.push(l.update()?);
            }
        }
        let validate_now = (cfg.val_every > 0 && episode % cfg.val_every == 0) || episode == cfg.episodes;
        let v = if validate_now { run_val(&l)? } else { None };
        if v.is_some() {
            last_val = v;
        }
        let row = CurveRow {
            episode,
            env_steps: l.env_steps,
            mean_reward: reward / len.max(1) as f64,
            loss: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
            val_success: v.map(|m| m.success_pct),
            val_collision: v.map(|m| m.collision_pct),
            val_timeout: v.map(|m| m.timeout_pct),
        };
        progress(&row);
        curve.push(row);
    }
    Ok(TrainOutcome {
        model: l.model,
        params: l.params,
        train_steps: l.train_steps,
        curve,
        initial_val,
        final_val: last_val,
    })
}

/// Writes the learning curve as CSV.
pub fn write_curve_csv<W: std::io::Write>(rows: &[CurveRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
