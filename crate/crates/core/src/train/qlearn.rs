//! Targets, losses and action selection for the twin-head Q-learner.

use crossroads_nn::{ArchKind, ArchSpec, Model, NnError, Parameters, SetBatch, Tape, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::obs::{ObservationSet, FEATURE_DIM};
use crate::sim::Action;

use super::Transition;

/// Q-values of both heads for one observation: `[head][action]`.
pub type HeadValues = [[f64; 2]; 2];

/// Index of the larger entry; ties go to index 0 (Stop).
pub fn argmax(q: [f64; 2]) -> usize {
    usize::from(q[1] > q[0])
}

/// Bootstrapped target with each head's lagged copy evaluated at the
/// other head's greedy action, taking the smaller of the two.
pub fn td_target(reward: f64, done: bool, gamma: f64, current: &HeadValues, lagged: &HeadValues) -> f64 {
    if done {
        return reward;
    }
    let a1 = argmax(current[0]);
    let a2 = argmax(current[1]);
    reward + gamma * lagged[0][a2].min(lagged[1][a1])
}

/// Greedy action on the average of the two heads; ties stop.
pub fn eval_action(q: &HeadValues) -> Action {
    let mean = [(q[0][0] + q[1][0]) / 2.0, (q[0][1] + q[1][1]) / 2.0];
    Action::from_index(argmax(mean))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    /// Environment steps over which epsilon decays exponentially.
    pub steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            start: 1.0,
            end: 0.01,
            steps: 500,
        }
    }
}

impl EpsilonSchedule {
    pub fn at(&self, t: u64) -> f64 {
        if self.steps == 0 {
            return self.end;
        }
        let frac = t.min(self.steps) as f64 / self.steps as f64;
        self.start * (self.end / self.start).powf(frac)
    }
}

/// Epsilon-greedy around [`eval_action`].
pub fn behavior_action(q: &HeadValues, t: u64, schedule: &EpsilonSchedule, rng: &mut impl Rng) -> Action {
    if rng.gen_bool(schedule.at(t).clamp(0.0, 1.0)) {
        Action::from_index(rng.gen_range(0..2))
    } else {
        eval_action(q)
    }
}

/// Observation as network input; the fixed-size network keeps only the
/// nearest rows.
pub fn prepare(spec: &ArchSpec, obs: &ObservationSet) -> Vec<f64> {
    if spec.kind == ArchKind::Mlp && obs.len() > spec.max_agents {
        obs.nearest(spec.max_agents).flat()
    } else {
        obs.flat()
    }
}

pub fn batch_of<'a>(spec: &ArchSpec, items: impl IntoIterator<Item = (&'a ObservationSet, f64)>) -> Result<SetBatch, NnError> {
    let flats: Vec<(Vec<f64>, f64)> = items.into_iter().map(|(o, b)| (prepare(spec, o), b)).collect();
    SetBatch::from_sets(FEATURE_DIM, flats.iter().map(|(v, b)| (v.as_slice(), *b)))
}

pub fn q_values(model: &Model, params: &Parameters, obs: &ObservationSet, beta: f64) -> Result<HeadValues, NnError> {
    let b = batch_of(&model.spec, [(obs, beta)])?;
    Ok(model.q_values(params, &b)?[0])
}

/// Targets for a batch of transitions; terminal ones skip the networks.
pub fn td_targets(
    model: &Model,
    params: &Parameters,
    lagged: &Parameters,
    batch: &[&Transition],
    gamma: f64,
) -> Result<Vec<f64>, NnError> {
    let live: Vec<(&ObservationSet, f64)> = batch
        .iter()
        .filter_map(|t| t.next_obs.as_ref().filter(|_| !t.done).map(|o| (o, t.beta)))
        .collect();
    let (cur, lag) = if live.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        let b = batch_of(&model.spec, live)?;
        (model.q_values(params, &b)?, model.q_values(lagged, &b)?)
    };
    let mut k = 0;
    Ok(batch
        .iter()
        .map(|t| {
            if t.done || t.next_obs.is_none() {
                t.reward
            } else {
                k += 1;
                td_target(t.reward, false, gamma, &cur[k - 1], &lag[k - 1])
            }
        })
        .collect())
}

/// Mean over the batch of the squared TD error, summed over both heads.
/// `targets` enter as constants.
pub fn td_loss(t: &mut Tape, model: &Model, batch: &[&Transition], targets: &[f64]) -> Result<Var, NnError> {
    let input = batch_of(&model.spec, batch.iter().map(|tr| (&tr.obs, tr.beta)))?;
    let [q1, q2] = model.forward(t, &input)?;
    let actions: Vec<usize> = batch.iter().map(|tr| tr.action.index()).collect();
    let y = t.input(batch.len(), 1, targets.to_vec());
    let mut total = None;
    for q in [q1, q2] {
        let picked = t.pick(q, &actions);
        let d = t.sub(picked, y);
        let sq = t.square(d);
        let s = t.sum(sq);
        total = Some(match total {
            None => s,
            Some(acc) => t.add(acc, s),
        });
    }
    Ok(t.scale(total.expect("two heads"), 1.0 / batch.len() as f64))
}
