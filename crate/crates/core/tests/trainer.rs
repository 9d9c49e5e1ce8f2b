mod common;

use crossroads::curation::{build_datasets, DatasetCounts, Split};
use crossroads::eval::EvalContext;
use crossroads::obs::encode;
use crossroads::sim::Action;
use crossroads::train::{
    argmax, default_spec, eval_action, q_values, td_loss, td_target, td_targets, train, write_curve_csv,
    EpsilonSchedule, HeadValues, ReplayBuffer, TrainConfig, Transition,
};
use crossroads_nn::{ArchKind, Model, Parameters, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Values on a coarse grid so that ties occur often.
fn grid_heads(rng: &mut ChaCha8Rng) -> HeadValues {
    let mut v = || rng.gen_range(-4..=4) as f64 * 0.5;
    [[v(), v()], [v(), v()]]
}

/// Greedy action by exhaustive comparison: the first action no other beats.
fn greedy(q: [f64; 2]) -> usize {
    (0..2).find(|&a| (0..2).all(|b| q[a] >= q[b])).unwrap()
}

#[test]
fn td_target_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let (cur, lag) = (grid_heads(&mut rng), grid_heads(&mut rng));
        let r = rng.gen_range(-50.0..5.0);
        let gamma = rng.gen_range(0.5..0.999);
        let done = rng.gen_bool(0.2);
        let expected = if done {
            r
        } else {
            let (a1, a2) = (greedy(cur[0]), greedy(cur[1]));
            let cands = [lag[0][a2], lag[1][a1]];
            r + gamma * if cands[0] <= cands[1] { cands[0] } else { cands[1] }
        };
        assert_eq!(td_target(r, done, gamma, &cur, &lag), expected);
    }
}

#[test]
fn td_target_worked_example() {
    // Head 1 prefers Go, head 2 prefers Stop.
    let cur = [[1.0, 2.0], [3.0, 0.0]];
    let lag = [[5.0, 9.0], [8.0, 6.0]];
    // lag head 1 at head 2's choice (Stop) = 5; lag head 2 at head 1's choice (Go) = 6.
    assert_eq!(td_target(-1.0, false, 0.9, &cur, &lag), -1.0 + 0.9 * 5.0);
    assert_eq!(td_target(-1.0, true, 0.9, &cur, &lag), -1.0);
}

#[test]
fn eval_action_matches_brute_force_and_ignores_shifts() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let q = grid_heads(&mut rng);
        let mean = [(q[0][0] + q[1][0]) / 2.0, (q[0][1] + q[1][1]) / 2.0];
        let a = eval_action(&q);
        assert_eq!(a, Action::from_index(greedy(mean)));
        let c = rng.gen_range(-8..=8) as f64;
        let shifted = q.map(|h| h.map(|x| x + c));
        assert_eq!(eval_action(&shifted), a);
    }
    assert_eq!(eval_action(&[[1.0, 1.0], [2.0, 2.0]]), Action::Stop);
    assert_eq!(argmax([0.0, 0.0]), 0);
}

#[test]
fn epsilon_decays_exponentially() {
    let e = EpsilonSchedule::default();
    assert_eq!(e.at(0), 1.0);
    assert!((e.at(250) - 0.1).abs() < 1e-12);
    assert!((e.at(500) - 0.01).abs() < 1e-15);
    assert_eq!(e.at(10_000), e.at(500));
    assert!((1..500).all(|t| e.at(t) < e.at(t - 1)));
}

fn params_filled(v: f64) -> Parameters {
    let mut p = Parameters::new();
    p.add("w", Tensor { shape: vec![2, 2], data: vec![v; 4] });
    p.add("b", Tensor { shape: vec![3], data: vec![v; 3] });
    p
}

#[test]
fn lagged_blend_moves_a_fraction_of_the_way() {
    let mut lag = params_filled(0.0);
    let live = params_filled(1.0);
    lag.blend_from(&live, 0.2);
    assert!(lag.iter().all(|(_, t)| t.data.iter().all(|&x| (x - 0.2).abs() < 1e-15)));
    lag.blend_from(&live, 0.2);
    assert!(lag.iter().all(|(_, t)| t.data.iter().all(|&x| (x - 0.36).abs() < 1e-15)));
    lag.blend_from(&live, 1.0);
    assert_eq!(lag, live);
}

fn transition(reward: f64, done: bool) -> Transition {
    let w = common::following(6.0, 0.0, 0.0);
    let obs = encode(&w, 0, 10.0).unwrap();
    Transition {
        next_obs: (!done).then(|| obs.clone()),
        obs,
        action: Action::Go,
        reward,
        done,
        beta: 0.25,
    }
}

#[test]
fn replay_is_a_bounded_fifo_with_seeded_sampling() {
    let mut r = ReplayBuffer::new(3);
    for k in 0..5 {
        r.push(transition(k as f64, false));
    }
    assert_eq!(r.len(), 3);
    assert_eq!(r.iter().map(|t| t.reward).collect::<Vec<_>>(), vec![2.0, 3.0, 4.0]);
    let a = r.sample_indices(50, &mut ChaCha8Rng::seed_from_u64(9));
    let b = r.sample_indices(50, &mut ChaCha8Rng::seed_from_u64(9));
    assert_eq!(a, b);
    assert!(a.iter().all(|&i| i < 3));
    assert!(ReplayBuffer::new(4).sample_indices(5, &mut ChaCha8Rng::seed_from_u64(0)).is_empty());
}

#[test]
fn td_loss_is_the_mean_squared_error_over_both_heads() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for kind in [ArchKind::Mlp, ArchKind::DeepSet, ArchKind::SocialAttention, ArchKind::Midas] {
        let (model, params) = Model::new(default_spec(kind), &mut rng);
        let batch = [transition(-0.1, false), transition(-45.0, true)];
        let refs: Vec<&Transition> = batch.iter().collect();
        let targets = [3.0, -2.0];
        let mut t = Tape::new(&params);
        let l = td_loss(&mut t, &model, &refs, &targets).unwrap();
        let expected: f64 = refs
            .iter()
            .zip(targets)
            .map(|(tr, y)| {
                let q = q_values(&model, &params, &tr.obs, tr.beta).unwrap();
                let a = tr.action.index();
                (q[0][a] - y).powi(2) + (q[1][a] - y).powi(2)
            })
            .sum::<f64>()
            / 2.0;
        assert!((t.value(l)[0] - expected).abs() < 1e-9, "{kind}");

        // Terminal transitions bootstrap nothing.
        let ys = td_targets(&model, &params, &params, &refs, 0.99).unwrap();
        assert_eq!(ys[1], -45.0);
        let q = q_values(&model, &params, batch[0].next_obs.as_ref().unwrap(), 0.25).unwrap();
        assert_eq!(ys[0], td_target(-0.1, false, 0.99, &q, &q));
    }
}

#[test]
fn tiny_training_runs_are_deterministic() {
    let (g, sim, oracle) = common::default_parts();
    let c = common::curator(&g);
    let m = build_datasets(&c, &DatasetCounts::default(), 0.01, 0).unwrap();
    let ctx = EvalContext { graph: &g, sim, oracle };
    let train_set = m.split(Split::Train);
    let val = m.split(Split::Val);
    let cfg = TrainConfig { episodes: 4, batch: 16, lr: 1e-3, val_every: 2, val_limit: Some(2), ..TrainConfig::default() };
    let run = |kind| {
        let o = train(&ctx, &cfg, default_spec(kind), &train_set, &val, 7, |_| {}).unwrap();
        let mut csv = Vec::new();
        write_curve_csv(&o.curve, &mut csv).unwrap();
        (o.params, o.train_steps, csv)
    };
    for kind in [ArchKind::Mlp, ArchKind::DeepSet] {
        let (pa, sa, ca) = run(kind);
        let (pb, sb, cb) = run(kind);
        assert_eq!(pa, pb);
        assert_eq!((sa, ca.clone()), (sb, cb));
        assert!(sa > 0);
        let text = String::from_utf8(ca).unwrap();
        assert_eq!(text.lines().count(), 1 + 1 + cfg.episodes);
    }

    // A batch larger than anything collected means no updates at all.
    let warm = TrainConfig { batch: 100_000, ..cfg.clone() };
    let o = train(&ctx, &warm, default_spec(ArchKind::Mlp), &train_set, &[], 7, |_| {}).unwrap();
    assert_eq!(o.train_steps, 0);
    assert!(o.initial_val.is_none());
    assert!(train(&ctx, &cfg, default_spec(ArchKind::Mlp), &[], &[], 7, |_| {}).is_err());
    assert!(train(&ctx, &TrainConfig { gamma: 1.0, ..cfg }, default_spec(ArchKind::Mlp), &train_set, &[], 7, |_| {}).is_err());
}
