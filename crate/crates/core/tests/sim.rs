mod common;

use std::collections::BTreeMap;

use common::*;
use crossroads::geometry::{OrientedRect, Vec2};
use crossroads::map::Pose;
use crossroads::planners::{Constant, Oracle};
use crossroads::sim::{
    detect_collisions, ego_reward, nominal_speed, run_episode, step, time_to_collision, write_trace_jsonl, Action,
    AgentId, EgoEvents, EpisodeStatus, SimConfig, SimError, Ttc, WorldState,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn all(world: &WorldState, a: Action) -> BTreeMap<AgentId, Action> {
    world.active_ids().into_iter().map(|id| (id, a)).collect()
}

#[test]
fn velocity_law_holds_at_the_published_points() {
    assert_eq!(nominal_speed(1.0).unwrap(), 11.0);
    assert!((nominal_speed(-1.0).unwrap() - 5.6).abs() < 1e-12);
    assert_eq!(nominal_speed(0.0).unwrap(), 8.3);
    assert!(matches!(nominal_speed(1.01), Err(SimError::Domain(_))));
    assert!(matches!(nominal_speed(f64::NAN), Err(SimError::Domain(_))));
}

#[test]
fn go_advances_by_one_stride_and_stop_holds() {
    let cfg = SimConfig::default();
    let w = world(vec![agent(0, 0.0, straight(Vec2::ZERO, 0.0, 50.0), 0.0)], 0);
    let (next, _) = step(&w, &all(&w, Action::Go), &cfg).unwrap();
    assert!((next.ego_agent().s - 0.83).abs() < 1e-12);
    let (held, _) = step(&next, &all(&next, Action::Stop), &cfg).unwrap();
    assert_eq!(held.ego_agent().s, next.ego_agent().s);
    assert_eq!(held.t, 2);
    assert!(matches!(step(&w, &BTreeMap::new(), &cfg), Err(SimError::MissingAction(0))));
}

#[test]
fn twenty_meter_route_finishes_in_twenty_five_steps() {
    let cfg = SimConfig::default();
    let w = world(vec![agent(0, 0.0, straight(Vec2::ZERO, 0.0, 20.0), 0.0)], 0);
    let r = run_episode(w, &mut Constant(Action::Go), &mut Constant(Action::Go), &cfg, 0);
    assert_eq!(r.status, EpisodeStatus::Success);
    assert_eq!(r.length, (20.0f64 / 0.83).ceil() as u32);
    assert_eq!(r.length, 25);
}

#[test]
fn everyone_stopping_times_out_at_the_limit() {
    let cfg = SimConfig::default();
    let r = run_episode(crossing(30.0, 40.0, 0.0, 0.0), &mut Constant(Action::Stop), &mut Constant(Action::Stop), &cfg, 0);
    assert_eq!(r.status, EpisodeStatus::Timeout);
    assert_eq!(r.length, cfg.t_max);
}

#[test]
fn identical_pose_collides_and_distant_agents_do_not() {
    let cfg = SimConfig::default();
    let route = straight(Vec2::ZERO, 0.0, 100.0);
    let same = world(vec![agent(0, 0.0, route.clone(), 20.0), agent(1, 0.5, route.clone(), 20.0)], 0);
    assert_eq!(detect_collisions(&same, &cfg), vec![(0, 1)]);
    let far = world(vec![agent(0, 0.0, route.clone(), 0.0), agent(1, 0.5, route, 50.0)], 0);
    assert!(detect_collisions(&far, &cfg).is_empty());
}

/// Point-sampling overlap oracle: some sample of either rectangle lies
/// strictly inside the other. `pad` grows or shrinks both rectangles.
fn sampled_overlap(a: Pose, b: Pose, cfg: &SimConfig, pad: f64) -> bool {
    let rect = |p: Pose| OrientedRect::new(p.position, p.heading, cfg.footprint_length + 2.0 * pad, cfg.footprint_width + 2.0 * pad);
    let (ra, rb) = (rect(a), rect(b));
    let samples = |r: &OrientedRect| {
        let (u, v) = r.axes();
        let n = 60;
        let mut pts = Vec::new();
        for i in 0..=n {
            for j in 0..=n / 2 {
                let x = (i as f64 / n as f64 - 0.5) * (cfg.footprint_length + 2.0 * pad);
                let y = (j as f64 / (n / 2) as f64 - 0.5) * (cfg.footprint_width + 2.0 * pad);
                pts.push(r.center + u * x + v * y);
            }
        }
        pts
    };
    samples(&ra).iter().any(|p| rb.contains(*p)) || samples(&rb).iter().any(|p| ra.contains(*p))
}

#[test]
fn collision_check_agrees_with_point_sampling_on_random_poses() {
    let cfg = SimConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut decided = 0;
    for _ in 0..1000 {
        let pa = Pose { position: Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)), heading: rng.gen_range(-3.2..3.2) };
        let pb = Pose { position: Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)), heading: rng.gen_range(-3.2..3.2) };
        let sat = cfg.footprint(pa).overlaps(&cfg.footprint(pb));
        assert_eq!(sat, cfg.footprint(pb).overlaps(&cfg.footprint(pa)), "symmetry");
        // Cases within sampling resolution of touching are ambiguous.
        let (inner, outer) = (sampled_overlap(pa, pb, &cfg, -0.05), sampled_overlap(pa, pb, &cfg, 0.05));
        if inner == outer {
            assert_eq!(sat, inner, "{pa:?} {pb:?}");
            decided += 1;
        }
    }
    assert!(decided >= 900, "{decided}");
}

#[test]
fn following_ttc_matches_hand_rollout() {
    let cfg = SimConfig::default();
    let w = following(5.0, 0.0, 0.0);
    // First k with 0.83 k > 5 m of bumper gap.
    let k = (1..).find(|&k| k as f64 * 0.83 > 5.0).unwrap();
    assert_eq!(k, 7);
    assert_eq!(time_to_collision(&w, 0, 1, Action::Go, Action::Stop, &cfg), Ttc(Some(k)));
    assert!((time_to_collision(&w, 0, 1, Action::Go, Action::Stop, &cfg).seconds(cfg.dt) - 0.7).abs() < 1e-12);
    assert_eq!(time_to_collision(&w, 0, 1, Action::Stop, Action::Go, &cfg), Ttc::INFINITE);
    assert_eq!(time_to_collision(&w, 0, 1, Action::Stop, Action::Stop, &cfg), Ttc::INFINITE);
}

#[test]
fn ttc_is_infinite_for_disjoint_corridors() {
    let cfg = SimConfig::default();
    let w = world(
        vec![agent(0, 0.0, straight(Vec2::ZERO, 0.0, 80.0), 0.0), agent(1, 0.0, straight(Vec2::new(0.0, 20.0), 0.0, 80.0), 0.0)],
        0,
    );
    for a in [Action::Go, Action::Stop] {
        for b in [Action::Go, Action::Stop] {
            assert_eq!(time_to_collision(&w, 0, 1, a, b, &cfg), Ttc::INFINITE);
        }
    }
}

#[test]
fn episodes_are_bit_identical_across_runs() {
    let (g, cfg, ocfg) = default_parts();
    let c = curator(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for setting in 1..=3 {
        let spec = c.gen_interaction(setting, &mut rng).unwrap();
        let run = || {
            let mut ego = Oracle::new(cfg.clone(), ocfg.clone());
            let mut others = crossroads::planners::with_action_noise(Oracle::new(cfg.clone(), ocfg.clone()), 0.2, 9).unwrap();
            run_episode(spec.instantiate(&g).unwrap(), &mut ego, &mut others, &cfg, spec.seed)
        };
        let (a, b) = (run(), run());
        assert_eq!(a.trace, b.trace);
        let (mut ja, mut jb) = (Vec::new(), Vec::new());
        write_trace_jsonl(&a.trace, &mut ja).unwrap();
        write_trace_jsonl(&b.trace, &mut jb).unwrap();
        assert_eq!(ja, jb);
        let lines: Vec<&str> = std::str::from_utf8(&ja).unwrap().lines().collect();
        assert_eq!(lines.len(), a.trace.len());
        let v: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(v["t"], 1);
    }
}

#[test]
fn finished_world_refuses_to_step() {
    let cfg = SimConfig::default();
    let mut w = following(5.0, 0.0, 0.0);
    w.status = EpisodeStatus::Collision;
    assert!(matches!(step(&w, &all(&w, Action::Go), &cfg), Err(SimError::Finished)));
}

#[test]
fn stalemate_is_flagged_after_the_window() {
    let cfg = SimConfig::default();
    let mut w = crossing(6.0, 6.0, 0.0, 0.0);
    let mut flags = Vec::new();
    for _ in 0..7 {
        let (n, ev) = step(&w, &all(&w, Action::Stop), &cfg).unwrap();
        flags.push(ev.ego.stalemate);
        w = n;
    }
    assert_eq!(flags, [false, false, false, false, true, true, true]);
}

#[test]
fn follow_penalty_applies_within_five_meters() {
    let cfg = SimConfig::default();
    let w = following(4.0, 0.0, 1.0);
    let (_, ev) = step(&w, &all(&w, Action::Stop), &cfg).unwrap();
    let gap = ev.ego.follow_gap.expect("lead is within the follow distance");
    assert!((gap - 4.0).abs() < 1e-9);
    let r = ego_reward(0.0, &ev.ego);
    assert!((r.follow - (-2.0 + 2.0 / (1.0 + (-gap).exp()))).abs() < 1e-15);
    let far = following(12.0, 0.0, 1.0);
    let (_, ev) = step(&far, &all(&far, Action::Stop), &cfg).unwrap();
    assert_eq!(ev.ego.follow_gap, None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn reward_total_is_the_sum_and_follow_is_capped(
        beta in -1.0f64..=1.0,
        moved: bool, timeout: bool, stalemate: bool, collision: bool,
        gap in proptest::option::of(0.0f64..50.0),
    ) {
        let r = ego_reward(beta, &EgoEvents { moved, timeout, stalemate, collision, follow_gap: gap });
        prop_assert_eq!(r.total, r.time + r.speed + r.timeout + r.stalemate + r.collision + r.follow);
        prop_assert!(r.follow > -2.0 && r.follow <= 0.0);
    }

    #[test]
    fn stepping_conserves_agents_and_done_agents_stay_put(seed in 0u64..500, flips in proptest::collection::vec(any::<bool>(), 60)) {
        let cfg = SimConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = crossing(rng.gen_range(3.0..30.0), rng.gen_range(3.0..30.0), rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
        let n = w.agents.len();
        for f in flips {
            if w.status.is_terminal() {
                break;
            }
            let acts: BTreeMap<_, _> = w.active_ids().into_iter().map(|id| (id, if f ^ (id == 1) { Action::Go } else { Action::Stop })).collect();
            let (next, _) = step(&w, &acts, &cfg).unwrap();
            prop_assert_eq!(next.agents.len(), n);
            prop_assert_eq!(next.t, w.t + 1);
            for (a, b) in w.agents.iter().zip(&next.agents) {
                if a.done {
                    prop_assert!(b.done);
                    prop_assert_eq!(a.s, b.s);
                }
                prop_assert!(b.s >= a.s && b.s <= b.route.total_length());
            }
            w = next;
        }
    }
}
