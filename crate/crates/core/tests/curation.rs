mod common;

use common::*;
use crossroads::curation::{
    build_datasets, first_meeting, verify_collision, CurationConfig, DatasetCounts, EpisodeKind, Split, MEET_TOLERANCE,
};
use crossroads::planners::{Constant, Oracle};
use crossroads::sim::{run_episode, Action, EpisodeStatus, WorldState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Arrival step at distance `s` for a constant stride, by division rather
/// than by accumulation.
fn arrival(stride: f64, s: f64) -> u32 {
    (s / stride).ceil() as u32
}

fn pair_arrivals(w: &WorldState, a: u32, b: u32) -> (u32, u32) {
    let dt = 0.1;
    let (x, y) = (w.agent(a).unwrap(), w.agent(b).unwrap());
    let (sa, sb) = first_meeting(&x.route, 0.0, &y.route, 0.0, MEET_TOLERANCE).expect("conflict agents meet");
    (arrival(x.stride(dt), sa), arrival(y.stride(dt), sb))
}

#[test]
fn split_sizes_follow_the_counts() {
    let c = DatasetCounts::default();
    assert_eq!(c.val_generic + c.val_interaction, 200);
    assert_eq!(c.test_generic + c.test_interaction, 500);
    assert_eq!(c.interaction_only, 381);
    let s = c.scaled(0.1);
    assert_eq!((s.val_generic + s.val_interaction, s.test_generic + s.test_interaction, s.interaction_only), (20, 50, 38));
    assert_eq!(s.train, 200);
}

#[test]
fn interaction_episodes_meet_the_arrival_window() {
    let g = crossroads::map::build_default_map();
    let c = curator(&g);
    let window = CurationConfig::default().arrival_window;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for setting in 1..=3u8 {
        for _ in 0..20 {
            let spec = c.gen_interaction(setting, &mut rng).unwrap();
            assert_eq!(spec.kind, EpisodeKind::Interaction);
            assert_eq!(spec.setting, Some(setting));
            assert_eq!(spec.conflict_agents.len(), if setting == 3 { 3 } else { 2 });
            assert!(spec.conflict_agents.contains(&spec.ego));
            let w = spec.instantiate(&g).unwrap();
            let ids = &spec.conflict_agents;
            for x in 0..ids.len() {
                for y in x + 1..ids.len() {
                    let (ta, tb) = pair_arrivals(&w, ids[x], ids[y]);
                    assert!(ta.abs_diff(tb) <= window, "setting {setting}: {ta} vs {tb}");
                }
            }
        }
    }
}

#[test]
fn setting_two_places_a_trailing_agent_at_the_minimum_gap() {
    let g = crossroads::map::build_default_map();
    let c = curator(&g);
    let (sim, cfg) = (c.sim.clone(), c.cfg.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let spec = c.gen_interaction(2, &mut rng).unwrap();
        let trailing = spec.agents.iter().find(|t| {
            !spec.conflict_agents.contains(&t.id)
                && spec.conflict_agents.iter().any(|&id| {
                    let lead = spec.agent(id).unwrap();
                    lead.spawn.segment == t.spawn.segment && lead.goal == t.goal && lead.spawn.offset > t.spawn.offset
                })
        });
        let t = trailing.expect("setting 2 has a trailing agent");
        let lead = spec.conflict_agents.iter().map(|&id| spec.agent(id).unwrap()).find(|l| l.spawn.segment == t.spawn.segment).unwrap();
        let gap = lead.spawn.offset - t.spawn.offset - sim.footprint_length;
        assert!((gap - cfg.trailing_gap).abs() < 1e-9, "{gap}");
    }
}

#[test]
fn offset_episodes_realise_the_requested_offset() {
    let g = crossroads::map::build_default_map();
    let c = curator(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for offset in -8..=8 {
        let spec = c.gen_interaction_with_offset(offset, &mut rng).unwrap();
        assert_eq!(spec.perturbation, Some(offset));
        let w = spec.instantiate(&g).unwrap();
        let other = *spec.conflict_agents.iter().find(|&&a| a != spec.ego).unwrap();
        let (te, to) = pair_arrivals(&w, spec.ego, other);
        assert_eq!(to as i32 - te as i32, offset);
    }
}

#[test]
fn collision_episodes_collide_under_always_go() {
    let (g, sim, ocfg) = default_parts();
    let c = curator(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..15 {
        let spec = c.gen_collision(&mut rng).unwrap();
        let r = run_episode(spec.instantiate(&g).unwrap(), &mut Constant(Action::Go), &mut Oracle::new(sim.clone(), ocfg.clone()), &sim, spec.seed);
        assert_eq!(r.status, EpisodeStatus::Collision);
        assert!(verify_collision(&g, &spec, &sim, &ocfg).unwrap());
    }
}

#[test]
fn generic_agent_counts_are_uniform() {
    let g = crossroads::map::build_default_map();
    let c = curator(&g);
    let (lo, hi) = c.cfg.generic_agents;
    let bins = hi - lo + 1;
    let n = 50 * bins;
    let mut counts = vec![0usize; bins];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..n {
        let spec = c.gen_generic(&mut rng).unwrap();
        assert!(spec.agents.iter().all(|a| (-1.0..=1.0).contains(&a.beta)));
        counts[spec.agents.len() - lo] += 1;
    }
    let e = n as f64 / bins as f64;
    let chi2: f64 = counts.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
    // 99.9th percentile of chi-squared with 23 degrees of freedom.
    assert!(chi2 < 49.73, "chi2 {chi2}: {counts:?}");
}

#[test]
fn manifests_are_deterministic_and_tamper_evident() {
    let g = crossroads::map::build_default_map();
    let c = curator(&g);
    let counts = DatasetCounts::default();
    let a = build_datasets(&c, &counts, 0.01, 3).unwrap();
    let b = build_datasets(&c, &counts, 0.01, 3).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert!(a.hash_ok());
    let n = counts.scaled(0.01);
    assert_eq!(a.split_len(Split::Train), n.train);
    assert_eq!(a.split_len(Split::Val), n.val_generic + n.val_interaction);
    assert_eq!(a.split_len(Split::TestInteraction), n.interaction_only);
    assert!(a.split(Split::TestInteraction).iter().all(|s| s.kind == EpisodeKind::Interaction));

    let back = crossroads::curation::DatasetManifest::from_json(&a.to_json()).unwrap();
    assert_eq!(back, a);
    let mut t = a.clone();
    t.entries[0].spec.agents[0].beta = 0.123;
    assert!(!t.hash_ok());
    let other = build_datasets(&c, &counts, 0.01, 4).unwrap();
    assert_ne!(other.hash, a.hash);
}
