mod common;

use common::*;
use crossroads::geometry::Vec2;
use crossroads::obs::{encode, pad_fixed, ObsError, FEATURE_DIM, MAX_AGENTS};
use crossroads::sim::{AgentState, WorldState};
use proptest::prelude::*;

fn scatter(points: &[(f64, f64, f64)]) -> WorldState {
    let agents = points
        .iter()
        .enumerate()
        .map(|(i, &(x, y, h))| agent(i as _, 0.0, straight(Vec2::new(x, y), h, 30.0), 0.0))
        .collect();
    world(agents, 0)
}

#[test]
fn lone_ego_yields_a_single_canonical_row() {
    let w = scatter(&[(3.0, -4.0, 0.7), (50.0, 0.0, 0.0)]);
    let o = encode(&w, 0, 10.0).unwrap();
    assert_eq!(o.len(), 1);
    assert_eq!(o.agent_ids, vec![0]);
    let r = o.rows[0];
    assert_eq!(&r[..6], &[0.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
    // Straight route: waypoints lie on the ego's x axis, 2 m apart.
    for k in 0..5 {
        assert!((r[6 + 2 * k] - 2.0 * (k + 1) as f64).abs() < 1e-9);
        assert!(r[7 + 2 * k].abs() < 1e-9);
    }
}

#[test]
fn radius_is_a_closed_ball() {
    let w = scatter(&[(0.0, 0.0, 0.0), (0.0, 10.0, 0.0), (0.0, -10.000001, 0.0)]);
    let o = encode(&w, 0, 10.0).unwrap();
    assert_eq!(o.agent_ids, vec![0, 1]);
    let r = o.rows[1];
    assert!((r[0]).abs() < 1e-12 && (r[1] - 10.0).abs() < 1e-12);
    assert_eq!(r[5], 0.0);
    assert!(r[6..].iter().all(|&x| x == 0.0));
}

#[test]
fn relative_heading_and_speed_are_encoded() {
    let mut w = scatter(&[(0.0, 0.0, 0.0), (5.0, 0.0, std::f64::consts::FRAC_PI_2)]);
    w.agents[1].moved = true;
    let o = encode(&w, 0, 10.0).unwrap();
    let r = o.rows[1];
    assert!((r[2] - 1.0).abs() < 1e-12 && r[3].abs() < 1e-12);
    assert_eq!(r[4], w.agents[1].speed());
    assert_eq!(o.rows[0][4], 0.0);
}

#[test]
fn waypoints_past_the_route_end_are_zero() {
    let w = world(vec![agent(0, 0.0, straight(Vec2::ZERO, 0.0, 5.0), 0.0)], 0);
    let r = encode(&w, 0, 10.0).unwrap().rows[0];
    assert!((r[6] - 2.0).abs() < 1e-9 && (r[8] - 4.0).abs() < 1e-9);
    assert!(r[10..].iter().all(|&x| x == 0.0));
}

#[test]
fn done_agents_and_ego_are_handled() {
    let mut w = scatter(&[(0.0, 0.0, 0.0), (3.0, 0.0, 0.0)]);
    w.agents[1].done = true;
    assert_eq!(encode(&w, 0, 10.0).unwrap().len(), 1);
    w.agents[0].done = true;
    assert_eq!(encode(&w, 0, 10.0), Err(ObsError::InactiveEgo(0)));
}

#[test]
fn padding_and_truncation() {
    let pts: Vec<_> = (0..10).map(|i| (i as f64, 0.5 * i as f64, 0.0)).collect();
    let o = encode(&scatter(&pts), 0, 20.0).unwrap();
    assert_eq!(o.len(), 10);
    assert_eq!(pad_fixed(&o, MAX_AGENTS), Err(ObsError::TooManyAgents { rows: 10, max: MAX_AGENTS }));
    let kept = o.nearest(MAX_AGENTS);
    assert_eq!(kept.agent_ids, (0..8).collect::<Vec<crossroads::sim::AgentId>>());
    let small = encode(&scatter(&pts[..3]), 0, 20.0).unwrap();
    let v = pad_fixed(&small, MAX_AGENTS).unwrap();
    assert_eq!(v.len(), MAX_AGENTS * FEATURE_DIM);
    assert_eq!(&v[..3 * FEATURE_DIM], small.flat().as_slice());
    assert!(v[3 * FEATURE_DIM..].iter().all(|&x| x == 0.0));
}

fn transformed(w: &WorldState, shift: Vec2, angle: f64) -> WorldState {
    let agents: Vec<AgentState> = w
        .agents
        .iter()
        .map(|a| {
            let p = a.pose();
            let route = straight(p.position.rotate(angle) + shift, p.heading + angle, 30.0);
            let mut b = agent(a.id, a.beta, route, 0.0);
            b.moved = a.moved;
            b
        })
        .collect();
    world(agents, w.ego)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn encoding_is_invariant_to_rigid_motions(
        pts in proptest::collection::vec((-12.0f64..12.0, -12.0f64..12.0, -3.1f64..3.1), 1..7),
        dx in -100.0f64..100.0, dy in -100.0f64..100.0, angle in -3.1f64..3.1,
    ) {
        let w = scatter(&pts);
        let a = encode(&w, 0, 10.0).unwrap();
        let b = encode(&transformed(&w, Vec2::new(dx, dy), angle), 0, 10.0).unwrap();
        // Agents within rounding distance of the radius may flip membership.
        let borderline = w.agents.iter().any(|x| (x.position().dist(w.agents[0].position()) - 10.0).abs() < 1e-6);
        prop_assume!(!borderline);
        prop_assert_eq!(&a.agent_ids, &b.agent_ids);
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            for k in 0..FEATURE_DIM {
                prop_assert!((ra[k] - rb[k]).abs() < 1e-6, "feature {} {} vs {}", k, ra[k], rb[k]);
            }
        }
    }
}
