use crossroads::geometry::Vec2;
use crossroads::map::{build_default_map, default_map_file, JunctionKind, LaneGraph, LanePoint, MapError};
use proptest::prelude::*;

/// Independent shortest distance: Bellman-Ford over whole segments, where a
/// route pays the spawn remainder, every full segment in between and the
/// goal offset.
fn oracle_distance(g: &LaneGraph, from: LanePoint, to: LanePoint) -> Option<f64> {
    let len = |id| g.segment(id).unwrap().length();
    if from.segment == to.segment && to.offset >= from.offset {
        return Some(to.offset - from.offset);
    }
    // dist[seg] = distance from spawn to the start of seg
    let mut dist: std::collections::BTreeMap<u32, f64> = Default::default();
    for n in g.successors(from.segment) {
        dist.insert(n, len(from.segment) - from.offset);
    }
    for _ in 0..g.segments().len() {
        let mut changed = false;
        for (&s, &d) in dist.clone().iter() {
            for n in g.successors(s) {
                let nd = d + len(s);
                if dist.get(&n).map_or(true, |&o| nd < o - 1e-12) {
                    dist.insert(n, nd);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    dist.get(&to.segment).map(|d| d + to.offset)
}

#[test]
fn default_map_census_is_four_t_four_corners_one_roundabout() {
    let census = build_default_map().junction_census();
    assert_eq!(census[&JunctionKind::TIntersection], 4);
    assert_eq!(census[&JunctionKind::Corner], 4);
    assert_eq!(census[&JunctionKind::Roundabout], 1);
    assert_eq!(census.values().sum::<usize>(), 9);
}

#[test]
fn every_segment_is_directed_and_has_positive_length() {
    let file = default_map_file();
    let g = build_default_map();
    assert_eq!(file.segments.len(), g.segments().len());
    for s in g.segments() {
        assert!(s.length() > 0.0, "segment {}", s.id);
        assert!(s.cum.windows(2).all(|w| w[1] > w[0]));
        assert!(s.cum.windows(2).all(|w| w[1] - w[0] <= g.waypoint_spacing + 1e-9));
    }
    for j in g.junctions() {
        let inside: Vec<_> = g.segments().iter().filter(|s| s.junction == Some(j.id)).collect();
        assert!(!inside.is_empty(), "junction {} has no internal segments", j.id);
    }
}

#[test]
fn every_spawn_goal_pair_is_routable_and_optimal() {
    let g = build_default_map();
    let mut checked = 0;
    for &s in g.spawns() {
        for &t in g.goals() {
            let r = g.shortest_route(s, t).expect("route exists");
            let want = oracle_distance(&g, s, t).expect("oracle finds a route");
            assert!((r.total_length() - want).abs() <= 1e-6 * want.max(1.0), "{s:?} -> {t:?}: {} vs {want}", r.total_length());
            checked += 1;
        }
    }
    assert_eq!(checked, 104 * 104);
}

#[test]
fn same_point_route_has_zero_length() {
    let g = build_default_map();
    let p = g.spawns()[3];
    let r = g.shortest_route(p, p).unwrap();
    assert_eq!(r.total_length(), 0.0);
    assert_eq!(r.waypoints().len(), 1);
}

#[test]
fn straight_lane_route_length_is_offset_difference() {
    let g = build_default_map();
    let lane = g.lanes().find(|s| s.length() > 25.0).expect("a long lane");
    let r = g.shortest_route(LanePoint::new(lane.id, 2.0), LanePoint::new(lane.id, 22.0)).unwrap();
    assert!((r.total_length() - 20.0).abs() < 1e-9);
    let p = r.pose_at(5.0).unwrap();
    assert!((p.position.dist(lane.point_at(7.0))).abs() < 1e-9);
}

#[test]
fn pose_at_endpoints_and_out_of_range() {
    let g = build_default_map();
    let (s, t) = (g.spawns()[0], g.goals()[40]);
    let r = g.shortest_route(s, t).unwrap();
    assert_eq!(r.pose_at(0.0).unwrap().position, g.position(s).unwrap());
    assert!(r.pose_at(r.total_length()).unwrap().position.dist(g.position(t).unwrap()) < 1e-9);
    assert!(matches!(r.pose_at(-0.1), Err(MapError::OutOfRange { .. })));
    assert!(matches!(r.pose_at(r.total_length() + 0.1), Err(MapError::OutOfRange { .. })));
}

#[test]
fn travel_distance_along_and_off_route() {
    let g = build_default_map();
    let r = g.shortest_route(g.spawns()[0], g.goals()[40]).unwrap();
    let ahead = r.pose_at(6.0).unwrap().position;
    assert!((r.travel_distance(2.0, ahead, 1.75).unwrap() - 4.0).abs() < 1e-9);
    let far = ahead + Vec2::new(0.0, 500.0);
    assert_eq!(r.travel_distance(2.0, far, 1.75), None);
}

#[test]
fn travel_distance_matches_brute_force_scan_on_curves() {
    let g = build_default_map();
    let mut n = 0;
    for (k, &s) in g.spawns().iter().enumerate().step_by(7) {
        let t = g.goals()[(k * 31 + 11) % g.goals().len()];
        let r = g.shortest_route(s, t).unwrap();
        let len = r.total_length();
        if len < 12.0 {
            continue;
        }
        let target = r.pose_at(len * 0.6).unwrap().position;
        // Brute force: dense scan of arc-lengths, closest point within the
        // first stretch that comes within tolerance.
        let mut best: Option<(f64, f64)> = None;
        let mut i = 0;
        while i as f64 * 0.01 <= len {
            let sa = i as f64 * 0.01;
            let d = r.pose_at(sa).unwrap().position.dist(target);
            if d <= 1.75 && best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, sa));
            }
            if d > 1.75 && best.is_some() {
                break;
            }
            i += 1;
        }
        let got = r.travel_distance(0.0, target, 1.75).unwrap();
        assert!((got - best.unwrap().1).abs() <= 0.02, "{got} vs {:?}", best);
        n += 1;
    }
    assert!(n >= 8);
}

#[test]
fn shortest_route_is_deterministic() {
    let g = build_default_map();
    let (s, t) = (g.spawns()[10], g.goals()[77]);
    let a = g.shortest_route(s, t).unwrap();
    let b = g.shortest_route(s, t).unwrap();
    assert_eq!(a.waypoints(), b.waypoints());
}

#[test]
fn map_file_round_trips_and_rejects_bad_schema() {
    let file = default_map_file();
    let json = file.to_json().unwrap();
    let g = LaneGraph::from_json_str(&json).unwrap();
    assert_eq!(g.segments().len(), build_default_map().segments().len());
    let mut bad = file.clone();
    bad.schema_version = 99;
    assert!(matches!(LaneGraph::from_file(bad), Err(MapError::SchemaVersion(99))));
    let mut bad = file;
    bad.segments[0].polyline.truncate(1);
    assert!(LaneGraph::from_file(bad).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn routes_are_well_formed(si in 0usize..104, gi in 0usize..104, u in 0.0f64..1.0, v in 0.0f64..1.0) {
        let g = build_default_map();
        let (s, t) = (g.spawns()[si], g.goals()[gi]);
        let r = g.shortest_route(s, t).unwrap();
        let cum = r.arc_lengths();
        prop_assert!(cum.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(r.waypoints().windows(2).all(|w| w[0].dist(w[1]) <= g.waypoint_spacing + 1e-9));
        prop_assert_eq!(r.start(), g.position(s).unwrap());
        prop_assert!(r.goal().dist(g.position(t).unwrap()) < 1e-9);
        // Polyline distance between two poses equals their arc-length gap.
        let len = r.total_length();
        let (a, b) = if u < v { (u * len, v * len) } else { (v * len, u * len) };
        prop_assume!(b - a > 1e-6);
        let (pa, pb) = (r.pose_at(a).unwrap().position, r.pose_at(b).unwrap().position);
        let mut path = vec![pa];
        path.extend(r.waypoints().iter().zip(cum).filter(|(_, &c)| c > a && c < b).map(|(p, _)| *p));
        path.push(pb);
        let poly: f64 = path.windows(2).map(|w| w[0].dist(w[1])).sum();
        prop_assert!((poly - (b - a)).abs() <= 1e-9 * len.max(1.0));
        prop_assert!(pa != pb);
    }
}
