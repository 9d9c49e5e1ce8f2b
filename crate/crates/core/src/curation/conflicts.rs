//! Junction movements and the points where they cross or merge.

use std::collections::BTreeMap;

use crate::geometry::{project_on_segment, Vec2};
use crate::map::{JunctionId, JunctionKind, LaneGraph, LanePoint, RoutePlan, SegmentId, SegmentKind};

/// A way through one junction: incoming lane, junction-internal segments,
/// outgoing lane.
#[derive(Debug, Clone, PartialEq)]
pub struct Movement {
    pub junction: JunctionId,
    pub kind: JunctionKind,
    pub segments: Vec<SegmentId>,
    /// Route over the whole movement, from the start of the incoming lane to
    /// the end of the outgoing lane.
    pub route: RoutePlan,
}

impl Movement {
    pub fn in_lane(&self) -> SegmentId {
        self.segments[0]
    }

    pub fn out_lane(&self) -> SegmentId {
        *self.segments.last().unwrap()
    }
}

/// Where two movements first meet, as arc-lengths from their starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MovementConflict {
    pub a: usize,
    pub b: usize,
    pub s_a: f64,
    pub s_b: f64,
    pub point: Vec2,
}

/// Distance below which two centerlines are considered to meet.
pub const MEET_TOLERANCE: f64 = 0.3;

/// First point along `a` (from `from_a` on) lying within `tol` of route `b`
/// (from `from_b` on). Returns the arc-lengths on both routes.
pub fn first_meeting(a: &RoutePlan, from_a: f64, b: &RoutePlan, from_b: f64, tol: f64) -> Option<(f64, f64)> {
    let wa = a.waypoints();
    let ca = a.arc_lengths();
    let wb = b.waypoints();
    let cb = b.arc_lengths();
    for (k, p) in wa.iter().enumerate() {
        if ca[k] < from_a {
            continue;
        }
        let mut best: Option<(f64, f64)> = None;
        for m in 1..wb.len() {
            if cb[m] < from_b {
                continue;
            }
            let (t, d) = project_on_segment(*p, wb[m - 1], wb[m]);
            let s = cb[m - 1] + t * (cb[m] - cb[m - 1]);
            if d <= tol && s >= from_b && best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, s));
            }
        }
        if let Some((_, s)) = best {
            return Some((ca[k], s));
        }
    }
    None
}

fn junction_of_nodes(graph: &LaneGraph) -> BTreeMap<u32, JunctionId> {
    let mut m = BTreeMap::new();
    for j in graph.junctions() {
        for &n in &j.nodes {
            m.insert(n, j.id);
        }
    }
    m
}

/// Every movement through every junction, excluding U-turns.
pub fn movements(graph: &LaneGraph) -> Vec<Movement> {
    let node_junction = junction_of_nodes(graph);
    let mut out = Vec::new();
    for lane in graph.lanes() {
        let Some(&jid) = node_junction.get(&lane.to) else { continue };
        let origin = node_junction.get(&lane.from).copied();
        let kind = graph.junction(jid).unwrap().kind;
        // Depth-first over junction-internal segments.
        let mut stack: Vec<Vec<SegmentId>> = vec![vec![lane.id]];
        while let Some(path) = stack.pop() {
            let tail = *path.last().unwrap();
            for next in graph.successors(tail) {
                let seg = graph.segment(next).unwrap();
                if path.contains(&next) {
                    continue;
                }
                let mut p = path.clone();
                p.push(next);
                if seg.kind == SegmentKind::Lane {
                    if node_junction.get(&seg.to).copied() == origin {
                        continue;
                    }
                    let end = LanePoint::new(next, seg.length());
                    let route = graph.route_along(LanePoint::new(lane.id, 0.0), end, &p);
                    out.push(Movement { junction: jid, kind, segments: p, route });
                } else if seg.junction == Some(jid) {
                    stack.push(p);
                }
            }
        }
    }
    out.sort_by(|x, y| (x.junction, &x.segments).cmp(&(y.junction, &y.segments)));
    out
}

/// Pairs of movements from different incoming lanes of the same junction
/// whose centerlines cross or merge.
pub fn movement_conflicts(moves: &[Movement]) -> Vec<MovementConflict> {
    let mut out = Vec::new();
    for a in 0..moves.len() {
        for b in a + 1..moves.len() {
            let (ma, mb) = (&moves[a], &moves[b]);
            if ma.junction != mb.junction || ma.in_lane() == mb.in_lane() {
                continue;
            }
            if let Some((s_a, s_b)) = first_meeting(&ma.route, 0.0, &mb.route, 0.0, MEET_TOLERANCE) {
                out.push(MovementConflict {
                    a,
                    b,
                    s_a,
                    s_b,
                    point: ma.route.pose_clamped(s_a).position,
                });
            }
        }
    }
    out
}

/// Triples of movements from three different incoming lanes that all
/// conflict pairwise.
pub fn conflict_triples(moves: &[Movement], conflicts: &[MovementConflict]) -> Vec<[usize; 3]> {
    let lookup: BTreeMap<(usize, usize), ()> = conflicts.iter().map(|c| ((c.a, c.b), ())).collect();
    let has = |x: usize, y: usize| lookup.contains_key(&(x.min(y), x.max(y)));
    let mut out = Vec::new();
    for a in 0..moves.len() {
        for b in a + 1..moves.len() {
            if !has(a, b) {
                continue;
            }
            for c in b + 1..moves.len() {
                let lanes = [moves[a].in_lane(), moves[b].in_lane(), moves[c].in_lane()];
                if lanes[0] == lanes[2] || lanes[1] == lanes[2] {
                    continue;
                }
                if has(a, c) && has(b, c) {
                    out.push([a, b, c]);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::build_default_map;

    #[test]
    fn default_map_movement_counts() {
        let g = build_default_map();
        let moves = movements(&g);
        let count = |k: JunctionKind| moves.iter().filter(|m| m.kind == k).count();
        // Corners: one turn per direction; T: 3 arms x 2; roundabout: 4 x 3.
        assert_eq!(count(JunctionKind::Corner), 4 * 2);
        assert_eq!(count(JunctionKind::TIntersection), 4 * 6);
        assert_eq!(count(JunctionKind::Roundabout), 12);
        let conflicts = movement_conflicts(&moves);
        assert!(conflicts.iter().all(|c| moves[c.a].kind != JunctionKind::Corner));
        assert!(conflicts.iter().any(|c| moves[c.a].kind == JunctionKind::Roundabout));
        assert!(!conflict_triples(&moves, &conflicts).is_empty());
    }
}
