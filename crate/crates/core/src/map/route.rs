use serde::{Deserialize, Serialize};

use super::{LaneGraph, LanePoint, MapError, SegmentId};
use crate::geometry::{cumulative_lengths, project_on_segment, Vec2};

/// Position and heading (radians) on a route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

/// Portion of a route lying on one map segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteLeg {
    pub segment: SegmentId,
    pub start_s: f64,
    pub end_s: f64,
}

/// Arc-length parameterized path from a spawn point to a goal point.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutePlan {
    waypoints: Vec<Vec2>,
    cum: Vec<f64>,
    legs: Vec<RouteLeg>,
    start_heading: f64,
}

impl RoutePlan {
    /// Builds a route from raw waypoints. Consecutive duplicates are dropped.
    pub fn from_waypoints(points: Vec<Vec2>, legs: Vec<RouteLeg>, start_heading: f64) -> Self {
        let mut pts = points;
        pts.dedup_by(|a, b| a.dist(*b) < 1e-12);
        let cum = cumulative_lengths(&pts);
        RoutePlan {
            waypoints: pts,
            cum,
            legs,
            start_heading,
        }
    }

    pub fn waypoints(&self) -> &[Vec2] {
        &self.waypoints
    }

    pub fn arc_lengths(&self) -> &[f64] {
        &self.cum
    }

    pub fn legs(&self) -> &[RouteLeg] {
        &self.legs
    }

    pub fn total_length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn start(&self) -> Vec2 {
        self.waypoints[0]
    }

    pub fn goal(&self) -> Vec2 {
        *self.waypoints.last().unwrap()
    }

    /// Index `i` of the piece `waypoints[i]..waypoints[i + 1]` containing `s`.
    fn piece_index(&self, s: f64) -> usize {
        let n = self.waypoints.len();
        self.cum.partition_point(|c| *c <= s).saturating_sub(1).min(n.saturating_sub(2))
    }

    pub fn pose_at(&self, s: f64) -> Result<Pose, MapError> {
        let len = self.total_length();
        if !(s >= -1e-9 && s <= len + 1e-9) {
            return Err(MapError::OutOfRange { s, length: len });
        }
        Ok(self.pose_clamped(s))
    }

    /// Like [`RoutePlan::pose_at`] with `s` clamped into range.
    pub fn pose_clamped(&self, s: f64) -> Pose {
        if self.waypoints.len() < 2 {
            return Pose {
                position: self.waypoints[0],
                heading: self.start_heading,
            };
        }
        let s = s.clamp(0.0, self.total_length());
        let i = self.piece_index(s);
        let (a, b) = (self.waypoints[i], self.waypoints[i + 1]);
        let t = (s - self.cum[i]) / (self.cum[i + 1] - self.cum[i]);
        Pose {
            position: a.lerp(b, t.clamp(0.0, 1.0)),
            heading: (b - a).angle(),
        }
    }

    /// Segment the route occupies at arc-length `s`.
    pub fn segment_at(&self, s: f64) -> Option<SegmentId> {
        self.legs
            .iter()
            .find(|l| s >= l.start_s && s <= l.end_s)
            .map(|l| l.segment)
    }

    /// Arc-length to travel from `s_from` to the first stretch of the route
    /// passing within `tolerance` of `target`, looking no further than `max_ahead`.
    /// Within that stretch the closest route point is used.
    pub fn travel_distance_within(
        &self,
        s_from: f64,
        target: Vec2,
        tolerance: f64,
        max_ahead: f64,
    ) -> Option<f64> {
        let len = self.total_length();
        if self.waypoints.len() < 2 {
            return (self.waypoints[0].dist(target) <= tolerance).then_some(0.0);
        }
        let s_from = s_from.clamp(0.0, len);
        let limit = (s_from + max_ahead).min(len);
        let mut i = self.piece_index(s_from);
        let mut best: Option<(f64, f64)> = None;
        let start_point = self.pose_clamped(s_from).position;
        loop {
            let a_s = self.cum[i].max(s_from);
            if a_s > limit {
                break;
            }
            let a = if self.cum[i] < s_from { start_point } else { self.waypoints[i] };
            let b = self.waypoints[i + 1];
            let piece = self.cum[i + 1] - a_s;
            let (t, d) = project_on_segment(target, a, b);
            let s_hit = a_s + t * piece;
            if d <= tolerance && s_hit <= limit + 1e-12 {
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, s_hit));
                }
            } else if best.is_some() {
                break;
            }
            i += 1;
            if i + 1 >= self.waypoints.len() {
                break;
            }
        }
        best.map(|(_, s)| s - s_from)
    }

    /// Forward arc-length from `s_from` to the route point closest to `target`,
    /// among points within `tolerance` laterally. `None` if the remaining route
    /// never comes within tolerance.
    pub fn travel_distance(&self, s_from: f64, target: Vec2, tolerance: f64) -> Option<f64> {
        self.travel_distance_within(s_from, target, tolerance, f64::INFINITY)
    }
}

impl LaneGraph {
    /// Minimal arc-length directed route between two lane points, ignoring
    /// other traffic. Equal-length alternatives are resolved in favour of the
    /// lexicographically smallest segment-id sequence.
    pub fn shortest_route(&self, spawn: LanePoint, goal: LanePoint) -> Result<RoutePlan, MapError> {
        let seq = self.shortest_segment_sequence(spawn, goal)?;
        Ok(self.route_along(spawn, goal, &seq))
    }

    /// Segment ids of the shortest route and its length.
    pub fn shortest_segment_sequence(
        &self,
        spawn: LanePoint,
        goal: LanePoint,
    ) -> Result<Vec<SegmentId>, MapError> {
        let sa = self.check_point(spawn)?;
        self.check_point(goal)?;
        if spawn.segment == goal.segment && goal.offset >= spawn.offset {
            return Ok(vec![sa.id]);
        }
        let n = self.segments.len();
        let src = self.seg_index(spawn.segment).unwrap();
        let dst = self.seg_index(goal.segment).unwrap();
        // Label of a segment = cost to reach its end, with the segment path.
        let mut label: Vec<Option<(f64, Vec<usize>)>> = vec![None; n];
        let mut done = vec![false; n];
        label[src] = Some((sa.length() - spawn.offset, vec![src]));
        let mut arrival: Option<(f64, Vec<usize>)> = None;
        loop {
            let mut pick: Option<usize> = None;
            for i in 0..n {
                if done[i] {
                    continue;
                }
                if let Some((c, p)) = &label[i] {
                    let better = match pick.and_then(|k| label[k].as_ref()) {
                        None => true,
                        Some((bc, bp)) => better_label(*c, p, *bc, bp),
                    };
                    if better {
                        pick = Some(i);
                    }
                }
            }
            let Some(u) = pick else { break };
            done[u] = true;
            let (cost, path) = label[u].clone().unwrap();
            for &v in self.successor_indices(u) {
                if v == dst {
                    let cand = (cost, {
                        let mut p = path.clone();
                        p.push(v);
                        p
                    });
                    if arrival.as_ref().map_or(true, |(bc, bp)| better_label(cand.0, &cand.1, *bc, bp)) {
                        arrival = Some(cand);
                    }
                }
                if done[v] {
                    continue;
                }
                let nc = cost + self.segments[v].length();
                let mut np = path.clone();
                np.push(v);
                if label[v].as_ref().map_or(true, |(bc, bp)| better_label(nc, &np, *bc, bp)) {
                    label[v] = Some((nc, np));
                }
            }
        }
        match arrival {
            Some((_, path)) => Ok(path.into_iter().map(|i| self.segments[i].id).collect()),
            None => Err(MapError::NoRoute { from: spawn, to: goal }),
        }
    }

    /// Like [`LaneGraph::route_along`], but checks that `seq` is a connected
    /// path from `spawn` to `goal` first.
    pub fn route_via(
        &self,
        spawn: LanePoint,
        goal: LanePoint,
        seq: &[SegmentId],
    ) -> Result<RoutePlan, MapError> {
        self.check_point(spawn)?;
        self.check_point(goal)?;
        let bad = || MapError::InvalidSequence(seq.to_vec());
        let (Some(&first), Some(&last)) = (seq.first(), seq.last()) else {
            return Err(bad());
        };
        if first != spawn.segment || last != goal.segment {
            return Err(bad());
        }
        if seq.len() == 1 && goal.offset < spawn.offset {
            return Err(bad());
        }
        for w in seq.windows(2) {
            if !self.successors(w[0]).contains(&w[1]) {
                return Err(bad());
            }
        }
        Ok(self.route_along(spawn, goal, seq))
    }

    /// Builds the waypoint route following an explicit segment sequence.
    pub fn route_along(&self, spawn: LanePoint, goal: LanePoint, seq: &[SegmentId]) -> RoutePlan {
        let mut pts: Vec<Vec2> = Vec::new();
        let mut legs = Vec::with_capacity(seq.len());
        let mut acc = 0.0;
        for (k, &sid) in seq.iter().enumerate() {
            let seg = self.segment(sid).expect("segment in sequence");
            let lo = if k == 0 { spawn.offset } else { 0.0 };
            let hi = if k + 1 == seq.len() { goal.offset } else { seg.length() };
            pts.push(seg.point_at(lo));
            for (p, &c) in seg.points.iter().zip(seg.cum.iter()) {
                if c > lo && c < hi {
                    pts.push(*p);
                }
            }
            pts.push(seg.point_at(hi));
            legs.push(RouteLeg {
                segment: sid,
                start_s: acc,
                end_s: acc + (hi - lo),
            });
            acc += hi - lo;
        }
        let first = self.segment(seq[0]).unwrap();
        let heading = first.heading_at(spawn.offset);
        let mut route = RoutePlan::from_waypoints(pts, legs, heading);
        // Legs use segment arc-lengths; snap them to the polyline measure.
        let total = route.total_length();
        if let Some(last) = route.legs.last_mut() {
            last.end_s = total;
        }
        route
    }
}

fn better_label(c: f64, p: &[usize], bc: f64, bp: &[usize]) -> bool {
    if c < bc - 1e-9 {
        true
    } else if c > bc + 1e-9 {
        false
    } else {
        p < bp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(len: f64) -> RoutePlan {
        let pts: Vec<Vec2> = (0..=(len * 2.0) as usize)
            .map(|k| Vec2::new(k as f64 * 0.5, 0.0))
            .collect();
        RoutePlan::from_waypoints(pts, vec![], 0.0)
    }

    #[test]
    fn pose_at_interpolates_and_bounds() {
        let r = straight(20.0);
        let p = r.pose_at(5.0).unwrap();
        assert_eq!(p.position, Vec2::new(5.0, 0.0));
        assert_eq!(p.heading, 0.0);
        assert_eq!(r.pose_at(0.0).unwrap().position, r.start());
        assert_eq!(r.pose_at(20.0).unwrap().position, r.goal());
        assert!(matches!(r.pose_at(20.5), Err(MapError::OutOfRange { .. })));
        assert!(r.pose_at(-0.1).is_err());
    }

    #[test]
    fn travel_distance_basic_cases() {
        let r = straight(30.0);
        let p = r.pose_at(7.0).unwrap().position;
        assert!((r.travel_distance(3.0, p, 1.75).unwrap() - 4.0).abs() < 1e-12);
        assert!(r.travel_distance(3.0, Vec2::new(10.0, 50.0), 1.75).is_none());
        // Behind the agent does not count.
        assert!(r.travel_distance(10.0, Vec2::new(4.0, 0.0), 1.75).is_none());
        assert!(r.travel_distance_within(3.0, Vec2::new(20.0, 0.0), 1.75, 9.2).is_none());
    }
}
