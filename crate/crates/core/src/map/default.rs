//! The bundled neighborhood: a 3x3 grid of junctions spaced 50 m apart.
//! Corners sit at the grid corners, T-intersections at the edge midpoints and
//! a single-lane roundabout in the middle. Every road carries one lane per
//! direction (right-hand traffic, 3.5 m lanes).

use super::{
    JunctionId, JunctionKind, JunctionRecord, LaneGraph, LanePoint, MapFile, NodeId, NodeRecord,
    SegmentId, SegmentKind, SegmentRecord, TravelDirection, MAP_SCHEMA_VERSION,
};
use crate::geometry::{ccw_arc, cubic_bezier, resample, Vec2};

/// The bundled map, as shipped in `assets/default_map.json`.
pub const DEFAULT_MAP_JSON: &str = include_str!("../../assets/default_map.json");

const GRID: f64 = 50.0;
const LANE_WIDTH: f64 = 3.5;
const SETBACK: f64 = 8.0;
const ROUNDABOUT_SETBACK: f64 = 18.0;
const ROUNDABOUT_RADIUS: f64 = 10.0;
const ROUNDABOUT_PORT_ANGLE: f64 = 35.0;
const SPACING: f64 = 0.5;
const SPAWN_MARGIN: f64 = 3.0;
const SPAWN_STEP: f64 = 7.0;

/// Loads the bundled map file.
pub fn build_default_map() -> LaneGraph {
    LaneGraph::from_json_str(DEFAULT_MAP_JSON).expect("bundled map is valid")
}

struct Builder {
    nodes: Vec<NodeRecord>,
    segments: Vec<SegmentRecord>,
}

impl Builder {
    fn node(&mut self, p: Vec2) -> NodeId {
        let id = self.nodes.len() as NodeId;
        self.nodes.push(NodeRecord { id, x: p.x, y: p.y });
        id
    }

    fn pos(&self, id: NodeId) -> Vec2 {
        let n = &self.nodes[id as usize];
        Vec2::new(n.x, n.y)
    }

    fn segment(
        &mut self,
        from: NodeId,
        to: NodeId,
        kind: SegmentKind,
        junction: Option<JunctionId>,
        dense: Vec<Vec2>,
    ) -> SegmentId {
        let id = self.segments.len() as SegmentId;
        let mut pts = resample(&dense, SPACING);
        // Pin endpoints to the node coordinates exactly.
        pts[0] = self.pos(from);
        *pts.last_mut().unwrap() = self.pos(to);
        self.segments.push(SegmentRecord {
            id,
            from,
            to,
            kind,
            direction: TravelDirection::Forward,
            junction,
            polyline: pts.iter().map(|p| [p.x, p.y]).collect(),
        });
        id
    }
}

struct LaneRef {
    seg: SegmentId,
    start: NodeId,
    end: NodeId,
    /// Junction at the start and at the end.
    from_j: usize,
    to_j: usize,
    dir: Vec2,
}

/// Smooth movement between two oriented points.
fn connector_curve(p0: Vec2, d0: Vec2, p3: Vec2, d3: Vec2) -> Vec<Vec2> {
    let denom = d0.cross(d3);
    let (c0, c3) = if denom.abs() < 1e-9 {
        let c = p0.dist(p3) / 3.0;
        (c, c)
    } else {
        // p0 + d0 t = p3 - d3 u
        let w = p3 - p0;
        let t = w.cross(d3) / d0.cross(d3);
        let u = d0.cross(w) / d0.cross(d3);
        if t > 0.0 && u > 0.0 {
            (0.5523 * t, 0.5523 * u)
        } else {
            let c = 0.4 * p0.dist(p3);
            (c, c)
        }
    };
    cubic_bezier(p0, p0 + d0 * c0, p3 - d3 * c3, p3, 400)
}

/// Builds the default neighborhood from its geometric recipe.
pub fn default_map_file() -> MapFile {
    let mut b = Builder {
        nodes: Vec::new(),
        segments: Vec::new(),
    };
    let mut centers = Vec::new();
    let mut kinds = Vec::new();
    for j in 0..3 {
        for i in 0..3 {
            centers.push(Vec2::new(GRID * i as f64, GRID * j as f64));
            let edge_i = i != 1;
            let edge_j = j != 1;
            kinds.push(match (edge_i, edge_j) {
                (true, true) => JunctionKind::Corner,
                (false, false) => JunctionKind::Roundabout,
                _ => JunctionKind::TIntersection,
            });
        }
    }
    let setback = |k: usize| {
        if kinds[k] == JunctionKind::Roundabout {
            ROUNDABOUT_SETBACK
        } else {
            SETBACK
        }
    };
    let mut links = Vec::new();
    for j in 0..3 {
        for i in 0..2 {
            links.push((j * 3 + i, j * 3 + i + 1));
        }
    }
    for j in 0..2 {
        for i in 0..3 {
            links.push((j * 3 + i, (j + 1) * 3 + i));
        }
    }

    let mut lanes: Vec<LaneRef> = Vec::new();
    for &(a, c) in &links {
        for (from_j, to_j) in [(a, c), (c, a)] {
            let u = (centers[to_j] - centers[from_j]).normalized();
            let n = u.right_normal() * (LANE_WIDTH / 2.0);
            let p0 = centers[from_j] + u * setback(from_j) + n;
            let p1 = centers[to_j] - u * setback(to_j) + n;
            let start = b.node(p0);
            let end = b.node(p1);
            let seg = b.segment(start, end, SegmentKind::Lane, None, vec![p0, p1]);
            lanes.push(LaneRef {
                seg,
                start,
                end,
                from_j,
                to_j,
                dir: u,
            });
        }
    }

    let mut junctions = Vec::new();
    for (k, &center) in centers.iter().enumerate() {
        let jid = k as JunctionId;
        let incoming: Vec<&LaneRef> = lanes.iter().filter(|l| l.to_j == k).collect();
        let outgoing: Vec<&LaneRef> = lanes.iter().filter(|l| l.from_j == k).collect();
        let mut jnodes: Vec<NodeId> = Vec::new();
        match kinds[k] {
            JunctionKind::Corner | JunctionKind::TIntersection => {
                for lin in &incoming {
                    for lout in &outgoing {
                        if lout.to_j == lin.from_j {
                            continue;
                        }
                        let curve = connector_curve(b.pos(lin.end), lin.dir, b.pos(lout.start), lout.dir);
                        b.segment(lin.end, lout.start, SegmentKind::Connector, Some(jid), curve);
                    }
                    jnodes.push(lin.end);
                }
                jnodes.extend(outgoing.iter().map(|l| l.start));
            }
            JunctionKind::Roundabout => {
                let port = ROUNDABOUT_PORT_ANGLE.to_radians();
                // (angle, node, role) around the ring.
                let mut ring: Vec<(f64, NodeId)> = Vec::new();
                let norm = |a: f64| a.rem_euclid(std::f64::consts::TAU);
                let mut entries = Vec::new();
                let mut exits = Vec::new();
                for lin in &incoming {
                    let arm = (centers[lin.from_j] - center).angle();
                    let a = norm(arm + port);
                    let node = b.node(center + Vec2::from_angle(a) * ROUNDABOUT_RADIUS);
                    ring.push((a, node));
                    entries.push((lin.end, lin.dir, node, a));
                }
                for lout in &outgoing {
                    let arm = (centers[lout.to_j] - center).angle();
                    let a = norm(arm - port);
                    let node = b.node(center + Vec2::from_angle(a) * ROUNDABOUT_RADIUS);
                    ring.push((a, node));
                    exits.push((node, a, lout.start, lout.dir));
                }
                ring.sort_by(|x, y| x.0.total_cmp(&y.0));
                let tangent = |a: f64| Vec2::new(-a.sin(), a.cos());
                for (lane_end, dir, node, a) in entries {
                    let curve = connector_curve(b.pos(lane_end), dir, b.pos(node), tangent(a));
                    b.segment(lane_end, node, SegmentKind::Connector, Some(jid), curve);
                }
                for (node, a, lane_start, dir) in exits {
                    let curve = connector_curve(b.pos(node), tangent(a), b.pos(lane_start), dir);
                    b.segment(node, lane_start, SegmentKind::Connector, Some(jid), curve);
                }
                for w in 0..ring.len() {
                    let (a0, n0) = ring[w];
                    let (a1, n1) = ring[(w + 1) % ring.len()];
                    let arc = ccw_arc(center, ROUNDABOUT_RADIUS, a0, a1, 200);
                    b.segment(n0, n1, SegmentKind::Ring, Some(jid), arc);
                }
                jnodes.extend(incoming.iter().map(|l| l.end));
                jnodes.extend(outgoing.iter().map(|l| l.start));
                jnodes.extend(ring.iter().map(|r| r.1));
            }
        }
        jnodes.sort_unstable();
        junctions.push(JunctionRecord {
            id: jid,
            kind: kinds[k],
            center: [center.x, center.y],
            nodes: jnodes,
        });
    }

    let mut spawns = Vec::new();
    for l in &lanes {
        let p0 = b.pos(l.start);
        let p1 = b.pos(l.end);
        let len = p0.dist(p1);
        let mut off = SPAWN_MARGIN;
        while off <= len - SPAWN_MARGIN + 1e-9 {
            spawns.push(LanePoint::new(l.seg, off));
            off += SPAWN_STEP;
        }
    }

    MapFile {
        schema_version: MAP_SCHEMA_VERSION,
        name: "neighborhood-3x3".into(),
        waypoint_spacing: SPACING,
        nodes: b.nodes,
        segments: b.segments,
        junctions,
        goals: spawns.clone(),
        spawns,
    }
}
