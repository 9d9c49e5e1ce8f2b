//! Directed lane graph of the driving map.
//!
//! A map is a set of directed segments (polylines sampled at a bounded
//! spacing) joined at nodes. Segments inside an intersection carry the id of
//! the junction they belong to, which is how the junction census and the
//! per-intersection breakdowns are computed.

mod default;
mod route;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{cumulative_lengths, project_on_segment, Vec2};

pub use default::{build_default_map, default_map_file, DEFAULT_MAP_JSON};
pub use route::{Pose, RouteLeg, RoutePlan};

pub const MAP_SCHEMA_VERSION: u32 = 1;

pub type NodeId = u32;
pub type SegmentId = u32;
pub type JunctionId = u32;

#[derive(Debug, thiserror::Error)]
pub enum MapError {
    #[error("unsupported map schema version {0}")]
    SchemaVersion(u32),
    #[error("segment {0} has non-positive length")]
    DegenerateSegment(SegmentId),
    #[error("segment {0} does not start and end at its nodes")]
    Discontinuous(SegmentId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("duplicate id {0}")]
    DuplicateId(u32),
    #[error("junction {0} lacks an incoming or outgoing segment")]
    JunctionDegree(JunctionId),
    #[error("lane point on segment {segment} at {offset} is outside the segment")]
    BadLanePoint { segment: SegmentId, offset: f64 },
    #[error("no directed route from {from:?} to {to:?}")]
    NoRoute { from: LanePoint, to: LanePoint },
    #[error("segment sequence {0:?} is not a connected path between the given points")]
    InvalidSequence(Vec<SegmentId>),
    #[error("arc-length {s} outside route of length {length}")]
    OutOfRange { s: f64, length: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JunctionKind {
    TIntersection,
    Corner,
    Roundabout,
}

impl JunctionKind {
    pub fn label(self) -> &'static str {
        match self {
            JunctionKind::TIntersection => "t-intersection",
            JunctionKind::Corner => "corner",
            JunctionKind::Roundabout => "roundabout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentKind {
    /// Road lane between two junctions.
    Lane,
    /// Turning or straight movement through a junction.
    Connector,
    /// Circulating arc of a roundabout.
    Ring,
}

/// Direction of travel relative to the stored polyline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TravelDirection {
    Forward,
    Reverse,
}

/// A point on the lane network, addressed by segment and arc-length offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanePoint {
    pub segment: SegmentId,
    pub offset: f64,
}

impl LanePoint {
    pub fn new(segment: SegmentId, offset: f64) -> Self {
        Self { segment, offset }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub id: SegmentId,
    pub from: NodeId,
    pub to: NodeId,
    pub kind: SegmentKind,
    pub direction: TravelDirection,
    #[serde(default)]
    pub junction: Option<JunctionId>,
    pub polyline: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionRecord {
    pub id: JunctionId,
    pub kind: JunctionKind,
    pub center: [f64; 2],
    pub nodes: Vec<NodeId>,
}

/// On-disk map schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFile {
    pub schema_version: u32,
    pub name: String,
    pub waypoint_spacing: f64,
    pub nodes: Vec<NodeRecord>,
    pub segments: Vec<SegmentRecord>,
    pub junctions: Vec<JunctionRecord>,
    pub spawns: Vec<LanePoint>,
    pub goals: Vec<LanePoint>,
}

impl MapFile {
    pub fn to_json(&self) -> Result<String, MapError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone)]
pub struct Segment {
    pub id: SegmentId,
    pub from: NodeId,
    pub to: NodeId,
    pub kind: SegmentKind,
    pub junction: Option<JunctionId>,
    /// Points in travel order.
    pub points: Vec<Vec2>,
    pub cum: Vec<f64>,
}

impl Segment {
    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn point_at(&self, offset: f64) -> Vec2 {
        let s = offset.clamp(0.0, self.length());
        let i = match self.cum.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => return self.points[i],
            Err(i) => i.clamp(1, self.points.len() - 1),
        };
        let span = self.cum[i] - self.cum[i - 1];
        self.points[i - 1].lerp(self.points[i], (s - self.cum[i - 1]) / span)
    }

    pub fn heading_at(&self, offset: f64) -> f64 {
        let s = offset.clamp(0.0, self.length());
        let i = self.cum.partition_point(|c| *c <= s).clamp(1, self.points.len() - 1);
        (self.points[i] - self.points[i - 1]).angle()
    }
}

#[derive(Debug, Clone)]
pub struct Junction {
    pub id: JunctionId,
    pub kind: JunctionKind,
    pub center: Vec2,
    pub nodes: Vec<NodeId>,
}

/// Validated, immutable lane network.
#[derive(Debug, Clone)]
pub struct LaneGraph {
    pub name: String,
    pub waypoint_spacing: f64,
    nodes: BTreeMap<NodeId, Vec2>,
    segments: Vec<Segment>,
    index: BTreeMap<SegmentId, usize>,
    successors: Vec<Vec<usize>>,
    predecessors: Vec<Vec<usize>>,
    junctions: Vec<Junction>,
    spawns: Vec<LanePoint>,
    goals: Vec<LanePoint>,
}

impl LaneGraph {
    pub fn from_file(file: MapFile) -> Result<Self, MapError> {
        if file.schema_version != MAP_SCHEMA_VERSION {
            return Err(MapError::SchemaVersion(file.schema_version));
        }
        let spacing = file.waypoint_spacing;
        let mut nodes = BTreeMap::new();
        for n in &file.nodes {
            if nodes.insert(n.id, Vec2::new(n.x, n.y)).is_some() {
                return Err(MapError::DuplicateId(n.id));
            }
        }
        let mut segments = Vec::with_capacity(file.segments.len());
        let mut index = BTreeMap::new();
        let mut sorted = file.segments.clone();
        sorted.sort_by_key(|s| s.id);
        for rec in sorted {
            let mut pts: Vec<Vec2> = rec.polyline.iter().map(|p| Vec2::new(p[0], p[1])).collect();
            if rec.direction == TravelDirection::Reverse {
                pts.reverse();
            }
            let from = *nodes.get(&rec.from).ok_or(MapError::UnknownNode(rec.from))?;
            let to = *nodes.get(&rec.to).ok_or(MapError::UnknownNode(rec.to))?;
            pts.dedup_by(|a, b| a.dist(*b) == 0.0);
            if pts.len() < 2 {
                return Err(MapError::DegenerateSegment(rec.id));
            }
            if pts[0].dist(from) > 1e-6 || pts.last().unwrap().dist(to) > 1e-6 {
                return Err(MapError::Discontinuous(rec.id));
            }
            let pts = densify(&pts, spacing);
            let cum = cumulative_lengths(&pts);
            if *cum.last().unwrap() <= 0.0 {
                return Err(MapError::DegenerateSegment(rec.id));
            }
            if index.insert(rec.id, segments.len()).is_some() {
                return Err(MapError::DuplicateId(rec.id));
            }
            segments.push(Segment {
                id: rec.id,
                from: rec.from,
                to: rec.to,
                kind: rec.kind,
                junction: rec.junction,
                points: pts,
                cum,
            });
        }
        let mut successors = vec![Vec::new(); segments.len()];
        let mut predecessors = vec![Vec::new(); segments.len()];
        for (i, a) in segments.iter().enumerate() {
            for (j, b) in segments.iter().enumerate() {
                if a.to == b.from {
                    successors[i].push(j);
                    predecessors[j].push(i);
                }
            }
        }
        let junctions: Vec<Junction> = file
            .junctions
            .iter()
            .map(|j| Junction {
                id: j.id,
                kind: j.kind,
                center: Vec2::new(j.center[0], j.center[1]),
                nodes: j.nodes.clone(),
            })
            .collect();
        for j in &junctions {
            let has_in = segments.iter().any(|s| j.nodes.contains(&s.to));
            let has_out = segments.iter().any(|s| j.nodes.contains(&s.from));
            if !has_in || !has_out {
                return Err(MapError::JunctionDegree(j.id));
            }
        }
        let graph = LaneGraph {
            name: file.name,
            waypoint_spacing: spacing,
            nodes,
            segments,
            index,
            successors,
            predecessors,
            junctions,
            spawns: file.spawns,
            goals: file.goals,
        };
        for p in graph.spawns.iter().chain(graph.goals.iter()) {
            graph.check_point(*p)?;
        }
        Ok(graph)
    }

    pub fn from_json_str(json: &str) -> Result<Self, MapError> {
        Self::from_file(serde_json::from_str(json)?)
    }

    pub fn load(path: &Path) -> Result<Self, MapError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn junctions(&self) -> &[Junction] {
        &self.junctions
    }

    pub fn spawns(&self) -> &[LanePoint] {
        &self.spawns
    }

    pub fn goals(&self) -> &[LanePoint] {
        &self.goals
    }

    pub fn node_position(&self, id: NodeId) -> Option<Vec2> {
        self.nodes.get(&id).copied()
    }

    pub fn segment(&self, id: SegmentId) -> Option<&Segment> {
        self.index.get(&id).map(|&i| &self.segments[i])
    }

    pub(crate) fn seg_index(&self, id: SegmentId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub(crate) fn successor_indices(&self, idx: usize) -> &[usize] {
        &self.successors[idx]
    }

    pub fn successors(&self, id: SegmentId) -> Vec<SegmentId> {
        self.seg_index(id)
            .map(|i| self.successors[i].iter().map(|&j| self.segments[j].id).collect())
            .unwrap_or_default()
    }

    pub fn predecessors(&self, id: SegmentId) -> Vec<SegmentId> {
        self.seg_index(id)
            .map(|i| self.predecessors[i].iter().map(|&j| self.segments[j].id).collect())
            .unwrap_or_default()
    }

    pub fn junction(&self, id: JunctionId) -> Option<&Junction> {
        self.junctions.iter().find(|j| j.id == id)
    }

    /// Number of junctions of each kind.
    pub fn junction_census(&self) -> BTreeMap<JunctionKind, usize> {
        let mut census = BTreeMap::new();
        for j in &self.junctions {
            *census.entry(j.kind).or_insert(0) += 1;
        }
        census
    }

    pub fn check_point(&self, p: LanePoint) -> Result<&Segment, MapError> {
        let bad = MapError::BadLanePoint {
            segment: p.segment,
            offset: p.offset,
        };
        let seg = match self.segment(p.segment) {
            Some(s) => s,
            None => return Err(bad),
        };
        if !(p.offset >= 0.0 && p.offset <= seg.length() + 1e-9) {
            return Err(bad);
        }
        Ok(seg)
    }

    pub fn position(&self, p: LanePoint) -> Result<Vec2, MapError> {
        Ok(self.check_point(p)?.point_at(p.offset))
    }

    /// Projects a position onto the nearest segment within `tolerance` meters.
    /// Ties go to the smallest segment id.
    pub fn locate(&self, pos: Vec2, tolerance: f64) -> Option<LanePoint> {
        let mut best: Option<(f64, LanePoint)> = None;
        for seg in &self.segments {
            for i in 1..seg.points.len() {
                let (t, d) = project_on_segment(pos, seg.points[i - 1], seg.points[i]);
                if d <= tolerance && best.map_or(true, |(bd, _)| d < bd) {
                    let off = seg.cum[i - 1] + t * (seg.cum[i] - seg.cum[i - 1]);
                    best = Some((d, LanePoint::new(seg.id, off)));
                }
            }
        }
        best.map(|(_, p)| p)
    }

    pub fn lanes(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(|s| s.kind == SegmentKind::Lane)
    }
}

/// Subdivides polyline pieces longer than `spacing`, keeping the original vertices.
fn densify(points: &[Vec2], spacing: f64) -> Vec<Vec2> {
    let mut out = vec![points[0]];
    for w in points.windows(2) {
        let d = w[0].dist(w[1]);
        let n = (d / spacing).ceil().max(1.0) as usize;
        for k in 1..=n {
            out.push(w[0].lerp(w[1], k as f64 / n as f64));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_file() -> MapFile {
        MapFile {
            schema_version: MAP_SCHEMA_VERSION,
            name: "tiny".into(),
            waypoint_spacing: 0.5,
            nodes: vec![
                NodeRecord { id: 0, x: 0.0, y: 0.0 },
                NodeRecord { id: 1, x: 30.0, y: 0.0 },
            ],
            segments: vec![
                SegmentRecord {
                    id: 0,
                    from: 0,
                    to: 1,
                    kind: SegmentKind::Lane,
                    direction: TravelDirection::Forward,
                    junction: None,
                    polyline: vec![[0.0, 0.0], [30.0, 0.0]],
                },
                SegmentRecord {
                    id: 1,
                    from: 1,
                    to: 0,
                    kind: SegmentKind::Lane,
                    direction: TravelDirection::Reverse,
                    junction: None,
                    polyline: vec![[0.0, 0.0], [15.0, 10.0], [30.0, 0.0]],
                },
            ],
            junctions: vec![],
            spawns: vec![LanePoint::new(0, 3.0)],
            goals: vec![LanePoint::new(1, 3.0)],
        }
    }

    #[test]
    fn reverse_direction_is_normalized_and_densified() {
        let g = LaneGraph::from_file(tiny_file()).unwrap();
        let s = g.segment(1).unwrap();
        assert_eq!(s.points[0], Vec2::new(30.0, 0.0));
        assert_eq!(*s.points.last().unwrap(), Vec2::new(0.0, 0.0));
        assert!(s.points.windows(2).all(|w| w[0].dist(w[1]) <= 0.5 + 1e-12));
        assert_eq!(g.successors(0), vec![1]);
    }

    #[test]
    fn rejects_wrong_schema_and_bad_points() {
        let mut f = tiny_file();
        f.schema_version = 99;
        assert!(matches!(LaneGraph::from_file(f), Err(MapError::SchemaVersion(99))));
        let mut f = tiny_file();
        f.spawns.push(LanePoint::new(0, 31.0));
        assert!(matches!(LaneGraph::from_file(f), Err(MapError::BadLanePoint { .. })));
        let mut f = tiny_file();
        f.segments[0].polyline[1] = [29.0, 0.0];
        assert!(matches!(LaneGraph::from_file(f), Err(MapError::Discontinuous(0))));
    }

    #[test]
    fn locate_projects_onto_lane() {
        let g = LaneGraph::from_file(tiny_file()).unwrap();
        let p = g.locate(Vec2::new(12.0, 0.4), 1.0).unwrap();
        assert_eq!(p.segment, 0);
        assert!((p.offset - 12.0).abs() < 1e-9);
        assert!(g.locate(Vec2::new(12.0, -5.0), 1.0).is_none());
    }
}
