//! Road network description (JSON-loadable) and lane-graph route planning.

use crate::error::{Error, Result};
use crate::geometry::{cumulative_lengths, point_at, wrap_angle, Pose, Segment, Vec2};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

/// Lane ends closer than this are considered connected.
const JOIN_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LightColor {
    Red,
    Green,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    pub state: LightColor,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightSpec {
    pub stop_line: [[f64; 2]; 2],
    pub phases: Vec<PhaseSpec>,
    /// Seconds already elapsed in the cycle at t = 0.
    #[serde(default)]
    pub offset: f64,
}

impl LightSpec {
    pub fn segment(&self) -> Segment {
        Segment::new(self.stop_line[0].into(), self.stop_line[1].into())
    }

    pub fn cycle(&self) -> f64 {
        self.phases.iter().map(|p| p.duration).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticObject {
    pub pose: [f64; 3],
    pub length: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub name: String,
    /// Directed lane centerlines, each an array of `[x, y]` points.
    pub lanes: Vec<Vec<[f64; 2]>>,
    pub lane_half_width: f64,
    #[serde(default)]
    pub lights: Vec<LightSpec>,
    #[serde(default)]
    pub stop_signs: Vec<[[f64; 2]; 2]>,
    #[serde(default)]
    pub crosswalks: Vec<[[f64; 2]; 2]>,
    #[serde(default)]
    pub static_objects: Vec<StaticObject>,
    /// `[x, y, heading]` poses lying on lanes.
    pub spawn_points: Vec<[f64; 3]>,
}

impl MapSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: MapSpec =
            serde_json::from_str(text).map_err(|e| Error::config("map", e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lane_half_width > 0.0) {
            return Err(Error::config("map.lane_half_width", "must be > 0"));
        }
        if self.lanes.is_empty() {
            return Err(Error::config("map.lanes", "at least one lane required"));
        }
        for (i, lane) in self.lanes.iter().enumerate() {
            if lane.len() < 2 {
                return Err(Error::config(format!("map.lanes[{i}]"), "needs at least 2 points"));
            }
            for w in lane.windows(2) {
                if Vec2::from(w[0]).dist(Vec2::from(w[1])) == 0.0 {
                    return Err(Error::config(
                        format!("map.lanes[{i}]"),
                        "consecutive points must be distinct",
                    ));
                }
            }
            if lane.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::config(format!("map.lanes[{i}]"), "non-finite coordinate"));
            }
        }
        for (i, l) in self.lights.iter().enumerate() {
            if l.phases.is_empty() || l.phases.iter().any(|p| !(p.duration > 0.0)) {
                return Err(Error::config(
                    format!("map.lights[{i}].phases"),
                    "need at least one phase, all durations > 0",
                ));
            }
        }
        for (i, o) in self.static_objects.iter().enumerate() {
            if !(o.length > 0.0 && o.width > 0.0) {
                return Err(Error::config(format!("map.static_objects[{i}]"), "dimensions must be > 0"));
            }
        }
        if self.spawn_points.is_empty() {
            return Err(Error::config("map.spawn_points", "at least one spawn point required"));
        }
        Ok(())
    }
}

/// Parameters for the procedural grid town.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridParams {
    pub rows: usize,
    pub cols: usize,
    /// Distance between neighbouring intersection centers.
    pub block: f64,
    pub lane_half_width: f64,
    /// Distance from an intersection center to its stop lines.
    pub junction_half: f64,
    pub green: f64,
    pub all_red: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            rows: 3,
            cols: 3,
            block: 70.0,
            lane_half_width: 1.75,
            junction_half: 8.0,
            green: 10.0,
            all_red: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct LaneEnd {
    point: Vec2,
    heading: f64,
}

/// Builds a `rows × cols` grid of two-way roads. Intersections alternate
/// between signalized and all-way stop control in a checkerboard pattern.
pub fn grid_map(p: &GridParams) -> MapSpec {
    let hw = p.lane_half_width;
    let center = |i: usize, j: usize| Vec2::new(j as f64 * p.block, i as f64 * p.block);
    let mut lanes: Vec<Vec<[f64; 2]>> = Vec::new();
    let mut incoming: Vec<Vec<LaneEnd>> = vec![Vec::new(); p.rows * p.cols];
    let mut outgoing: Vec<Vec<LaneEnd>> = vec![Vec::new(); p.rows * p.cols];
    let mut spawn_points = Vec::new();
    let mut crosswalks = Vec::new();
    let mut static_objects = Vec::new();

    let mut roads = Vec::new();
    for i in 0..p.rows {
        for j in 0..p.cols {
            if j + 1 < p.cols {
                roads.push(((i, j), (i, j + 1)));
            }
            if i + 1 < p.rows {
                roads.push(((i, j), (i + 1, j)));
            }
        }
    }

    for &((ai, aj), (bi, bj)) in &roads {
        let (na, nb) = (ai * p.cols + aj, bi * p.cols + bj);
        for (from, to, nf, nt) in [(center(ai, aj), center(bi, bj), na, nb), (center(bi, bj), center(ai, aj), nb, na)] {
            let u = (to - from).normalized();
            let right = -u.perp();
            let s = from + u * p.junction_half + right * hw;
            let e = to - u * p.junction_half + right * hw;
            lanes.push(vec![[s.x, s.y], [e.x, e.y]]);
            outgoing[nf].push(LaneEnd { point: s, heading: u.angle() });
            incoming[nt].push(LaneEnd { point: e, heading: u.angle() });
            let sp = s + u * 12.0;
            spawn_points.push([sp.x, sp.y, u.angle()]);
            // curbside bollard a third of the way down the block
            let b = s + u * ((e - s).norm() / 3.0) + right * (hw + 0.5);
            static_objects.push(StaticObject { pose: [b.x, b.y, u.angle()], length: 0.5, width: 0.5 });
        }
        if (ai + aj) % 2 == 0 {
            let (a, b) = (center(ai, aj), center(bi, bj));
            let mid = (a + b) * 0.5;
            let n = (b - a).normalized().perp() * (2.0 * hw + 1.0);
            let (c0, c1) = (mid + n, mid - n);
            crosswalks.push([[c0.x, c0.y], [c1.x, c1.y]]);
        }
    }

    let mut lights = Vec::new();
    let mut stop_signs = Vec::new();
    for i in 0..p.rows {
        for j in 0..p.cols {
            let node = i * p.cols + j;
            let signalized = (i + j) % 2 == 0;
            for inc in &incoming[node] {
                let left = Vec2::from_angle(inc.heading).perp() * hw;
                let (l0, l1) = (inc.point + left, inc.point - left);
                let line = [[l0.x, l0.y], [l1.x, l1.y]];
                if signalized {
                    let north_south = inc.heading.sin().abs() > 0.5;
                    let phases = if north_south {
                        vec![
                            PhaseSpec { state: LightColor::Green, duration: p.green },
                            PhaseSpec { state: LightColor::Red, duration: p.all_red + p.green + p.all_red },
                        ]
                    } else {
                        vec![
                            PhaseSpec { state: LightColor::Red, duration: p.green + p.all_red },
                            PhaseSpec { state: LightColor::Green, duration: p.green },
                            PhaseSpec { state: LightColor::Red, duration: p.all_red },
                        ]
                    };
                    let cycle = 2.0 * (p.green + p.all_red);
                    lights.push(LightSpec {
                        stop_line: line,
                        phases,
                        offset: ((i * 7 + j * 3) as f64 * 1.5) % cycle,
                    });
                } else {
                    stop_signs.push(line);
                }
                for out in &outgoing[node] {
                    let dh = wrap_angle(out.heading - inc.heading);
                    if (dh.abs() - std::f64::consts::PI).abs() < 1e-6 {
                        continue;
                    }
                    lanes.push(connector(inc, out));
                }
            }
        }
    }

    MapSpec {
        name: format!("grid{}x{}", p.rows, p.cols),
        lanes,
        lane_half_width: hw,
        lights,
        stop_signs,
        crosswalks,
        static_objects,
        spawn_points,
    }
}

fn connector(inc: &LaneEnd, out: &LaneEnd) -> Vec<[f64; 2]> {
    let (p0, p2) = (inc.point, out.point);
    let d0 = Vec2::from_angle(inc.heading);
    let d2 = Vec2::from_angle(out.heading);
    let denom = d0.cross(d2);
    if denom.abs() < 1e-9 {
        return vec![[p0.x, p0.y], [p2.x, p2.y]];
    }
    // control point where the two tangent lines meet
    let t = (p2 - p0).cross(d2) / denom;
    let p1 = p0 + d0 * t;
    const N: usize = 16;
    (0..=N)
        .map(|k| {
            let t = k as f64 / N as f64;
            let q = p0 * ((1.0 - t) * (1.0 - t)) + p1 * (2.0 * t * (1.0 - t)) + p2 * (t * t);
            [q.x, q.y]
        })
        .collect()
}

/// A straight single-lane road along +x; handy for tests and demos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StraightParams {
    pub length: f64,
    pub lane_half_width: f64,
    /// Positions along x of red/green signal stop lines.
    pub lights: Vec<(f64, Vec<PhaseSpec>)>,
    pub stop_signs: Vec<f64>,
    pub crosswalks: Vec<f64>,
}

impl Default for StraightParams {
    fn default() -> Self {
        Self {
            length: 200.0,
            lane_half_width: 1.75,
            lights: Vec::new(),
            stop_signs: Vec::new(),
            crosswalks: Vec::new(),
        }
    }
}

pub fn straight_map(p: &StraightParams) -> MapSpec {
    let hw = p.lane_half_width;
    let line = |x: f64, h: f64| [[x, h], [x, -h]];
    MapSpec {
        name: "straight".into(),
        lanes: vec![vec![[0.0, 0.0], [p.length, 0.0]]],
        lane_half_width: hw,
        lights: p
            .lights
            .iter()
            .map(|(x, phases)| LightSpec { stop_line: line(*x, hw), phases: phases.clone(), offset: 0.0 })
            .collect(),
        stop_signs: p.stop_signs.iter().map(|&x| line(x, hw)).collect(),
        crosswalks: p.crosswalks.iter().map(|&x| line(x, 2.0 * hw + 1.0)).collect(),
        static_objects: Vec::new(),
        spawn_points: vec![[5.0, 0.0, 0.0], [p.length - 5.0, 0.0, 0.0]],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub points: Vec<Vec2>,
    pub cum: Vec<f64>,
}

impl Lane {
    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn pose_at(&self, s: f64) -> Pose {
        let (p, h) = point_at(&self.points, &self.cum, s);
        Pose::new(p.x, p.y, h)
    }

    /// Nearest arc length and distance from `p`.
    pub fn project(&self, p: Vec2) -> (f64, f64, f64) {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for (i, w) in self.points.windows(2).enumerate() {
            let seg = Segment::new(w[0], w[1]);
            let (t, q) = seg.project(p);
            let d = q.dist(p);
            if d < best.0 {
                best = (d, self.cum[i] + t * (self.cum[i + 1] - self.cum[i]), (w[1] - w[0]).angle());
            }
        }
        (best.1, best.0, best.2)
    }
}

/// MapSpec plus the derived lane graph.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork {
    pub spec: MapSpec,
    pub lanes: Vec<Lane>,
    pub successors: Vec<Vec<usize>>,
    /// Light index whose stop line sits at the lane's end, if any.
    pub light_at_end: Vec<Option<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanePos {
    pub lane: usize,
    pub s: f64,
}

#[derive(Clone, Copy, PartialEq)]
struct Frontier {
    cost: f64,
    lane: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, o: &Self) -> Ordering {
        o.cost.total_cmp(&self.cost).then_with(|| o.lane.cmp(&self.lane))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl RoadNetwork {
    pub fn new(spec: MapSpec) -> Result<Self> {
        spec.validate()?;
        let lanes: Vec<Lane> = spec
            .lanes
            .iter()
            .map(|pts| {
                let points: Vec<Vec2> = pts.iter().map(|&p| p.into()).collect();
                let cum = cumulative_lengths(&points);
                Lane { points, cum }
            })
            .collect();
        let successors = lanes
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let end = *a.points.last().unwrap();
                lanes
                    .iter()
                    .enumerate()
                    .filter(|&(j, b)| j != i && b.points[0].dist(end) < JOIN_TOLERANCE)
                    .map(|(j, _)| j)
                    .collect()
            })
            .collect();
        let light_at_end = lanes
            .iter()
            .map(|l| {
                let end = *l.points.last().unwrap();
                spec.lights.iter().position(|ls| ls.segment().distance_to(end) < 1.0)
            })
            .collect();
        Ok(Self { spec, lanes, successors, light_at_end })
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    /// Finds the lane position nearest `pose` whose direction agrees with the
    /// pose heading.
    pub fn locate(&self, pose: Pose, max_dist: f64) -> Option<LanePos> {
        let p = pose.position();
        let mut best: Option<(f64, LanePos)> = None;
        for (i, lane) in self.lanes.iter().enumerate() {
            let (s, d, h) = lane.project(p);
            if d > max_dist || wrap_angle(h - pose.heading).cos() < 0.5 {
                continue;
            }
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, LanePos { lane: i, s }));
            }
        }
        best.map(|(_, lp)| lp)
    }

    /// Shortest lane-graph path from `from` to `to`, returned as a polyline.
    pub fn plan(&self, from: LanePos, to: LanePos) -> Option<Vec<Vec2>> {
        let lanes = self.shortest_lane_path(from, to)?;
        let mut pts: Vec<Vec2> = Vec::new();
        let last = lanes.len() - 1;
        for (idx, &lane_id) in lanes.iter().enumerate() {
            let lane = &self.lanes[lane_id];
            let s0 = if idx == 0 { from.s } else { 0.0 };
            let s1 = if idx == last { to.s } else { lane.length() };
            let mut piece = vec![lane.pose_at(s0).position()];
            for (k, &c) in lane.cum.iter().enumerate() {
                if c > s0 && c < s1 {
                    piece.push(lane.points[k]);
                }
            }
            piece.push(lane.pose_at(s1).position());
            for q in piece {
                if pts.last().map_or(true, |l: &Vec2| l.dist(q) > 1e-9) {
                    pts.push(q);
                }
            }
        }
        if pts.len() < 2 {
            return None;
        }
        Some(pts)
    }

    fn shortest_lane_path(&self, from: LanePos, to: LanePos) -> Option<Vec<usize>> {
        if from.lane == to.lane && to.s > from.s {
            return Some(vec![from.lane]);
        }
        let n = self.lanes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        let head = self.lanes[from.lane].length() - from.s;
        for &nx in &self.successors[from.lane] {
            let c = head + if nx == to.lane { to.s } else { self.lanes[nx].length() };
            if c < dist[nx] {
                dist[nx] = c;
                prev[nx] = from.lane;
                heap.push(Frontier { cost: c, lane: nx });
            }
        }
        while let Some(Frontier { cost, lane }) = heap.pop() {
            if cost > dist[lane] {
                continue;
            }
            if lane == to.lane {
                let mut path = vec![lane];
                let mut cur = prev[lane];
                while cur != from.lane {
                    path.push(cur);
                    cur = prev[cur];
                }
                path.push(from.lane);
                path.reverse();
                return Some(path);
            }
            for &nx in &self.successors[lane] {
                if nx == from.lane && from.lane != to.lane {
                    continue;
                }
                let c = cost + if nx == to.lane { to.s } else { self.lanes[nx].length() };
                if c < dist[nx] {
                    dist[nx] = c;
                    prev[nx] = lane;
                    heap.push(Frontier { cost: c, lane: nx });
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_lanes_are_connected() {
        let net = RoadNetwork::new(grid_map(&GridParams::default())).unwrap();
        for (i, s) in net.successors.iter().enumerate() {
            assert!(!s.is_empty(), "lane {i} is a dead end");
        }
        assert_eq!(net.spec.spawn_points.len(), 24);
        assert!(!net.spec.lights.is_empty() && !net.spec.stop_signs.is_empty());
    }

    #[test]
    fn every_spawn_pair_is_routable() {
        let net = RoadNetwork::new(grid_map(&GridParams::default())).unwrap();
        let pos: Vec<LanePos> = net
            .spec
            .spawn_points
            .iter()
            .map(|p| net.locate(Pose::new(p[0], p[1], p[2]), 0.5).unwrap())
            .collect();
        for a in &pos {
            for b in &pos {
                let pts = net.plan(*a, *b).expect("route");
                assert!(pts.len() >= 2);
            }
        }
    }

    #[test]
    fn rejects_degenerate_lanes() {
        let mut m = straight_map(&StraightParams::default());
        m.lanes[0] = vec![[0.0, 0.0], [0.0, 0.0]];
        assert!(matches!(m.validate(), Err(Error::Config { .. })));
        let mut m = straight_map(&StraightParams::default());
        m.lane_half_width = 0.0;
        assert!(m.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = grid_map(&GridParams::default());
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(MapSpec::from_json(&text).unwrap(), m);
    }
}
