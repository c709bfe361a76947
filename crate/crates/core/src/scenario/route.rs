use crate::geometry::{cumulative_lengths, wrap_angle, Segment, Vec2};
use crate::scenario::map::MapSpec;
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Smallest allowed gap between consecutive waypoints.
pub const MIN_WAYPOINT_GAP: f64 = 0.5;
/// Largest allowed gap between consecutive waypoints.
pub const MAX_WAYPOINT_GAP: f64 = 4.0;
/// Distance ahead of the current waypoint that route-frame queries consider.
const LOOKAHEAD_M: f64 = 80.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Waypoint {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintKind {
    Light(usize),
    StopSign(usize),
}

/// A stop line crossed by the route, at arc length `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteConstraint {
    pub kind: ConstraintKind,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub waypoints: Vec<Waypoint>,
    pub goal: Vec2,
    /// Index of the furthest waypoint passed; never decreases on one route.
    pub current_index: usize,
    pub spacing: f64,
    pub constraints: Vec<RouteConstraint>,
    points: Vec<Vec2>,
    cum: Vec<f64>,
}

/// Nearest-point query result in the route frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteProjection {
    /// Arc length of the nearest route point.
    pub s: f64,
    /// Signed distance to the nearest route point, left of travel positive.
    pub lateral: f64,
    /// Heading of the route segment holding the nearest point.
    pub tangent: f64,
    pub segment: usize,
}

impl Route {
    /// Resamples `polyline` at `spacing` meters of arc length and records
    /// every light / stop-sign line the route crosses.
    pub fn from_polyline(polyline: &[Vec2], spacing: f64, map: &MapSpec) -> Route {
        let src_cum = cumulative_lengths(polyline);
        let total = *src_cum.last().unwrap();
        let mut points = Vec::new();
        let mut seg = 0;
        let mut k = 0usize;
        loop {
            let s = k as f64 * spacing;
            if s >= total {
                break;
            }
            while seg + 2 < src_cum.len() && src_cum[seg + 1] <= s {
                seg += 1;
            }
            let len = src_cum[seg + 1] - src_cum[seg];
            let t = (s - src_cum[seg]) / len;
            points.push(polyline[seg] + (polyline[seg + 1] - polyline[seg]) * t);
            k += 1;
        }
        let end = *polyline.last().unwrap();
        if points.len() >= 2 && points.last().unwrap().dist(end) < MIN_WAYPOINT_GAP {
            points.pop();
        }
        points.push(end);

        let waypoints: Vec<Waypoint> = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let h = if i + 1 < points.len() {
                    (points[i + 1] - *p).angle()
                } else {
                    (*p - points[i - 1]).angle()
                };
                Waypoint { x: p.x, y: p.y, heading: h }
            })
            .collect();
        let cum = cumulative_lengths(&points);

        let mut constraints = Vec::new();
        let lines = map
            .lights
            .iter()
            .enumerate()
            .map(|(i, l)| (ConstraintKind::Light(i), l.segment()))
            .chain(map.stop_signs.iter().enumerate().map(|(i, l)| {
                (ConstraintKind::StopSign(i), Segment::new(l[0].into(), l[1].into()))
            }));
        for (kind, line) in lines {
            for i in 0..points.len() - 1 {
                let seg = Segment::new(points[i], points[i + 1]);
                if let Some(t) = seg.crossing_param(&line) {
                    let s = cum[i] + t * (cum[i + 1] - cum[i]);
                    let dup = constraints
                        .iter()
                        .any(|c: &RouteConstraint| c.kind == kind && (c.s - s).abs() < 1.0);
                    if !dup {
                        constraints.push(RouteConstraint { kind, s });
                    }
                }
            }
        }
        constraints.sort_by(|a, b| a.s.total_cmp(&b.s));

        Route {
            waypoints,
            goal: end,
            current_index: 0,
            spacing,
            constraints,
            points,
            cum,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    /// Cumulative arc length at each waypoint.
    pub fn arc_lengths(&self) -> &[f64] {
        &self.cum
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    /// Segment indices considered by route-frame queries at the current index.
    pub fn window(&self) -> Range<usize> {
        let n_seg = self.points.len() - 1;
        let lo = self.current_index.saturating_sub(2).min(n_seg - 1);
        let ahead = (LOOKAHEAD_M / self.spacing).ceil() as usize;
        let hi = (self.current_index + ahead).min(n_seg);
        lo..hi.max(lo + 1)
    }

    /// Nearest point on the windowed route polyline; ties go to the lower
    /// segment index.
    pub fn project(&self, p: Vec2) -> RouteProjection {
        let mut best_d = f64::INFINITY;
        let mut best = RouteProjection { s: 0.0, lateral: 0.0, tangent: 0.0, segment: 0 };
        for i in self.window() {
            let seg = Segment::new(self.points[i], self.points[i + 1]);
            let (t, q) = seg.project(p);
            let d = q.dist(p);
            if d < best_d {
                best_d = d;
                let dir = self.points[i + 1] - self.points[i];
                let sign = if dir.cross(p - q) < 0.0 { -1.0 } else { 1.0 };
                best = RouteProjection {
                    s: self.cum[i] + t * (self.cum[i + 1] - self.cum[i]),
                    lateral: sign * d,
                    tangent: dir.angle(),
                    segment: i,
                };
            }
        }
        best
    }

    /// Advances `current_index` to the furthest waypoint at or behind arc
    /// length `s` and returns the increment.
    pub fn advance_to(&mut self, s: f64) -> usize {
        let mut k = self.current_index;
        while k + 1 < self.cum.len() && self.cum[k + 1] <= s {
            k += 1;
        }
        let delta = k - self.current_index;
        self.current_index = k;
        delta
    }

    /// Re-synchronises `current_index` with a point anywhere on the route,
    /// searching every segment. Used when placing the ego by hand.
    pub fn resync(&mut self, p: Vec2) {
        let mut best = (f64::INFINITY, 0usize, 0.0);
        for i in 0..self.points.len() - 1 {
            let (t, q) = Segment::new(self.points[i], self.points[i + 1]).project(p);
            let d = q.dist(p);
            if d < best.0 {
                best = (d, i, self.cum[i] + t * (self.cum[i + 1] - self.cum[i]));
            }
        }
        self.current_index = 0;
        self.advance_to(best.2);
    }

    /// Heading error of `heading` against the route tangent at `proj`.
    pub fn heading_error(&self, heading: f64, proj: &RouteProjection) -> f64 {
        wrap_angle(heading - proj.tangent)
    }
}
