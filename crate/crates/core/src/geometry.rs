//! Planar geometry shared by the simulator, affordance extraction and the
//! BEV rasterizer. Everything is in meters / radians in the world frame.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Counter-clockwise normal.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }

    pub fn rotate(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(p: [f64; 2]) -> Self {
        Vec2::new(p[0], p[1])
    }
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    let a = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if a <= -PI {
        a + 2.0 * PI
    } else {
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub const fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn forward(&self) -> Vec2 {
        Vec2::from_angle(self.heading)
    }
}

/// A closed segment between two points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    pub const fn new(a: Vec2, b: Vec2) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        self.a.dist(self.b)
    }

    pub fn midpoint(&self) -> Vec2 {
        (self.a + self.b) * 0.5
    }

    /// Closest point parameter `t ∈ [0, 1]` and the closest point itself.
    pub fn project(&self, p: Vec2) -> (f64, Vec2) {
        let d = self.b - self.a;
        let len2 = d.dot(d);
        if len2 == 0.0 {
            return (0.0, self.a);
        }
        let t = ((p - self.a).dot(d) / len2).clamp(0.0, 1.0);
        (t, self.a + d * t)
    }

    pub fn distance_to(&self, p: Vec2) -> f64 {
        self.project(p).1.dist(p)
    }

    /// Proper-or-touching intersection test between two closed segments.
    pub fn intersects(&self, o: &Segment) -> bool {
        let d1 = orient(o.a, o.b, self.a);
        let d2 = orient(o.a, o.b, self.b);
        let d3 = orient(self.a, self.b, o.a);
        let d4 = orient(self.a, self.b, o.b);
        if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
            && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
        {
            return true;
        }
        (d1 == 0.0 && on_segment(o.a, o.b, self.a))
            || (d2 == 0.0 && on_segment(o.a, o.b, self.b))
            || (d3 == 0.0 && on_segment(self.a, self.b, o.a))
            || (d4 == 0.0 && on_segment(self.a, self.b, o.b))
    }

    /// Parameter along `self` where it crosses `o`, if the two cross.
    pub fn crossing_param(&self, o: &Segment) -> Option<f64> {
        let r = self.b - self.a;
        let s = o.b - o.a;
        let denom = r.cross(s);
        if denom == 0.0 {
            return None;
        }
        let qp = o.a - self.a;
        let t = qp.cross(s) / denom;
        let u = qp.cross(r) / denom;
        if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
            Some(t)
        } else {
            None
        }
    }
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(a: Vec2, b: Vec2, p: Vec2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Oriented rectangle: center pose plus full length (along heading) and width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedRect {
    pub center: Vec2,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedRect {
    pub fn new(pose: Pose, length: f64, width: f64) -> Self {
        Self {
            center: pose.position(),
            heading: pose.heading,
            length,
            width,
        }
    }

    fn axes(&self) -> (Vec2, Vec2) {
        let f = Vec2::from_angle(self.heading);
        (f, f.perp())
    }

    /// Corners in counter-clockwise order starting front-left.
    pub fn corners(&self) -> [Vec2; 4] {
        let (f, l) = self.axes();
        let hf = f * (self.length * 0.5);
        let hl = l * (self.width * 0.5);
        [
            self.center + hf + hl,
            self.center - hf + hl,
            self.center - hf - hl,
            self.center + hf - hl,
        ]
    }

    pub fn edges(&self) -> [Segment; 4] {
        let c = self.corners();
        [
            Segment::new(c[0], c[1]),
            Segment::new(c[1], c[2]),
            Segment::new(c[2], c[3]),
            Segment::new(c[3], c[0]),
        ]
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let (f, l) = self.axes();
        let d = p - self.center;
        d.dot(f).abs() <= self.length * 0.5 && d.dot(l).abs() <= self.width * 0.5
    }

    /// Interval of the rectangle projected on a unit axis.
    fn project(&self, axis: Vec2) -> (f64, f64) {
        let (f, l) = self.axes();
        let c = self.center.dot(axis);
        let r = 0.5 * self.length * f.dot(axis).abs() + 0.5 * self.width * l.dot(axis).abs();
        (c - r, c + r)
    }

    /// Separating-axis overlap test (touching counts as overlap).
    pub fn overlaps(&self, o: &OrientedRect) -> bool {
        let (f1, l1) = self.axes();
        let (f2, l2) = o.axes();
        [f1, l1, f2, l2].into_iter().all(|axis| {
            let (a0, a1) = self.project(axis);
            let (b0, b1) = o.project(axis);
            a0 <= b1 && b0 <= a1
        })
    }

    /// Separating-axis test against a segment.
    pub fn intersects_segment(&self, s: &Segment) -> bool {
        let (f, l) = self.axes();
        let d = s.b - s.a;
        let mut axes = vec![f, l];
        if d.norm() > 0.0 {
            axes.push(d.perp().normalized());
        }
        axes.into_iter().all(|axis| {
            let (r0, r1) = self.project(axis);
            let p0 = s.a.dot(axis);
            let p1 = s.b.dot(axis);
            p0.min(p1) <= r1 && r0 <= p0.max(p1)
        })
    }
}

/// Polyline helper: cumulative arc lengths, with `cum[0] = 0`.
pub fn cumulative_lengths(points: &[Vec2]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    cum.push(0.0);
    for w in points.windows(2) {
        acc += w[0].dist(w[1]);
        cum.push(acc);
    }
    cum
}

/// Point and tangent heading at arc length `s` along a polyline (clamped).
pub fn point_at(points: &[Vec2], cum: &[f64], s: f64) -> (Vec2, f64) {
    let n = points.len();
    let s = s.clamp(0.0, cum[n - 1]);
    let i = match cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
        Ok(i) => i.min(n - 2),
        Err(i) => (i - 1).min(n - 2),
    };
    let seg = cum[i + 1] - cum[i];
    let t = if seg > 0.0 { (s - cum[i]) / seg } else { 0.0 };
    let d = points[i + 1] - points[i];
    (points[i] + d * t, d.angle())
}
