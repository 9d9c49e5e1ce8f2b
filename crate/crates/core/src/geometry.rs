//! Planar geometry helpers: points, polylines and oriented rectangles.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

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

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n == 0.0 {
            self
        } else {
            self * (1.0 / n)
        }
    }

    /// Unit normal pointing to the right of the direction of travel.
    pub fn right_normal(self) -> Vec2 {
        Vec2::new(self.y, -self.x)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Rotates by `theta` radians counter-clockwise.
    pub fn rotate(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn lerp(self, o: Vec2, t: f64) -> Vec2 {
        self + (o - self) * t
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

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// Closest point on segment `a..b` to `p`, as `(parameter in [0, 1], distance)`.
pub fn project_on_segment(p: Vec2, a: Vec2, b: Vec2) -> (f64, f64) {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
    };
    (t, p.dist(a + ab * t))
}

/// Cumulative arc-length of a polyline, starting at zero.
pub fn cumulative_lengths(points: &[Vec2]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    for (i, p) in points.iter().enumerate() {
        if i > 0 {
            acc += p.dist(points[i - 1]);
        }
        cum.push(acc);
    }
    cum
}

/// Resamples a dense polyline so that consecutive points are evenly spaced and
/// no further apart than `max_spacing`. Endpoints are preserved.
pub fn resample(points: &[Vec2], max_spacing: f64) -> Vec<Vec2> {
    assert!(points.len() >= 2, "polyline needs two points");
    let cum = cumulative_lengths(points);
    let total = *cum.last().unwrap();
    let pieces = (total / max_spacing).ceil().max(1.0) as usize;
    let mut out = Vec::with_capacity(pieces + 1);
    let mut j = 0;
    for k in 0..=pieces {
        if k == pieces {
            out.push(*points.last().unwrap());
            break;
        }
        let s = total * k as f64 / pieces as f64;
        while j + 1 < cum.len() - 1 && cum[j + 1] < s {
            j += 1;
        }
        let span = cum[j + 1] - cum[j];
        let t = if span > 0.0 { (s - cum[j]) / span } else { 0.0 };
        out.push(points[j].lerp(points[j + 1], t));
    }
    out
}

/// Dense samples of a cubic Bezier curve.
pub fn cubic_bezier(p0: Vec2, p1: Vec2, p2: Vec2, p3: Vec2, samples: usize) -> Vec<Vec2> {
    (0..=samples)
        .map(|k| {
            let t = k as f64 / samples as f64;
            let u = 1.0 - t;
            p0 * (u * u * u) + p1 * (3.0 * u * u * t) + p2 * (3.0 * u * t * t) + p3 * (t * t * t)
        })
        .collect()
}

/// Dense samples of a circular arc, counter-clockwise from `from` to `to` radians.
pub fn ccw_arc(center: Vec2, radius: f64, from: f64, to: f64, samples: usize) -> Vec<Vec2> {
    let mut sweep = to - from;
    while sweep <= 0.0 {
        sweep += std::f64::consts::TAU;
    }
    (0..=samples)
        .map(|k| {
            let a = from + sweep * k as f64 / samples as f64;
            center + Vec2::from_angle(a) * radius
        })
        .collect()
}

/// Rectangle of the given length (along heading) and width, centered at `center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect {
    pub center: Vec2,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl OrientedRect {
    pub fn new(center: Vec2, heading: f64, length: f64, width: f64) -> Self {
        Self {
            center,
            heading,
            half_length: length / 2.0,
            half_width: width / 2.0,
        }
    }

    pub fn axes(&self) -> (Vec2, Vec2) {
        let u = Vec2::from_angle(self.heading);
        (u, Vec2::new(-u.y, u.x))
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let (u, v) = self.axes();
        let a = u * self.half_length;
        let b = v * self.half_width;
        let c = self.center;
        [c + a + b, c - a + b, c - a - b, c + a - b]
    }

    /// Radius of the circumscribed circle.
    pub fn bounding_radius(&self) -> f64 {
        self.half_length.hypot(self.half_width)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let (u, v) = self.axes();
        let d = p - self.center;
        d.dot(u).abs() <= self.half_length && d.dot(v).abs() <= self.half_width
    }

    /// Separating-axis test. Touching edges do not count as overlap.
    pub fn overlaps(&self, other: &OrientedRect) -> bool {
        let reach = self.bounding_radius() + other.bounding_radius();
        let d = other.center - self.center;
        if d.dot(d) >= reach * reach {
            return false;
        }
        let (u1, v1) = self.axes();
        let (u2, v2) = other.axes();
        for axis in [u1, v1, u2, v2] {
            let r1 = self.half_length * u1.dot(axis).abs() + self.half_width * v1.dot(axis).abs();
            let r2 = other.half_length * u2.dot(axis).abs() + other.half_width * v2.dot(axis).abs();
            if d.dot(axis).abs() >= r1 + r2 {
                return false;
            }
        }
        true
    }
}
