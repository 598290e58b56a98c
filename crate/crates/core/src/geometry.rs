//! Planar geometry primitives shared by the ray tracer and the positioning code.
//!
//! Bearings follow the navigation convention: degrees clockwise from the +y
//! axis ("north"), so the unit vector of a bearing `θ` is `(sin θ, cos θ)`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Determinant threshold below which two normalized lines count as parallel.
pub const EPS_PARALLEL: f64 = 1e-9;

/// Relative tolerance used by the segment predicates.
const EPS_PARAM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }

    pub fn distance(self, other: Point2) -> f64 {
        (other - self).norm()
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Point2 {
        Point2::new(-self.y, self.x)
    }

    pub fn normalized(self) -> Option<Point2> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

impl fmt::Display for Point2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Angle in degrees clockwise from +y, always in `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
pub struct Bearing(f64);

impl Bearing {
    pub fn from_degrees(deg: f64) -> Self {
        let mut v = deg.rem_euclid(360.0);
        // rem_euclid of a tiny negative value rounds up to exactly 360.
        if v >= 360.0 {
            v = 0.0;
        }
        Bearing(v)
    }

    pub fn from_radians(rad: f64) -> Self {
        Self::from_degrees(rad.to_degrees())
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    pub fn radians(self) -> f64 {
        self.0.to_radians()
    }

    /// `(sin θ, cos θ)`.
    pub fn unit(self) -> Point2 {
        let (s, c) = self.radians().sin_cos();
        Point2::new(s, c)
    }

    pub fn opposite(self) -> Bearing {
        Bearing::from_degrees(self.0 + 180.0)
    }

    /// Smallest absolute angular difference in degrees, in `[0, 180]`.
    pub fn separation(self, other: Bearing) -> f64 {
        let d = (self.0 - other.0).rem_euclid(360.0);
        d.min(360.0 - d)
    }
}

impl fmt::Display for Bearing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}°", self.0)
    }
}

/// Bearing of the ray from `from` toward `to`.
pub fn bearing_from_to(from: Point2, to: Point2) -> Result<Bearing> {
    let d = to - from;
    if d.x == 0.0 && d.y == 0.0 {
        return Err(Error::DegenerateGeometry(format!(
            "bearing between coincident points {from}"
        )));
    }
    Ok(Bearing::from_radians(d.x.atan2(d.y)))
}

/// A closed line segment with distinct endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point2,
    pub b: Point2,
}

impl Segment {
    pub fn new(a: Point2, b: Point2) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::DegenerateGeometry(format!(
                "non-finite segment endpoint {a} / {b}"
            )));
        }
        if a == b {
            return Err(Error::DegenerateGeometry(format!(
                "zero-length segment at {a}"
            )));
        }
        Ok(Self { a, b })
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }

    pub fn direction(&self) -> Point2 {
        self.b - self.a
    }

    /// Unit normal (left of `a → b`).
    pub fn normal(&self) -> Result<Point2> {
        self.direction()
            .perp()
            .normalized()
            .ok_or_else(|| Error::DegenerateGeometry("zero-length segment".into()))
    }

    pub fn point_at(&self, t: f64) -> Point2 {
        self.a + self.direction() * t
    }

    /// Signed distance of `p` from the carrier line, positive on the normal side.
    pub fn signed_distance(&self, p: Point2) -> Result<f64> {
        Ok((p - self.a).dot(self.normal()?))
    }

    pub fn carrier(&self) -> Result<Line> {
        Line::through(self.a, self.b)
    }
}

/// Reflection of `p` across the infinite line carrying `s`.
pub fn mirror_point(p: Point2, s: &Segment) -> Result<Point2> {
    let n = s.normal()?;
    let dist = (p - s.a).dot(n);
    Ok(p - n * (2.0 * dist))
}

/// Intersection of two closed segments.
///
/// Returns `None` when the segments are disjoint, the unique common point when
/// there is exactly one, and `AmbiguousIntersection` for collinear overlap.
pub fn segment_intersection(s1: &Segment, s2: &Segment) -> Result<Option<Point2>> {
    let r = s1.direction();
    let s = s2.direction();
    let qp = s2.a - s1.a;
    let rn = r.norm();
    let sn = s.norm();
    if rn == 0.0 || sn == 0.0 {
        return Err(Error::DegenerateGeometry("zero-length segment".into()));
    }
    let denom = r.cross(s);

    if denom.abs() <= EPS_PARAM * rn * sn {
        // Parallel: only collinear configurations can touch.
        let scale = rn * qp.norm().max(sn);
        if qp.cross(r).abs() > EPS_PARAM * scale.max(f64::MIN_POSITIVE) {
            return Ok(None);
        }
        let rr = rn * rn;
        let t0 = qp.dot(r) / rr;
        let t1 = t0 + s.dot(r) / rr;
        let lo = t0.min(t1).max(0.0);
        let hi = t0.max(t1).min(1.0);
        if lo > hi + EPS_PARAM {
            return Ok(None);
        }
        if (hi - lo) * rn <= EPS_PARAM * rn.max(1.0) {
            return Ok(Some(s1.point_at(lo)));
        }
        return Err(Error::AmbiguousIntersection);
    }

    let t = qp.cross(s) / denom;
    let u = qp.cross(r) / denom;
    let range = -EPS_PARAM..=1.0 + EPS_PARAM;
    if range.contains(&t) && range.contains(&u) {
        Ok(Some(s1.point_at(t.clamp(0.0, 1.0))))
    } else {
        Ok(None)
    }
}

/// Line `n_x·x + n_y·y = c` with a unit normal whose first nonzero component is positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    nx: f64,
    ny: f64,
    c: f64,
}

impl Line {
    /// Builds and normalizes a line from arbitrary (nonzero) coefficients.
    pub fn new(nx: f64, ny: f64, c: f64) -> Result<Self> {
        if !(nx.is_finite() && ny.is_finite() && c.is_finite()) {
            return Err(Error::DegenerateGeometry("non-finite line coefficients".into()));
        }
        let norm = nx.hypot(ny);
        if norm == 0.0 {
            return Err(Error::DegenerateGeometry("line normal is zero".into()));
        }
        let sign = if nx > 0.0 || (nx == 0.0 && ny > 0.0) { 1.0 } else { -1.0 };
        let k = sign / norm;
        Ok(Self {
            nx: nx * k,
            ny: ny * k,
            c: c * k,
        })
    }

    pub fn through(p: Point2, q: Point2) -> Result<Self> {
        if p == q {
            return Err(Error::DegenerateGeometry(format!(
                "line through coincident points {p}"
            )));
        }
        let n = (q - p).perp();
        Self::new(n.x, n.y, n.dot(p))
    }

    pub fn coefficients(&self) -> (f64, f64, f64) {
        (self.nx, self.ny, self.c)
    }

    pub fn normal(&self) -> Point2 {
        Point2::new(self.nx, self.ny)
    }

    /// Signed distance from `p` to the line.
    pub fn distance(&self, p: Point2) -> f64 {
        self.nx * p.x + self.ny * p.y - self.c
    }

    /// `Some((slope, intercept))` unless the line is vertical.
    pub fn slope_intercept(&self) -> Option<(f64, f64)> {
        (self.ny != 0.0).then(|| (-self.nx / self.ny, self.c / self.ny))
    }

    pub fn approx_eq(&self, other: &Line, tol: f64) -> bool {
        (self.nx - other.nx).abs() <= tol
            && (self.ny - other.ny).abs() <= tol
            && (self.c - other.c).abs() <= tol * self.c.abs().max(1.0)
    }

    /// Determinant of the 2×2 system formed with `other`, i.e. the sine of the
    /// angle between the lines.
    pub fn det(&self, other: &Line) -> f64 {
        self.nx * other.ny - self.ny * other.nx
    }
}

/// Unique intersection point of two lines.
pub fn intersect_lines(l1: &Line, l2: &Line) -> Result<Point2> {
    let det = l1.det(l2);
    if det.abs() < EPS_PARALLEL {
        return Err(Error::ParallelLines { det });
    }
    let x = (l1.c * l2.ny - l2.c * l1.ny) / det;
    let y = (l1.nx * l2.c - l2.nx * l1.c) / det;
    Ok(Point2::new(x, y))
}
