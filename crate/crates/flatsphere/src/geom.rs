//! Planar primitives: points, orientation-preserving isometries, segment predicates.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

pub const TAU: f64 = 2.0 * PI;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(a: f64) -> Self {
        Vec2::new(a.cos(), a.sin())
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

    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn unit(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }

    /// Counterclockwise quarter turn.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotate(self, a: f64) -> Vec2 {
        let (s, c) = a.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
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
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Rotation followed by translation: `p ↦ R(p) + t`, stored as a unit complex number.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Iso {
    pub c: f64,
    pub s: f64,
    pub t: Vec2,
}

impl Iso {
    pub const IDENTITY: Iso = Iso { c: 1.0, s: 0.0, t: Vec2::ZERO };

    pub fn rotation(a: f64) -> Iso {
        let (s, c) = a.sin_cos();
        Iso { c, s, t: Vec2::ZERO }
    }

    pub fn translation(t: Vec2) -> Iso {
        Iso { c: 1.0, s: 0.0, t }
    }

    /// Rotation by `a` about `center`.
    pub fn rotation_about(center: Vec2, a: f64) -> Iso {
        let r = Iso::rotation(a);
        Iso { t: center - r.apply_vec(center), ..r }
    }

    /// The isometry sending segment `a0→a1` onto `b0→b1` (lengths assumed equal).
    /// Midpoints are matched exactly so that length mismatch is split evenly.
    pub fn segment_map(a0: Vec2, a1: Vec2, b0: Vec2, b1: Vec2) -> Iso {
        let da = (a1 - a0).unit();
        let db = (b1 - b0).unit();
        let c = da.dot(db);
        let s = da.cross(db);
        let n = c.hypot(s);
        let rot = Iso { c: c / n, s: s / n, t: Vec2::ZERO };
        let ma = (a0 + a1) * 0.5;
        let mb = (b0 + b1) * 0.5;
        Iso { t: mb - rot.apply_vec(ma), ..rot }
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        self.apply_vec(p) + self.t
    }

    pub fn apply_vec(&self, v: Vec2) -> Vec2 {
        Vec2::new(self.c * v.x - self.s * v.y, self.s * v.x + self.c * v.y)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Iso) -> Iso {
        let c = self.c * other.c - self.s * other.s;
        let s = self.s * other.c + self.c * other.s;
        Iso { c, s, t: self.apply(other.t) }
    }

    pub fn inverse(&self) -> Iso {
        let inv = Iso { c: self.c, s: -self.s, t: Vec2::ZERO };
        Iso { t: -inv.apply_vec(self.t), ..inv }
    }

    pub fn angle(&self) -> f64 {
        self.s.atan2(self.c)
    }

    /// Re-normalise the rotation part; long compositions drift off the unit circle.
    pub fn normalized(&self) -> Iso {
        let n = self.c.hypot(self.s);
        Iso { c: self.c / n, s: self.s / n, t: self.t }
    }
}

/// Twice the signed area of `abc`; positive when counterclockwise.
pub fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

pub fn triangle_area(p: &[Vec2; 3]) -> f64 {
    0.5 * orient(p[0], p[1], p[2])
}

/// Interior angle at vertex `i` of a triangle.
pub fn corner_angle(p: &[Vec2; 3], i: usize) -> f64 {
    let a = p[i];
    let u = p[(i + 1) % 3] - a;
    let v = p[(i + 2) % 3] - a;
    u.cross(v).atan2(u.dot(v)).abs()
}

pub fn circumradius(p: &[Vec2; 3]) -> f64 {
    let a = p[0].dist(p[1]);
    let b = p[1].dist(p[2]);
    let c = p[2].dist(p[0]);
    a * b * c / (4.0 * triangle_area(p).abs())
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let l2 = ab.norm2();
    if l2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / l2).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Proper crossing test for two closed segments; touching counts as crossing.
pub fn segments_intersect(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |p: Vec2, q: Vec2, r: Vec2, o: f64| {
        o == 0.0 && r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    };
    on(c, d, a, d1) || on(c, d, b, d2) || on(a, b, c, d3) || on(a, b, d, d4)
}

pub fn segment_distance(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

/// Reduce an angle into `[0, period)`.
pub fn wrap(a: f64, period: f64) -> f64 {
    let r = a.rem_euclid(period);
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Signed angle from `u` to `v` in `(-π, π]`.
pub fn signed_angle(u: Vec2, v: Vec2) -> f64 {
    u.cross(v).atan2(u.dot(v))
}
