//! Test-only fixtures and independent oracles.
#![allow(dead_code)]

use std::f64::consts::PI;

use flatsphere::billiards::Polygon;
use flatsphere::fixtures::{doubled_polygon_surface, random_convex_polygon};
use flatsphere::geom::Vec2;
use flatsphere::surface::{Complex, FlatConeSurface};
use flatsphere::tracer::{trace, Start, SurfacePoint, TraceError, Trajectory};
use num_bigint::BigInt;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `count` doubled random convex polygons with 3, 4, 5, 6, 3, ... vertices.
pub fn random_doubles(rng: &mut ChaCha8Rng, count: usize) -> Vec<(Polygon, FlatConeSurface)> {
    (0..count)
        .map(|i| {
            let p = random_convex_polygon(rng, 3 + i % 4);
            let s = doubled_polygon_surface(&p);
            (p, s)
        })
        .collect()
}

pub fn random_point(rng: &mut ChaCha8Rng, c: &Complex) -> SurfacePoint {
    let f = rng.gen_range(0..c.num_faces());
    let p = c.points(f);
    // Keep away from the sides so the start is unambiguous.
    let mut w: [f64; 3] = [rng.gen_range(0.05..1.0), rng.gen_range(0.05..1.0), rng.gen_range(0.05..1.0)];
    let s: f64 = w.iter().sum();
    for x in &mut w {
        *x /= s;
    }
    let q = Vec2::new(
        w[0] * p[0].x + w[1] * p[1].x + w[2] * p[2].x,
        w[0] * p[0].y + w[1] * p[1].y + w[2] * p[2].y,
    );
    SurfacePoint { face: f, point: q }
}

pub fn random_trajectory(rng: &mut ChaCha8Rng, c: &Complex, budget: f64) -> Result<Trajectory, TraceError> {
    let sp = random_point(rng, c);
    let dir = Vec2::from_angle(rng.gen_range(0.0..2.0 * PI));
    trace(c, Start::Point(sp), dir, budget)
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Transverse self-intersections by checking every pair of threads in the same face.
/// Consecutive threads share an endpoint on an edge and are skipped; crossings exactly on
/// an edge are not seen, which is a null event for random trajectories.
pub fn brute_force_iota(traj: &Trajectory) -> usize {
    let th = &traj.threads;
    let mut count = 0;
    for i in 0..th.len() {
        for j in i + 2..th.len() {
            if th[i].face != th[j].face {
                continue;
            }
            let (a, b, c, d) = (th[i].entry, th[i].exit, th[j].entry, th[j].exit);
            let eps = 1e-13;
            let (o1, o2) = (orient(a, b, c), orient(a, b, d));
            let (o3, o4) = (orient(c, d, a), orient(c, d, b));
            if o1 * o2 < -eps * eps && o3 * o4 < -eps * eps {
                count += 1;
            }
        }
    }
    count
}

/// Oriented saddle connection found by the naive search.
#[derive(Clone, Debug, PartialEq)]
pub struct NaiveConnection {
    pub start: usize,
    pub end: usize,
    pub length: f64,
    pub crossings: usize,
}

/// Isometry taking `a0 → b0` and `a1 → b1` (same distances), as a closure.
fn rigid(a0: Vec2, a1: Vec2, b0: Vec2, b1: Vec2) -> impl Fn(Vec2) -> Vec2 {
    let u = a1 - a0;
    let v = b1 - b0;
    let ang = v.y.atan2(v.x) - u.y.atan2(u.x);
    let (s, c) = ang.sin_cos();
    move |p: Vec2| {
        let q = p - a0;
        b0 + Vec2::new(c * q.x - s * q.y, s * q.x + c * q.y)
    }
}

/// Every oriented saddle connection of length at most `r` whose corridor crosses at most
/// `depth` edges, by walking every edge sequence without any geometric pruning.
/// Triangulation edges are included once per direction.
pub fn naive_saddle_connections(c: &Complex, r: f64, depth: usize) -> Vec<NaiveConnection> {
    let mut out = Vec::new();
    for f in 0..c.num_faces() {
        let t = c.triangle(f);
        for e in 0..3 {
            let (a, b) = (t.vertices[e], t.vertices[(e + 1) % 3]);
            if a.dist(b) <= r {
                out.push(NaiveConnection { start: t.labels[e], end: t.labels[(e + 1) % 3], length: a.dist(b), crossings: 0 });
            }
        }
    }
    for f0 in 0..c.num_faces() {
        let t0 = c.triangle(f0);
        for e0 in 0..3 {
            let start = t0.vertices[(e0 + 2) % 3];
            let label = t0.labels[(e0 + 2) % 3];
            let mut crossed = Vec::new();
            walk(c, f0, t0.vertices, e0, start, label, r, depth, &mut crossed, &mut out);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn walk(
    c: &Complex,
    f: usize,
    placed: [Vec2; 3],
    exit: usize,
    start: Vec2,
    label: usize,
    r: f64,
    depth: usize,
    crossed: &mut Vec<(Vec2, Vec2)>,
    out: &mut Vec<NaiveConnection>,
) {
    if crossed.len() == depth {
        return;
    }
    let Some(h) = c.neighbor(f, exit) else { return };
    let (a, b) = (placed[exit], placed[(exit + 1) % 3]);
    let g = c.triangle(h.face);
    // Edge `h.edge` of g runs opposite to edge `exit` of f.
    let map = rigid(g.vertices[(h.edge + 1) % 3], g.vertices[h.edge], a, b);
    let gp = [map(g.vertices[0]), map(g.vertices[1]), map(g.vertices[2])];
    crossed.push((a, b));
    let apex = (h.edge + 2) % 3;
    let q = gp[apex];
    if start.dist(q) <= r && crossed.iter().all(|&(x, y)| crosses_inside(start, q, x, y)) {
        out.push(NaiveConnection { start: label, end: g.labels[apex], length: start.dist(q), crossings: crossed.len() });
    }
    for k in 1..3 {
        walk(c, h.face, gp, (h.edge + k) % 3, start, label, r, depth, crossed, out);
    }
    crossed.pop();
}

/// Segment `p q` passes through the open segment `x y`.
fn crosses_inside(p: Vec2, q: Vec2, x: Vec2, y: Vec2) -> bool {
    let d = q - p;
    let e = y - x;
    let den = d.x * e.y - d.y * e.x;
    if den.abs() < 1e-15 {
        return false;
    }
    let w = x - p;
    let s = (w.x * e.y - w.y * e.x) / den;
    let t = (w.x * d.y - w.y * d.x) / den;
    let tol = 1e-10;
    s > tol && s < 1.0 - tol && t > tol && t < 1.0 - tol
}

/// Oriented generalized diagonals of the unit equilateral triangle, from its tiling of the
/// plane by reflections: from a corner, the diagonals are the segments to lattice points
/// `a(1,0) + b(1/2, √3/2)` with `a, b ≥ 0` coprime. Returns `(start, end, length)`.
pub fn equilateral_oriented_diagonals(r: f64) -> Vec<(usize, usize, f64)> {
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let mut out = Vec::new();
    let m = (2.0 * r).ceil() as u64 + 2;
    for i in 0..3 {
        for a in 0..=m {
            for b in 0..=m {
                if gcd(a, b) != 1 {
                    continue;
                }
                let len = ((a * a + a * b + b * b) as f64).sqrt();
                if len <= r {
                    // Lattice points are 3-coloured by the vertex of the triangle they carry.
                    out.push((i, ((i as u64 + a + 2 * b) % 3) as usize, len));
                }
            }
        }
    }
    out
}

/// Decimal fixed point with 90 fractional digits.
#[derive(Clone, Debug)]
pub struct Fixed(BigInt);

const DIGITS: usize = 90;

fn scale() -> BigInt {
    BigInt::from(10u32).pow(DIGITS as u32)
}

impl Fixed {
    pub fn int(n: i64) -> Fixed {
        Fixed(BigInt::from(n) * scale())
    }

    pub fn ratio(p: i64, q: i64) -> Fixed {
        Fixed(BigInt::from(p) * scale() / BigInt::from(q))
    }

    pub fn pi() -> Fixed {
        let s = "3.141592653589793238462643383279502884197169399375105820974944592307816406286208998628034825342117067982148";
        let digits: String = s.replace('.', "")[..DIGITS + 1].to_string();
        Fixed(digits.parse().unwrap())
    }

    pub fn mul(&self, o: &Fixed) -> Fixed {
        Fixed(&self.0 * &o.0 / scale())
    }

    pub fn div(&self, o: &Fixed) -> Fixed {
        Fixed(&self.0 * scale() / &o.0)
    }

    pub fn add(&self, o: &Fixed) -> Fixed {
        Fixed(&self.0 + &o.0)
    }

    pub fn sqrt(&self) -> Fixed {
        Fixed((&self.0 * scale()).sqrt())
    }

    pub fn powi(&self, k: u32) -> Fixed {
        (0..k).fold(Fixed::int(1), |acc, _| acc.mul(self))
    }

    pub fn to_f64(&self) -> f64 {
        let s = self.0.to_string();
        let (neg, s) = s.strip_prefix('-').map(|t| (true, t.to_string())).unwrap_or((false, s));
        let padded = format!("{s:0>width$}", width = DIGITS + 1);
        let (ip, fp) = padded.split_at(padded.len() - DIGITS);
        let x: f64 = format!("{ip}.{fp}").parse().unwrap();
        if neg {
            -x
        } else {
            x
        }
    }
}

/// `(c₁, c₂, a₁, a₂)` for `n` points and gap `p/q`, in exact fixed point.
pub fn constants_hp(n: i64, p: i64, q: i64) -> [f64; 4] {
    let d = Fixed::ratio(p, q);
    let nn = Fixed::int(n);
    let e = (2 * n - 4) as u32;
    let two = Fixed::int(2);
    let c1 = Fixed::int(9)
        .mul(&two.sqrt())
        .mul(&d)
        .div(&Fixed::int(8 * n * n))
        .mul(&d.mul(&d).div(&Fixed::int(6 * n)).powi(e));
    let c2 = Fixed::ratio(81, 4).mul(&Fixed::ratio(1, 54 * n).powi(e));
    let sp = Fixed::pi().sqrt();
    let d32 = d.mul(&d.sqrt());
    let a1 = Fixed::int(20 * n * (n - 1))
        .div(&sp)
        .mul(&two.div(&d).add(&Fixed::int(1).div(&two.sqrt().mul(&d32))));
    let a2 = Fixed::int(40)
        .mul(&nn)
        .div(&d.mul(&sp))
        .add(&Fixed::int(20).mul(&nn).div(&d32.mul(&two.mul(&Fixed::pi()).sqrt())));
    [c1.to_f64(), c2.to_f64(), a1.to_f64(), a2.to_f64()]
}

/// `σ_1..σ_{n−3}` for `n` points and gap `p/q`.
pub fn sigma_hp(n: i64, p: i64, q: i64) -> Vec<f64> {
    let d = Fixed::ratio(p, q);
    let d2 = d.mul(&d);
    (1..=n - 3)
        .map(|k| d2.div(&Fixed::int(4 * n * n)).mul(&d2.div(&Fixed::int(6 * n)).powi((n - 2 - k) as u32)).to_f64())
        .collect()
}

/// `m₀` for curvatures given as exact fractions `(p, q)`, genus 0.
pub fn m0_exact(n: i64, curvatures: &[(i64, i64)]) -> i64 {
    // min(1 − k) = min((q − p)/q); ceil(1 / (2 (q − p)/q)) = ceil(q / (2(q − p))).
    let ceil = curvatures
        .iter()
        .map(|&(p, q)| {
            let (num, den) = (q, 2 * (q - p));
            (num + den - 1) / den
        })
        .max()
        .unwrap();
    6 * (2 * n - 4) * ceil
}

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs())
}
