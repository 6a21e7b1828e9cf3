//! Builders for the worked example families and for randomized test surfaces.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::billiards::{double_polygon, Polygon};
use crate::geom::{Iso, Vec2};
use crate::surface::{build_from_triangles, EuclideanTriangle, FlatConeSurface, HalfEdge};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FixtureError {
    #[error("parameter out of range: {0}")]
    ParamOutOfRange(String),
}

pub fn unit_equilateral() -> Polygon {
    Polygon::new(vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.5, 3f64.sqrt() / 2.0)]).unwrap()
}

/// Angles π/6, π/3, π/2 at vertices 0, 1, 2; unit hypotenuse.
pub fn thirty_sixty_ninety() -> Polygon {
    Polygon::new(vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.75, 3f64.sqrt() / 4.0)]).unwrap()
}

pub fn doubled_polygon_surface(p: &Polygon) -> FlatConeSurface {
    double_polygon(p).expect("simple polygon").surface
}

pub fn doubled_equilateral() -> FlatConeSurface {
    doubled_polygon_surface(&unit_equilateral())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ExampleFamily {
    /// Equilateral triangle with a scaled copy glued across a cut corner, doubled.
    FagnanoCut { t: f64 },
    /// Doubled 30-60-90 triangle; `x` is the distance of the base point from `x1`.
    B2Witness { x: f64 },
    /// Scaled equilateral triangle glued on a truncated isosceles triangle.
    C2Witness { t: f64 },
    /// Trapezoid-plus-triangle with apex angle θ and the chord `γ_m`.
    DeltaWitness { theta: f64, m: usize },
}

/// Where to start the designated trajectory. With `corner = Some(i)` the trajectory
/// leaves vertex `i` of `face`; otherwise it starts at `point`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignatedTrajectory {
    pub face: usize,
    pub corner: Option<usize>,
    pub point: Vec2,
    pub direction: Vec2,
    pub budget: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpectedQuantities {
    pub length: f64,
    pub iota: usize,
    pub area: f64,
    pub closed: bool,
}

#[derive(Clone, Debug)]
pub struct Example {
    pub family: ExampleFamily,
    pub surface: FlatConeSurface,
    pub trajectory: DesignatedTrajectory,
    /// The closed-form values attached to the family.
    pub expected: ExpectedQuantities,
}

pub fn build_example(family: ExampleFamily) -> Result<Example, FixtureError> {
    match family {
        ExampleFamily::FagnanoCut { t } => fagnano_cut(t),
        ExampleFamily::B2Witness { x } => b2_witness(x),
        ExampleFamily::C2Witness { t } => c2_witness(t),
        ExampleFamily::DeltaWitness { theta, m } => delta_witness(theta, m),
    }
}

fn in_open_unit(name: &str, v: f64) -> Result<(), FixtureError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(FixtureError::ParamOutOfRange(format!("{name} = {v} must lie in (0, 1)")))
    }
}

/// Non-convex polygon `P'_t` doubled. The designated trajectory is the lift of the
/// Fagnano path of the small triangle, a closed geodesic of length `3t`.
pub fn fagnano_cut(t: f64) -> Result<Example, FixtureError> {
    in_open_unit("t", t)?;
    let h = 3f64.sqrt() / 2.0;
    let c = t / 3.0;
    let a = Vec2::new(c, 0.0);
    let b = Vec2::new(c * 0.5, c * h);
    let m = (a + b) * 0.5;
    let flip = Iso::rotation_about(m, PI);
    let y2 = Vec2::new(t, 0.0);
    let y3 = Vec2::new(t * 0.5, t * h);
    let poly = Polygon::new(vec![
        a,
        Vec2::new(1.0, 0.0),
        Vec2::new(0.5, h),
        b,
        flip.apply(y2),
        flip.apply(y3),
    ])
    .expect("cut polygon is simple");
    let d = double_polygon(&poly).expect("double");
    // Fagnano path of the small triangle, moved into place.
    let m12 = flip.apply(Vec2::new(t * 0.5, 0.0));
    let m23 = flip.apply((y2 + y3) * 0.5);
    let start = (m12 + m23) * 0.5;
    let face = locate_copy_a(&d.surface, d.triangles.len(), start);
    let area = d.surface.area();
    Ok(Example {
        family: ExampleFamily::FagnanoCut { t },
        trajectory: DesignatedTrajectory {
            face,
            corner: None,
            point: start,
            direction: (m23 - m12).unit(),
            budget: 3.0 * t,
        },
        expected: ExpectedQuantities { length: 3.0 * t, iota: 3, area, closed: true },
        surface: d.surface,
    })
}

/// Closed-form area stated for the fagnano-cut family.
pub fn fagnano_cut_stated_area(t: f64) -> f64 {
    3f64.sqrt() / 2.0 - 7.0 * 3f64.sqrt() / 18.0 * t * t
}

fn locate_copy_a(s: &FlatConeSurface, t: usize, p: Vec2) -> usize {
    (0..t).find(|&f| s.contains(f, p)).expect("point lies in the polygon")
}

/// The doubled 30-60-90 triangle unfolded as an equilateral triangle `x1 x2 x2'` split
/// along the median `x1 x3`. `γ_x` starts at distance `x` from `x1` on `x1 x2`.
pub fn b2_witness(x: f64) -> Result<Example, FixtureError> {
    in_open_unit("x", x)?;
    let s = b2_surface();
    let r3 = 3f64.sqrt();
    Ok(Example {
        family: ExampleFamily::B2Witness { x },
        trajectory: DesignatedTrajectory {
            face: 0,
            corner: None,
            point: Vec2::new(x, 0.0),
            direction: Vec2::new(-r3 / 2.0, 0.5),
            budget: r3 * x,
        },
        expected: ExpectedQuantities { length: r3 * x, iota: 1, area: s.area(), closed: false },
        surface: s,
    })
}

pub fn b2_surface() -> FlatConeSurface {
    let r3 = 3f64.sqrt();
    let x1 = Vec2::new(0.0, 0.0);
    let x2 = Vec2::new(1.0, 0.0);
    let x2p = Vec2::new(0.5, r3 / 2.0);
    let x3 = (x2 + x2p) * 0.5;
    let tris = vec![
        EuclideanTriangle::new(0, [x1, x2, x3], [0, 1, 2]),
        EuclideanTriangle::new(1, [x1, x3, x2p], [0, 2, 1]),
    ];
    let g = [
        (HalfEdge::new(0, 2), HalfEdge::new(1, 0)),
        (HalfEdge::new(0, 0), HalfEdge::new(1, 2)),
        (HalfEdge::new(0, 1), HalfEdge::new(1, 1)),
    ];
    build_from_triangles(tris, &g).expect("b2 surface")
}

/// Labels: 0 = x1, 1 = x2 ~ x2', 2 = y2 ~ y2', 3 = y3.
pub fn c2_witness(t: f64) -> Result<Example, FixtureError> {
    in_open_unit("t", t)?;
    let r3 = 3f64.sqrt();
    let hgt = 0.5 / (PI / 12.0).tan();
    let top = hgt * (1.0 - t);
    let x1 = Vec2::new(0.0, top + r3 / 2.0 * t);
    let x2 = Vec2::new(-t / 2.0, top);
    let x2p = Vec2::new(t / 2.0, top);
    let y2 = Vec2::new(-0.5, 0.0);
    let y3 = Vec2::new(0.0, 0.0);
    let y2p = Vec2::new(0.5, 0.0);
    let tris = vec![
        EuclideanTriangle::new(0, [x1, x2, x2p], [0, 1, 1]),
        EuclideanTriangle::new(1, [x2, y2, y3], [1, 2, 3]),
        EuclideanTriangle::new(2, [x2, y3, x2p], [1, 3, 1]),
        EuclideanTriangle::new(3, [x2p, y3, y2p], [1, 3, 2]),
    ];
    let g = [
        (HalfEdge::new(0, 0), HalfEdge::new(0, 2)),
        (HalfEdge::new(1, 0), HalfEdge::new(3, 2)),
        (HalfEdge::new(1, 1), HalfEdge::new(3, 1)),
        (HalfEdge::new(0, 1), HalfEdge::new(2, 2)),
        (HalfEdge::new(1, 2), HalfEdge::new(2, 0)),
        (HalfEdge::new(2, 1), HalfEdge::new(3, 0)),
    ];
    let s = build_from_triangles(tris, &g).expect("c2 surface");
    // Height from x2' onto x1 x2, continued through the glued midpoint.
    let foot = (x1 + x2) * 0.5;
    Ok(Example {
        family: ExampleFamily::C2Witness { t },
        trajectory: DesignatedTrajectory {
            face: 0,
            corner: Some(2),
            point: x2p,
            direction: (foot - x2p).unit(),
            budget: 2.0 * r3 * t,
        },
        expected: ExpectedQuantities { length: r3 * t, iota: 1, area: s.area(), closed: false },
        surface: s,
    })
}

/// Labels: 0 = x1 (short base ends), 1 = x2 (long base ends), 2 = x3 (triangle apex),
/// 3 = x4 (midpoint of the short base).
pub fn delta_witness(theta: f64, m: usize) -> Result<Example, FixtureError> {
    if !(theta > 0.0 && theta < PI / 6.0) {
        return Err(FixtureError::ParamOutOfRange(format!("θ = {theta} must lie in (0, π/6)")));
    }
    if m == 0 || (m as f64 * theta / 2.0).cos() <= 1.0 / 3.0 {
        return Err(FixtureError::ParamOutOfRange(format!(
            "m = {m} must be positive with cos(mθ/2) > 1/3 so that γ_m stays in the trapezoid copies"
        )));
    }
    let s = delta_surface(theta);
    let a = Vec2::new(1.0, 0.0);
    let target = Vec2::from_angle(m as f64 * theta);
    let len = 2.0 * (m as f64 * theta / 2.0).sin();
    Ok(Example {
        family: ExampleFamily::DeltaWitness { theta, m },
        trajectory: DesignatedTrajectory {
            face: 1,
            corner: Some(1),
            point: a,
            direction: (target - a).unit(),
            budget: len * 1.5,
        },
        expected: ExpectedQuantities {
            length: len,
            iota: m - 1,
            area: delta_witness_stated_area(theta),
            closed: false,
        },
        surface: s,
    })
}

pub fn delta_witness_stated_area(theta: f64) -> f64 {
    4.0 / 9.0 * theta.sin() + (theta / 2.0).sin().powi(2) / 3f64.sqrt()
}

pub fn delta_surface(theta: f64) -> FlatConeSurface {
    let a = Vec2::new(1.0, 0.0);
    let b = Vec2::from_angle(theta);
    let c = a * (1.0 / 3.0);
    let d = b * (1.0 / 3.0);
    let mid = (a + b) * 0.5;
    let out = mid.unit();
    let apex = mid + out * ((theta / 2.0).sin() / 3f64.sqrt());
    let mm = (c + d) * 0.5;
    let tris = vec![
        EuclideanTriangle::new(0, [a, apex, b], [1, 2, 1]),
        EuclideanTriangle::new(1, [c, a, b], [0, 1, 1]),
        EuclideanTriangle::new(2, [c, b, mm], [0, 1, 3]),
        EuclideanTriangle::new(3, [mm, b, d], [3, 1, 0]),
    ];
    let g = [
        (HalfEdge::new(0, 0), HalfEdge::new(0, 1)),
        (HalfEdge::new(0, 2), HalfEdge::new(1, 1)),
        (HalfEdge::new(1, 2), HalfEdge::new(2, 0)),
        (HalfEdge::new(2, 1), HalfEdge::new(3, 0)),
        (HalfEdge::new(1, 0), HalfEdge::new(3, 1)),
        (HalfEdge::new(3, 2), HalfEdge::new(2, 2)),
    ];
    build_from_triangles(tris, &g).expect("delta surface")
}

/// A random convex polygon with `n` vertices on a random ellipse, avoiding very small
/// angles and very short sides.
pub fn random_convex_polygon(rng: &mut ChaCha8Rng, n: usize) -> Polygon {
    loop {
        let mut ts: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ax = rng.gen_range(0.6..1.0);
        let rot = rng.gen_range(0.0..PI);
        let pts: Vec<Vec2> = ts.iter().map(|&t| Vec2::new(t.cos(), ax * t.sin()).rotate(rot)).collect();
        let Ok(p) = Polygon::new(pts) else { continue };
        let angles = p.angles();
        if angles.iter().any(|&a| a < 0.35 || a > PI - 0.05) {
            continue;
        }
        let lens: Vec<f64> = (0..n).map(|i| p.vertices[i].dist(p.vertices[(i + 1) % n])).collect();
        let (lo, hi) = lens.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &x| (l.min(x), h.max(x)));
        if lo < 0.2 * hi {
            continue;
        }
        return p.normalized();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::{curvature_gap, validate};

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn c2_curvatures() {
        let e = c2_witness(0.3).unwrap();
        assert!(validate(&e.surface).pass);
        let k = sorted(e.surface.curvatures());
        for (x, y) in k.iter().zip(sorted(vec![5.0 / 6.0, 1.0 / 12.0, 7.0 / 12.0, 0.5])) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
        assert!((curvature_gap(&k) - 1.0 / 12.0).abs() < 1e-9);
    }

    #[test]
    fn delta_curvatures() {
        let th = 0.2;
        let e = delta_witness(th, 3).unwrap();
        assert!(validate(&e.surface).pass);
        let angles = sorted(e.surface.cone_points.iter().map(|c| c.angle).collect());
        let want = sorted(vec![PI + th, 4.0 * PI / 3.0 - th, 2.0 * PI / 3.0, PI]);
        for (x, y) in angles.iter().zip(want) {
            assert!((x - y).abs() < 1e-9);
        }
        assert!((curvature_gap(&e.surface.curvatures()) - th / (2.0 * PI)).abs() < 1e-9);
        assert!((e.surface.area() - delta_witness_stated_area(th)).abs() < 1e-12);
    }

    #[test]
    fn b2_angles() {
        let s = b2_surface();
        let angles = sorted(s.cone_points.iter().map(|c| c.angle).collect());
        for (x, y) in angles.iter().zip([PI / 3.0, 2.0 * PI / 3.0, PI]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn fagnano_cut_has_negative_curvature() {
        let e = fagnano_cut(0.4).unwrap();
        assert!(validate(&e.surface).pass);
        assert!(e.surface.curvatures().iter().any(|&k| k < 0.0));
    }

    #[test]
    fn out_of_range() {
        assert!(build_example(ExampleFamily::C2Witness { t: 1.5 }).is_err());
        assert!(build_example(ExampleFamily::DeltaWitness { theta: 0.6, m: 2 }).is_err());
    }
}
