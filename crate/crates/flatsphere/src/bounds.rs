//! Explicit constants of the length versus self-intersection inequalities, and checks of
//! those inequalities on enumerated geodesics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delaunay::delaunay_triangulation;
use crate::enumerator::{cylinders_from_connections, enumerate_with_triangulation, EnumError};
use crate::surface::{curvature_gap, Complex, FlatConeSurface};
use crate::tracer::{corner_switches, Trajectory};

/// Additive slack on normalized lengths.
pub const SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("curvature gap {0} outside (0, 1/3]")]
    DeltaOutOfRange(f64),
    #[error("need at least 3 cone points, got {0}")]
    TooFewPoints(usize),
    #[error(transparent)]
    Enum(#[from] EnumError),
}

fn check(n: usize, delta: f64) -> Result<(), BoundsError> {
    if n < 3 {
        return Err(BoundsError::TooFewPoints(n));
    }
    if !(delta > 0.0 && delta <= 1.0 / 3.0 + 1e-12) {
        return Err(BoundsError::DeltaOutOfRange(delta));
    }
    Ok(())
}

/// `(c₁, c₂)` of the uniform lower bound.
pub fn constants_uniform(n: usize, delta: f64) -> Result<(f64, f64), BoundsError> {
    check(n, delta)?;
    let nf = n as f64;
    let p = (2 * n - 4) as i32;
    let c1 = 9.0 * 2f64.sqrt() * delta / (8.0 * nf * nf) * (delta * delta / (6.0 * nf)).powi(p);
    let c2 = 81.0 / 4.0 * (1.0 / (54.0 * nf)).powi(p);
    Ok((c1, c2))
}

/// `(a₁, a₂)` of the uniform upper bound.
pub fn constants_upper(n: usize, delta: f64) -> Result<(f64, f64), BoundsError> {
    check(n, delta)?;
    let nf = n as f64;
    let sp = PI.sqrt();
    let d32 = delta.powf(1.5);
    let a1 = 20.0 * nf * (nf - 1.0) / sp * (2.0 / delta + 1.0 / (2f64.sqrt() * d32));
    let a2 = 40.0 * nf / (delta * sp) + 20.0 * nf / (d32 * (2.0 * PI).sqrt());
    Ok((a1, a2))
}

/// `σ_d` for `d = 1..n−3`; empty when `n < 4`.
pub fn sigma_constants(curvatures: &[f64]) -> Vec<f64> {
    let n = curvatures.len();
    if n < 4 {
        return Vec::new();
    }
    sigma_from_gap(n, curvature_gap(curvatures))
}

/// `σ_d = δ²/(4n²)·(δ²/(6n))^{n−2−d}` for given `n` and gap.
pub fn sigma_from_gap(n: usize, delta: f64) -> Vec<f64> {
    if n < 4 {
        return Vec::new();
    }
    let nf = n as f64;
    let q = delta * delta / (6.0 * nf);
    (1..=n - 3)
        .map(|d| delta * delta / (4.0 * nf * nf) * q.powi((n - 2 - d) as i32))
        .collect()
}

/// `m₀ = 6(4g + 2n − 4)·⌈1/(2 min(1 − kᵢ))⌉`.
pub fn m0_constant(g: usize, n: usize, curvatures: &[f64]) -> usize {
    let kmin = curvatures.iter().map(|k| 1.0 - k).fold(f64::INFINITY, f64::min);
    // Guard against 1/(2·(1/2)) landing a hair above an integer.
    let r = 1.0 / (2.0 * kmin);
    let ceil = if (r - r.round()).abs() < 1e-12 { r.round() } else { r.ceil() };
    6 * (4 * g + 2 * n - 4) * ceil.max(1.0) as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub b1: f64,
    pub b2: f64,
    pub relsys: f64,
    pub circumradius: f64,
}

/// Per-surface `(b₁, b₂)` at unit area, with the relative systole and `R(X)` used.
pub fn constants_individual(surface: &FlatConeSurface) -> Result<Individual, BoundsError> {
    let unit = surface.normalized();
    let n = unit.n();
    let tri = delaunay_triangulation(&unit).map_err(EnumError::from)?;
    let r = tri.max_circumradius();
    let relsys = crate::enumerator::relative_systole(&unit)?;
    let kmin = unit.curvatures().iter().map(|k| 1.0 - k).fold(f64::INFINITY, f64::min);
    let s2 = relsys * relsys;
    let b1 = 2f64.sqrt() * (s2 / r) * kmin / (12.0 * (2 * n - 4) as f64);
    let b2 = s2 / (2.0 * r);
    Ok(Individual { b1, b2, relsys, circumradius: r })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantSet {
    pub n: usize,
    pub delta: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
    pub c1: f64,
    pub c2: f64,
    pub m0: usize,
    pub sigma: Vec<f64>,
    pub relsys: f64,
    pub circumradius: f64,
}

pub fn constant_set(surface: &FlatConeSurface) -> Result<ConstantSet, BoundsError> {
    let k = surface.curvatures();
    let n = k.len();
    let delta = curvature_gap(&k);
    let (c1, c2) = constants_uniform(n, delta)?;
    let (a1, a2) = constants_upper(n, delta)?;
    let ind = constants_individual(surface)?;
    Ok(ConstantSet {
        n,
        delta,
        b1: ind.b1,
        b2: ind.b2,
        a1,
        a2,
        c1,
        c2,
        m0: m0_constant(0, n, &k),
        sigma: sigma_constants(&k),
        relsys: ind.relsys,
        circumradius: ind.circumradius,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeodesicKind {
    SaddleConnection,
    ClosedGeodesic,
}

/// One geodesic's checks. Verdicts from per-surface constants and from the uniform
/// constants are kept in separate fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub kind: GeodesicKind,
    pub length: f64,
    pub iota: usize,
    /// `b₁√ι`, per-surface.
    pub individual_lower: f64,
    pub individual_ok: bool,
    /// `c₁√ι − c₂` and `a₁√ι + a₂`, uniform.
    pub uniform_lower: f64,
    pub uniform_upper: f64,
    pub uniform_ok: bool,
    /// For closed geodesics: `c₁√ι ≤ ℓ ≤ a₁√ι` and `ℓ ≥ √(πδ)`.
    pub closed_ok: Option<bool>,
}

impl BoundRow {
    pub fn pass(&self) -> bool {
        self.individual_ok && self.uniform_ok && self.closed_ok.unwrap_or(true)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub constants: ConstantSet,
    pub max_length: f64,
    pub rows: Vec<BoundRow>,
    pub pass: bool,
}

impl BoundReport {
    pub fn violations(&self) -> impl Iterator<Item = &BoundRow> {
        self.rows.iter().filter(|r| !r.pass())
    }
}

pub fn bound_row(k: &ConstantSet, kind: GeodesicKind, length: f64, iota: usize) -> BoundRow {
    let s = (iota as f64).sqrt();
    let individual_lower = k.b1 * s;
    let uniform_lower = k.c1 * s - k.c2;
    let uniform_upper = k.a1 * s + k.a2;
    let closed_ok = (kind == GeodesicKind::ClosedGeodesic).then(|| {
        k.c1 * s <= length + SLACK && length <= k.a1 * s + SLACK && length + SLACK >= (PI * k.delta).sqrt()
    });
    BoundRow {
        kind,
        length,
        iota,
        individual_lower,
        individual_ok: individual_lower <= length + SLACK,
        uniform_lower,
        uniform_upper,
        uniform_ok: uniform_lower <= length + SLACK && length <= uniform_upper + SLACK,
        closed_ok,
    }
}

/// Enumerate saddle connections and cylinders up to normalized length `r` and check every
/// inequality on each.
pub fn verify_bounds(surface: &FlatConeSurface, r: f64) -> Result<BoundReport, BoundsError> {
    let unit = surface.normalized();
    let constants = constant_set(&unit)?;
    let tri = delaunay_triangulation(&unit).map_err(EnumError::from)?;
    let scs = enumerate_with_triangulation(&tri, r)?.connections;
    let cyl = cylinders_from_connections(tri.complex(), &scs, r)?;
    let mut rows: Vec<BoundRow> = scs
        .iter()
        .map(|s| bound_row(&constants, GeodesicKind::SaddleConnection, s.length, s.iota))
        .collect();
    rows.extend(cyl.iter().map(|c| bound_row(&constants, GeodesicKind::ClosedGeodesic, c.circumference, c.iota)));
    let pass = rows.iter().all(BoundRow::pass);
    Ok(BoundReport { constants, max_length: r, rows, pass })
}

/// Window of consecutive threads that breaks the corner-switch lemma.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowViolation {
    /// 1-based index `i`; the window is threads `i+1..=i+m₀`.
    pub start: usize,
    pub has_switch: bool,
    pub length: f64,
}

/// Check every window `t_{i+1}..t_{i+m₀}`, `1 ≤ i ≤ m − m₀ − 1`, for a corner switch and
/// total length at least `width`. Threads must be taken in a triangulation of width `width`.
pub fn corner_switch_windows(c: &Complex, traj: &Trajectory, m0: usize, width: f64) -> Vec<WindowViolation> {
    let m = traj.threads.len();
    if m < m0 + 2 {
        return Vec::new();
    }
    let switches = corner_switches(c, traj);
    let mut out = Vec::new();
    for i in 1..=m - m0 - 1 {
        // 1-based threads i+1..=i+m0 are 0-based i..i+m0.
        let (lo, hi) = (i, i + m0 - 1);
        let has_switch = switches.iter().any(|&j| j >= lo && j < hi);
        let length: f64 = traj.threads[lo..=hi].iter().map(|t| t.length).sum();
        if !has_switch || length + SLACK < width {
            out.push(WindowViolation { start: i, has_switch, length });
        }
    }
    out
}

/// `|γ| ≥ d(T)(m/(2m₀) − 1)`.
pub fn combinatorial_lower(width: f64, m: usize, m0: usize) -> f64 {
    width * (m as f64 / (2 * m0) as f64 - 1.0)
}

/// `d(T) ≥ relsys²/(2R(T))`.
pub fn width_lower(relsys: f64, circumradius: f64) -> f64 {
    relsys * relsys / (2.0 * circumradius)
}

/// `log₂` of `(3n−6)·2^{20nδ⁻¹(c₁(n−1)(R+c₂)+1)}`.
pub fn log2_sc_bound(n: usize, delta: f64, r: f64) -> Result<f64, BoundsError> {
    let (c1, c2) = constants_uniform(n, delta)?;
    let nf = n as f64;
    Ok((3.0 * nf - 6.0).log2() + 20.0 * nf / delta * (c1 * (nf - 1.0) * (r + c2) + 1.0))
}

/// Generalized diagonals of a unit-area polygon: the double has area 2, so lengths scale by `1/√2`.
pub fn log2_diag_bound(n: usize, delta: f64, r: f64) -> Result<f64, BoundsError> {
    log2_sc_bound(n, delta, r / 2f64.sqrt())
}

/// Periodic billiard families: a periodic path of length `R` lifts to a closed geodesic of length at most `2R`.
pub fn log2_per_bound(n: usize, delta: f64, r: f64) -> Result<f64, BoundsError> {
    log2_sc_bound(n, delta, 2f64.sqrt() * r)
}

/// `log₂` of `(3n−6)·2^{4n²/δ − 1}`, the bound on saddle connections of an infinite sphere.
pub fn log2_infinite_bound(n: usize, delta: f64) -> f64 {
    let nf = n as f64;
    (3.0 * nf - 6.0).log2() + 4.0 * nf * nf / delta - 1.0
}

/// Combinatorial cap `⌈4n²/δ⌉` for searches on infinite spheres.
pub fn infinite_depth_cap(n: usize, delta: f64) -> usize {
    (4.0 * (n * n) as f64 / delta).ceil() as usize
}

/// Whether `count ≤ 2^log2_bound`, compared without overflow.
pub fn count_within(count: usize, log2_bound: f64) -> bool {
    count == 0 || (count as f64).log2() <= log2_bound + 1e-12
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    #[test]
    fn equilateral_constants() {
        let k = [2.0 / 3.0; 3];
        assert_eq!(m0_constant(0, 3, &k), 24);
        let (c1, c2) = constants_uniform(3, 1.0 / 3.0).unwrap();
        assert!(close(c1, 2.246e-6, 1e-3), "{c1}");
        assert!(close(c2, 7.716e-4, 1e-3), "{c2}");
        let (a1, _) = constants_upper(3, 1.0 / 3.0).unwrap();
        assert!(close(a1, 654.9, 1e-3), "{a1}");
        assert!(sigma_constants(&k).is_empty());
    }

    #[test]
    fn delta_range() {
        assert!(matches!(constants_uniform(3, 0.4), Err(BoundsError::DeltaOutOfRange(_))));
        assert!(matches!(constants_upper(4, 0.0), Err(BoundsError::DeltaOutOfRange(_))));
    }

    #[test]
    fn sigma_five() {
        let s = sigma_from_gap(5, 1.0 / 3.0);
        assert_eq!(s.len(), 2);
        assert!(close(s[1], 1.0 / 243_000.0, 1e-12));
        assert!(close(s[0], s[1] / 270.0, 1e-12));
    }

    #[test]
    fn individual_equilateral() {
        let ind = constants_individual(&fixtures::doubled_equilateral()).unwrap();
        assert!(close(ind.b1, 0.03655, 1e-3), "{}", ind.b1);
        assert!(close(ind.b2, 0.9306, 1e-3), "{}", ind.b2);
        let again = constants_individual(&fixtures::doubled_equilateral().scaled(3.7)).unwrap();
        assert!(close(again.b1, ind.b1, 1e-12));
    }

    #[test]
    fn equilateral_verifies() {
        let rep = verify_bounds(&fixtures::doubled_equilateral(), 4.0).unwrap();
        assert!(rep.pass);
        assert!(rep.rows.iter().any(|r| r.kind == GeodesicKind::ClosedGeodesic));
    }
}
