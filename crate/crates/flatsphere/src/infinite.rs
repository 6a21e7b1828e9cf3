//! Infinite non-negative flat spheres: a compact finite part plus a truncated infinite cone
//! around the pole, their cores, and the saddle-connection census.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{count_within, infinite_depth_cap, log2_infinite_bound};
use crate::enumerator::{enumerate_on_complex, EnumError, EnumOptions, SaddleConnection};
use crate::geom::{corner_angle, Vec2, TAU};
use crate::mesh::Soup;
use crate::surface::{curvature_gap, Complex, EuclideanTriangle, HalfEdge, SurfaceError};

/// One corner of the finite part's boundary loop, seen from the pole side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCorner {
    pub label: usize,
    /// Angle at this corner on the side of the pole.
    pub exterior: f64,
    /// Length of the boundary edge to the next corner.
    pub next_length: f64,
}

/// The finite part has the pole on the right of its boundary loop. A `None` domain is a
/// zero-area tree traversed on both sides, as for a degenerate hull.
#[derive(Clone, Debug)]
pub struct InfiniteFlatSphere {
    pub domain: Option<Complex>,
    pub boundary: Vec<BoundaryCorner>,
}

fn next_boundary(c: &Complex, h: HalfEdge) -> HalfEdge {
    // Rotate around the end vertex of `h` inside the domain until the next free edge.
    let (mut f, mut e) = (h.face, (h.edge + 1) % 3);
    loop {
        match c.neighbor(f, e) {
            None => return HalfEdge::new(f, e),
            Some(g) => {
                f = g.face;
                e = (g.edge + 1) % 3;
            }
        }
    }
}

/// Boundary half-edges of a domain with one boundary loop, in loop order.
fn boundary_loop(c: &Complex) -> Result<Vec<HalfEdge>, String> {
    let free: Vec<HalfEdge> = (0..c.num_faces())
        .flat_map(|f| (0..3).map(move |e| HalfEdge::new(f, e)))
        .filter(|h| c.neighbor(h.face, h.edge).is_none())
        .collect();
    let Some(&first) = free.first() else {
        return Err("finite part has no boundary".into());
    };
    let mut out = vec![first];
    loop {
        let n = next_boundary(c, *out.last().unwrap());
        if n == first {
            break;
        }
        if out.len() > free.len() {
            return Err("boundary walk does not close".into());
        }
        out.push(n);
    }
    if out.len() != free.len() {
        return Err(format!("finite part has {} boundary edges off the main loop", free.len() - out.len()));
    }
    Ok(out)
}

impl InfiniteFlatSphere {
    /// Attach exterior angles, given per label, to the boundary loop of `domain`.
    pub fn from_domain(domain: Complex, exterior: &HashMap<usize, f64>) -> Result<InfiniteFlatSphere, String> {
        let hs = boundary_loop(&domain)?;
        let mut boundary = Vec::with_capacity(hs.len());
        for h in hs {
            let label = domain.triangle(h.face).labels[h.edge];
            let ext = *exterior.get(&label).ok_or_else(|| format!("no exterior angle for boundary vertex {label}"))?;
            boundary.push(BoundaryCorner { label, exterior: ext, next_length: domain.edge_length(h.face, h.edge) });
        }
        Ok(InfiniteFlatSphere { domain: Some(domain), boundary })
    }

    /// Curvatures of the conical points, by label.
    pub fn curvatures(&self) -> BTreeMap<usize, f64> {
        let mut angle: BTreeMap<usize, f64> = BTreeMap::new();
        if let Some(d) = &self.domain {
            for p in &d.cone_points {
                *angle.entry(p.label).or_default() += p.angle;
            }
        }
        for b in &self.boundary {
            *angle.entry(b.label).or_default() += b.exterior;
        }
        angle.into_iter().map(|(l, a)| (l, 1.0 - a / TAU)).collect()
    }

    /// Number of conical points, the pole excluded.
    pub fn n(&self) -> usize {
        self.curvatures().len()
    }

    pub fn pole_curvature(&self) -> f64 {
        2.0 - self.curvatures().values().sum::<f64>()
    }

    /// Angle `2π(k_pole − 1)` of the truncated cone glued along the boundary.
    pub fn attached_cone_angle(&self) -> f64 {
        TAU * (self.pole_curvature() - 1.0)
    }

    pub fn gap(&self) -> f64 {
        let k: Vec<f64> = self.curvatures().into_values().collect();
        curvature_gap(&k)
    }

    /// The boundary loop turns by exactly the attached cone angle, seen from the pole.
    pub fn attachment_residual(&self) -> f64 {
        let turn: f64 = self.boundary.iter().map(|b| b.exterior - PI).sum();
        (turn - self.attached_cone_angle()).abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Side {
    Face(HalfEdge),
    /// One side of a zero-width slit; the other side carries the same id.
    Slit(usize),
    /// A slit side whose twin has been covered by a face.
    Bare,
}

#[derive(Clone, Debug)]
struct Bnd {
    label: usize,
    exterior: f64,
    length: f64,
    side: Side,
}

/// The core: the region bounded by the shortest loop around the pole.
#[derive(Clone, Debug)]
pub struct Core {
    pub domain: Option<Complex>,
    pub boundary: Vec<BoundaryCorner>,
    /// Triangles added by tightening.
    pub added: usize,
}

impl Core {
    pub fn is_degenerate(&self) -> bool {
        self.domain.is_none()
    }

    pub fn min_exterior(&self) -> f64 {
        self.boundary.iter().map(|b| b.exterior).fold(f64::INFINITY, f64::min)
    }
}

pub const CORE_ANGLE_TOL: f64 = 1e-9;

/// Tighten the boundary loop towards the pole until every corner has exterior angle `≥ π`.
pub fn core_of_infinite_sphere(x: &InfiniteFlatSphere) -> Result<Core, SurfaceError> {
    let fail = |why: String| SurfaceError::InvalidGluing(why);
    let (mut soup, mut bnd) = match &x.domain {
        Some(d) => {
            let hs = boundary_loop(d).map_err(fail)?;
            if hs.len() != x.boundary.len() {
                return Err(fail("boundary corners do not match the finite part".into()));
            }
            let bnd = hs
                .iter()
                .zip(&x.boundary)
                .map(|(h, b)| Bnd { label: b.label, exterior: b.exterior, length: b.next_length, side: Side::Face(*h) })
                .collect::<Vec<_>>();
            (Soup::from_complex(d), bnd)
        }
        None => {
            // A tree walked around: match each edge with its reverse.
            let m = x.boundary.len();
            let mut side = vec![Side::Bare; m];
            let mut next_id = 0;
            for k in 0..m {
                if side[k] != Side::Bare {
                    continue;
                }
                let (a, b) = (x.boundary[k].label, x.boundary[(k + 1) % m].label);
                let twin = (0..m).find(|&j| {
                    j != k
                        && side[j] == Side::Bare
                        && x.boundary[j].label == b
                        && x.boundary[(j + 1) % m].label == a
                        && (x.boundary[j].next_length - x.boundary[k].next_length).abs() <= 1e-9
                });
                let Some(j) = twin else {
                    return Err(fail("degenerate boundary is not a doubled tree".into()));
                };
                side[k] = Side::Slit(next_id);
                side[j] = Side::Slit(next_id);
                next_id += 1;
            }
            let bnd = x
                .boundary
                .iter()
                .zip(side)
                .map(|(b, s)| Bnd { label: b.label, exterior: b.exterior, length: b.next_length, side: s })
                .collect();
            (Soup::new(Vec::new(), Vec::new()), bnd)
        }
    };
    let mut added = 0;
    let cap = 10_000 * bnd.len().max(1);
    loop {
        let m = bnd.len();
        let Some(k) = (0..m)
            .filter(|&k| bnd[k].exterior < PI - CORE_ANGLE_TOL)
            .min_by(|&a, &b| bnd[a].exterior.partial_cmp(&bnd[b].exterior).unwrap())
        else {
            break;
        };
        if added >= cap || m < 2 {
            return Err(fail(format!("core tightening stuck after {added} triangles")));
        }
        let pk = (k + m - 1) % m;
        let nk = (k + 1) % m;
        let (l1, l2, beta) = (bnd[pk].length, bnd[k].length, bnd[k].exterior);
        let v = Vec2::ZERO;
        let u = Vec2::new(l1, 0.0);
        let w = Vec2::from_angle(beta) * l2;
        let pts = [v, u, w];
        let (au, aw) = (corner_angle(&pts, 1), corner_angle(&pts, 2));
        let f = soup.tris.len();
        soup.tris.push(EuclideanTriangle::new(f, pts, [bnd[k].label, bnd[pk].label, bnd[nk].label]));
        soup.adj.push([None; 3]);
        soup.alive.push(true);
        // Edge 0 (v → u) against boundary edge u → v; edge 2 (w → v) against v → w.
        attach(&mut soup, &mut bnd, pk, HalfEdge::new(f, 0));
        attach(&mut soup, &mut bnd, k, HalfEdge::new(f, 2));
        let new = Bnd { label: bnd[pk].label, exterior: bnd[pk].exterior - au, length: u.dist(w), side: Side::Face(HalfEdge::new(f, 1)) };
        if nk == pk {
            // Two corners only: the remaining one sees both new angles.
            let mut only = new;
            only.exterior -= aw;
            bnd = vec![only];
        } else {
            bnd[nk].exterior -= aw;
            bnd[pk] = new;
            bnd.remove(k);
        }
        added += 1;
    }
    if soup.tris.is_empty() {
        let boundary = bnd
            .iter()
            .map(|b| BoundaryCorner { label: b.label, exterior: b.exterior, next_length: b.length })
            .collect();
        return Ok(Core { domain: None, boundary, added });
    }
    // Bare slit sides left over would leave the domain pinched; only faces may remain.
    if bnd.iter().any(|b| !matches!(b.side, Side::Face(_))) {
        return Err(fail("core is only partly degenerate".into()));
    }
    let tol = x.domain.as_ref().map_or(1e-9, |d| d.tol());
    let boundary = bnd
        .iter()
        .map(|b| BoundaryCorner { label: b.label, exterior: b.exterior, next_length: b.length })
        .collect();
    let (t, a) = soup.compact();
    let domain = Complex::from_adjacency(t, a, tol)?;
    Ok(Core { domain: Some(domain), boundary, added })
}

/// Glue `h` against the boundary edge `bnd[k]`.
fn attach(soup: &mut Soup, bnd: &mut [Bnd], k: usize, h: HalfEdge) {
    match bnd[k].side {
        Side::Face(o) => {
            soup.adj[o.face][o.edge] = Some(h);
            soup.adj[h.face][h.edge] = Some(o);
        }
        Side::Slit(id) => {
            // The far side of the slit now has `h` behind it.
            if let Some(j) = (0..bnd.len()).find(|&j| j != k && bnd[j].side == Side::Slit(id)) {
                bnd[j].side = Side::Face(h);
            }
        }
        Side::Bare => {}
    }
    bnd[k].side = Side::Bare;
}

/// Saddle-connection census of an infinite sphere.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InfiniteCount {
    pub n: usize,
    pub delta: f64,
    pub count: usize,
    pub log2_bound: f64,
    pub depth_cap: usize,
    /// Deepest connection found, in faces crossed.
    pub deepest: usize,
    pub cap_hit: bool,
    pub pass: bool,
    pub lengths: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum InfiniteError {
    #[error("need at least 3 conical points, got {0}")]
    TooFewPoints(usize),
    #[error("curvature gap {0} is not positive")]
    NoGap(f64),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Enum(#[from] EnumError),
}

/// All saddle connections lie in the core, and none is longer than the combinatorial cap
/// `⌈4n²/δ⌉` allows, so a search of unbounded length capped in depth is exhaustive.
pub fn count_saddle_connections_infinite(x: &InfiniteFlatSphere) -> Result<(InfiniteCount, Vec<SaddleConnection>), InfiniteError> {
    let n = x.n();
    if n < 3 {
        return Err(InfiniteError::TooFewPoints(n));
    }
    let delta = x.gap();
    if delta <= 0.0 {
        return Err(InfiniteError::NoGap(delta));
    }
    let core = core_of_infinite_sphere(x)?;
    let cap = infinite_depth_cap(n, delta);
    let log2_bound = log2_infinite_bound(n, delta);
    let (scs, deepest, cap_hit) = match &core.domain {
        Some(d) => {
            let r = enumerate_on_complex(d, EnumOptions { max_length: f64::INFINITY, depth_cap: cap })?;
            (r.connections, r.deepest_connection, r.cap_hit)
        }
        None => (Vec::new(), 1, false),
    };
    let count = if core.domain.is_some() { scs.len() } else { core.boundary.len() / 2 };
    let lengths = match &core.domain {
        Some(_) => scs.iter().map(|s| s.length).collect(),
        None => core.boundary.iter().map(|b| b.next_length).collect(),
    };
    let pass = count_within(count, log2_bound) && !cap_hit;
    Ok((InfiniteCount { n, delta, count, log2_bound, depth_cap: cap, deepest, cap_hit, pass, lengths }, scs))
}

/// Cone with apex of curvature `k_apex` and one marked point at distance 1: a degenerate
/// finite part, the segment between them.
pub fn cone_with_marked_point(k_apex: f64) -> InfiniteFlatSphere {
    let a = TAU * (1.0 - k_apex);
    InfiniteFlatSphere {
        domain: None,
        boundary: vec![
            BoundaryCorner { label: 0, exterior: a, next_length: 1.0 },
            BoundaryCorner { label: 1, exterior: TAU, next_length: 1.0 },
        ],
    }
}

/// A random infinite non-negative flat sphere with `n` conical points: an apex over a fan of
/// triangles, with the other points on the boundary of the fan. Curvatures are drawn so that
/// some boundary corners may need tightening.
pub fn random_infinite_sphere(rng: &mut ChaCha8Rng, n: usize, min_gap: f64) -> InfiniteFlatSphere {
    assert!(n >= 3);
    let m = n - 1;
    loop {
        let kc = rng.gen_range(0.15..0.5);
        let theta = TAU * (1.0 - kc);
        let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.5..1.5)).collect();
        let total: f64 = raw.iter().sum();
        let omega: Vec<f64> = raw.iter().map(|x| x / total * theta).collect();
        if omega.iter().any(|&w| w >= PI - 0.2) {
            continue;
        }
        let r: Vec<f64> = (0..m).map(|_| rng.gen_range(0.7..1.3)).collect();
        let tri = |j: usize| {
            let (a, b) = (r[j], r[(j + 1) % m]);
            [Vec2::ZERO, Vec2::new(a, 0.0), Vec2::from_angle(omega[j]) * b]
        };
        // Angle at v_j: corner 1 of T_j plus corner 2 of T_{j−1}.
        let inner: Vec<f64> = (0..m).map(|j| corner_angle(&tri(j), 1) + corner_angle(&tri((j + m - 1) % m), 2)).collect();
        if inner.iter().any(|&t| t > PI - 0.05) {
            continue;
        }
        let ks: Vec<f64> = inner.iter().map(|&t| rng.gen_range(0.25..1.6) * (PI - t) / TAU).collect();
        let mut all = ks.clone();
        all.push(kc);
        if all.iter().sum::<f64>() >= 1.0 || curvature_gap(&all) < min_gap {
            continue;
        }
        let tris: Vec<EuclideanTriangle> = (0..m)
            .map(|j| EuclideanTriangle::new(j, tri(j), [0, j + 1, (j + 1) % m + 1]))
            .collect();
        let mut adj = vec![[None; 3]; m];
        for j in 0..m {
            let nx = (j + 1) % m;
            adj[j][2] = Some(HalfEdge::new(nx, 0));
            adj[nx][0] = Some(HalfEdge::new(j, 2));
        }
        let Ok(domain) = Complex::from_adjacency(tris, adj, 1e-9) else { continue };
        let exterior: HashMap<usize, f64> = (0..m).map(|j| (j + 1, TAU * (1.0 - ks[j]) - inner[j])).collect();
        match InfiniteFlatSphere::from_domain(domain, &exterior) {
            Ok(x) => return x,
            Err(_) => continue,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn wide_cone_has_segment_core() {
        let x = cone_with_marked_point(0.3);
        let core = core_of_infinite_sphere(&x).unwrap();
        assert!(core.is_degenerate());
        assert_eq!(core.boundary.len(), 2);
    }

    #[test]
    fn narrow_cone_core_is_a_cone() {
        // Angle π/2 at the apex.
        let x = cone_with_marked_point(0.75);
        let core = core_of_infinite_sphere(&x).unwrap();
        let d = core.domain.as_ref().unwrap();
        assert_eq!(d.num_faces(), 1);
        assert_eq!(core.boundary.len(), 1);
        assert!((core.boundary[0].exterior - 1.5 * PI).abs() < 1e-12);
        // Base of the isosceles triangle with legs 1 and apex angle π/2.
        assert!((core.boundary[0].next_length - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn random_spheres_are_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 3..=5 {
            let x = random_infinite_sphere(&mut rng, n, 0.1);
            assert_eq!(x.n(), n);
            assert!(x.attachment_residual() < 1e-9, "{}", x.attachment_residual());
            assert!(x.pole_curvature() > 1.0);
            let core = core_of_infinite_sphere(&x).unwrap();
            assert!(core.min_exterior() >= PI - 1e-9);
        }
    }

    #[test]
    fn census_stays_below_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_infinite_sphere(&mut rng, 3, 0.1);
        let (row, scs) = count_saddle_connections_infinite(&x).unwrap();
        assert!(row.pass);
        assert!(row.count >= 2);
        assert_eq!(row.count, scs.len());
    }
}
