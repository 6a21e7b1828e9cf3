//! Polygonal billiards through the double construction.
//!
//! The double `X_P` holds copy A of the polygon in faces `0..T` (charts equal to polygon
//! coordinates) and the mirror copy B in faces `T..2T` (charts are the reflection
//! `(x, y) ↦ (x, −y)` with vertex order reversed). Billiard paths lift to geodesics that
//! switch copy at every reflection.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use std::collections::HashMap;

use crate::delaunay::{delaunay_triangulation, DelaunayError};
use crate::enumerator::{
    cylinders_from_connections, enumerate_with_triangulation, from_trajectory, CylinderFamily, EnumError, SaddleConnection,
};
use crate::geom::{orient, point_segment_distance, Vec2};
use crate::surface::{build_with_tol, EuclideanTriangle, FlatConeSurface, HalfEdge, SurfaceError, DEFAULT_TOL};
use crate::tracer::{returns_to_start, trace, trace_from_cone, transfer, Start, Status, SurfacePoint, TraceError, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BilliardError {
    #[error("polygon is not simple: {0}")]
    NonSimplePolygon(String),
    #[error("invalid reflection at point {index}: {detail}")]
    InvalidReflection { index: usize, detail: String },
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Enum(#[from] EnumError),
    #[error(transparent)]
    Delaunay(#[from] DelaunayError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<Vec2>,
}

impl Polygon {
    /// Clockwise input is reversed so that vertices run counterclockwise.
    pub fn new(vertices: Vec<Vec2>) -> Result<Polygon, BilliardError> {
        let n = vertices.len();
        if n < 3 {
            return Err(BilliardError::NonSimplePolygon(format!("{n} vertices")));
        }
        let mut p = Polygon { vertices };
        if p.signed_area() < 0.0 {
            p.vertices.reverse();
        }
        p.check_simple()?;
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    pub fn signed_area(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        0.5 * (0..n).map(|i| v[i].cross(v[(i + 1) % n])).sum::<f64>()
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// Interior angle at each vertex.
    pub fn angles(&self) -> Vec<f64> {
        let v = &self.vertices;
        let n = v.len();
        (0..n)
            .map(|i| {
                let a = v[(i + n - 1) % n] - v[i];
                let b = v[(i + 1) % n] - v[i];
                // Counterclockwise turn from the outgoing to the incoming side.
                crate::geom::signed_angle(b, a).rem_euclid(2.0 * PI)
            })
            .collect()
    }

    /// Curvature `(π − θ_i)/π` of each vertex.
    pub fn curvatures(&self) -> Vec<f64> {
        self.angles().into_iter().map(|a| (PI - a) / PI).collect()
    }

    pub fn is_convex(&self) -> bool {
        self.curvatures().iter().all(|&k| k > 0.0)
    }

    pub fn scaled(&self, s: f64) -> Polygon {
        Polygon { vertices: self.vertices.iter().map(|&p| p * s).collect() }
    }

    pub fn normalized(&self) -> Polygon {
        self.scaled(1.0 / self.area().sqrt())
    }

    fn check_simple(&self) -> Result<(), BilliardError> {
        let v = &self.vertices;
        let n = v.len();
        for i in 0..n {
            if v[i].dist(v[(i + 1) % n]) == 0.0 {
                return Err(BilliardError::NonSimplePolygon(format!("repeated vertex {i}")));
            }
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if crate::geom::segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                    return Err(BilliardError::NonSimplePolygon(format!("edges {i} and {j} meet")));
                }
            }
        }
        Ok(())
    }

    /// Ear-clipping triangulation; returns counterclockwise index triples.
    pub fn triangulate(&self) -> Vec<[usize; 3]> {
        self.try_triangulate().expect("a simple polygon always has an ear")
    }

    /// `None` when no ear is found, which happens only for polygons that are not simple.
    pub fn try_triangulate(&self) -> Option<Vec<[usize; 3]>> {
        let v = &self.vertices;
        let mut idx: Vec<usize> = (0..v.len()).collect();
        let mut out = Vec::with_capacity(v.len() - 2);
        let scale = self.area().sqrt();
        while idx.len() > 3 {
            let m = idx.len();
            let mut best: Option<(usize, f64)> = None;
            for k in 0..m {
                let a = idx[(k + m - 1) % m];
                let b = idx[k];
                let c = idx[(k + 1) % m];
                let o = orient(v[a], v[b], v[c]);
                if o <= 1e-12 * scale * scale {
                    continue;
                }
                // Points on the two polygon sides do not block; points on the new diagonal do.
                let eps = 1e-12 * scale * scale;
                let blocked = idx.iter().any(|&q| {
                    q != a
                        && q != b
                        && q != c
                        && orient(v[a], v[b], v[q]) > eps
                        && orient(v[b], v[c], v[q]) > eps
                        && orient(v[c], v[a], v[q]) >= -eps
                });
                if blocked {
                    continue;
                }
                // Prefer fat ears: maximise the smallest angle.
                let p = [v[a], v[b], v[c]];
                let q = (0..3).map(|i| crate::geom::corner_angle(&p, i)).fold(f64::INFINITY, f64::min);
                if best.map_or(true, |(_, bq)| q > bq) {
                    best = Some((k, q));
                }
            }
            let k = best?.0;
            let m = idx.len();
            out.push([idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]]);
            idx.remove(k);
        }
        out.push([idx[0], idx[1], idx[2]]);
        Some(out)
    }
}

/// Which copy of the polygon a face of the double belongs to, and its triangle index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sheet {
    A(usize),
    B(usize),
}

#[derive(Clone, Debug)]
pub struct Double {
    pub polygon: Polygon,
    pub surface: FlatConeSurface,
    pub triangles: Vec<[usize; 3]>,
}

impl Double {
    pub fn sheet_of(&self, face: usize) -> Sheet {
        let t = self.triangles.len();
        if face < t {
            Sheet::A(face)
        } else {
            Sheet::B(face - t)
        }
    }

    /// Polygon coordinates of a chart point of `face`.
    pub fn to_polygon(&self, face: usize, p: Vec2) -> Vec2 {
        match self.sheet_of(face) {
            Sheet::A(_) => p,
            Sheet::B(_) => Vec2::new(p.x, -p.y),
        }
    }

    pub fn to_polygon_vec(&self, face: usize, d: Vec2) -> Vec2 {
        self.to_polygon(face, d)
    }

    /// Whether an edge of the double lies on the polygon boundary.
    pub fn is_seam(&self, face: usize, edge: usize) -> bool {
        let t = self.triangles.len();
        match self.surface.neighbor(face, edge) {
            Some(h) => (face < t) != (h.face < t),
            None => false,
        }
    }
}

/// Glue two mirror copies of the polygon along the boundary. Vertex `i` gets label `i`.
pub fn double_polygon(polygon: &Polygon) -> Result<Double, BilliardError> {
    double_polygon_with_tol(polygon, DEFAULT_TOL)
}

pub fn double_polygon_with_tol(polygon: &Polygon, tol: f64) -> Result<Double, BilliardError> {
    let v = &polygon.vertices;
    let n = v.len();
    let tri = polygon.triangulate();
    let t = tri.len();
    let mut faces = Vec::with_capacity(2 * t);
    for (f, &[a, b, c]) in tri.iter().enumerate() {
        faces.push(EuclideanTriangle::new(f, [v[a], v[b], v[c]], [a, b, c]));
    }
    let mirror = |p: Vec2| Vec2::new(p.x, -p.y);
    for (f, &[a, b, c]) in tri.iter().enumerate() {
        // Mirrored order (a, c, b): local edge e here is local edge (2 − e) mod 3 of copy A.
        faces.push(EuclideanTriangle::new(t + f, [mirror(v[a]), mirror(v[c]), mirror(v[b])], [a, c, b]));
    }
    let mirror_edge = |e: usize| 2 - e;
    let mut edge_owner: std::collections::HashMap<(usize, usize), HalfEdge> = Default::default();
    let mut gluings = Vec::new();
    for (f, tr) in tri.iter().enumerate() {
        for e in 0..3 {
            let (a, b) = (tr[e], tr[(e + 1) % 3]);
            let boundary = (a + 1) % n == b;
            if boundary {
                gluings.push((HalfEdge::new(f, e), HalfEdge::new(t + f, mirror_edge(e))));
            } else if let Some(h) = edge_owner.remove(&(b, a)) {
                gluings.push((HalfEdge::new(f, e), h));
                gluings.push((HalfEdge::new(t + f, mirror_edge(e)), HalfEdge::new(t + h.face, mirror_edge(h.edge))));
            } else {
                edge_owner.insert((a, b), HalfEdge::new(f, e));
            }
        }
    }
    let surface = build_with_tol(faces, &gluings, tol)?;
    Ok(Double { polygon: polygon.clone(), surface, triangles: tri })
}

/// A polygonal path bouncing off the sides of a polygon: `points[0]`, the reflection points,
/// and `points[m]`. A closed path has `points[m] == points[0]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BilliardPath {
    pub points: Vec<Vec2>,
    pub closed: bool,
    /// Starts and ends at vertices.
    pub diagonal: bool,
}

impl BilliardPath {
    pub fn segments(&self) -> usize {
        self.points.len() - 1
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].dist(w[1])).sum()
    }

    /// Reflection points, cyclically for a closed path.
    pub fn reflections(&self) -> &[Vec2] {
        let m = self.points.len();
        if self.closed {
            &self.points[..m - 1]
        } else {
            &self.points[1..m - 1]
        }
    }

    pub fn reversed(&self) -> BilliardPath {
        let mut points = self.points.clone();
        points.reverse();
        BilliardPath { points, ..self.clone() }
    }

    /// Same path up to orientation (and starting point, when closed), rounded to `q`.
    pub fn key(&self, q: f64) -> Vec<(i64, i64)> {
        let round = |p: &Vec2| ((p.x / q).round() as i64, (p.y / q).round() as i64);
        if self.closed {
            let mut k: Vec<(i64, i64)> = self.reflections().iter().map(round).collect();
            k.sort_unstable();
            k
        } else {
            let f: Vec<(i64, i64)> = self.points.iter().map(round).collect();
            let mut r = f.clone();
            r.reverse();
            f.min(r)
        }
    }
}

fn vertex_at(polygon: &Polygon, p: Vec2, tol: f64) -> Option<usize> {
    polygon.vertices.iter().position(|v| v.dist(p) <= tol)
}

fn side_through(polygon: &Polygon, p: Vec2, tol: f64) -> Option<usize> {
    let v = &polygon.vertices;
    let n = v.len();
    (0..n).find(|&i| point_segment_distance(p, v[i], v[(i + 1) % n]) <= tol)
}

/// Every interior point lies inside a side and obeys the reflection law there.
pub fn check_reflections(polygon: &Polygon, path: &BilliardPath, tol: f64) -> Result<(), BilliardError> {
    let pts = &path.points;
    let m = pts.len();
    let bad = |index: usize, detail: &str| BilliardError::InvalidReflection { index, detail: detail.to_string() };
    if m < 2 {
        return Err(bad(0, "fewer than two points"));
    }
    if path.diagonal && (vertex_at(polygon, pts[0], tol).is_none() || vertex_at(polygon, pts[m - 1], tol).is_none()) {
        return Err(bad(0, "a generalized diagonal must start and end at vertices"));
    }
    if path.closed && pts[0].dist(pts[m - 1]) > tol {
        return Err(bad(m - 1, "closed path does not return to its start"));
    }
    let bounces: Vec<usize> = if path.closed { (0..m - 1).collect() } else { (1..m - 1).collect() };
    for i in bounces {
        let p = pts[i];
        if vertex_at(polygon, p, tol).is_some() {
            return Err(bad(i, "reflection at a vertex"));
        }
        let Some(e) = side_through(polygon, p, tol) else {
            return Err(bad(i, "reflection point off the boundary"));
        };
        let prev = if i == 0 { pts[m - 2] } else { pts[i - 1] };
        let next = pts[i + 1];
        let (din, dout) = ((p - prev).unit(), (next - p).unit());
        let v = &polygon.vertices;
        let t = (v[(e + 1) % v.len()] - v[e]).unit();
        let nrm = t.perp();
        let mirrored = din - nrm * (2.0 * din.dot(nrm));
        if mirrored.dist(dout) > 1e-7 {
            return Err(bad(i, "angles with the side are not complementary"));
        }
    }
    for i in 0..m - 1 {
        let mid = pts[i].lerp(pts[i + 1], 0.5);
        if !polygon_contains(polygon, mid, tol) {
            return Err(bad(i, "segment leaves the polygon"));
        }
    }
    Ok(())
}

fn polygon_contains(polygon: &Polygon, p: Vec2, tol: f64) -> bool {
    let v = &polygon.vertices;
    let n = v.len();
    if side_through(polygon, p, tol).is_some() {
        return true;
    }
    // Winding parity.
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        if (a.y > p.y) != (b.y > p.y) && p.x < a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x) {
            inside = !inside;
        }
    }
    inside
}

/// Absolute angle at vertex `i` of the double of the direction `d`, taken on copy A.
pub fn angle_on_copy_a(double: &Double, i: usize, d: Vec2) -> Option<f64> {
    let s = &double.surface;
    let t = double.triangles.len();
    let v = s.vertex_by_label(i)?;
    s.fan(v)
        .iter()
        .filter(|&&(f, _)| f < t)
        .find(|&&(f, c)| s.angle_in_corner(f, c, d) <= s.corner_angle(f, c) + 1e-12)
        .map(|&(f, c)| s.absolute_angle(f, c, d))
}

/// The straight segment between two vertices of a convex polygon, on copy A of the double.
pub fn chord(double: &Double, a: usize, b: usize) -> Result<SaddleConnection, BilliardError> {
    let (pa, pb) = (double.polygon.vertices[a], double.polygon.vertices[b]);
    let bad = |d: &str| BilliardError::InvalidReflection { index: 0, detail: d.to_string() };
    let angle = angle_on_copy_a(double, a, (pb - pa).unit()).ok_or_else(|| bad("direction leaves the polygon"))?;
    let s = &double.surface;
    let v = s.vertex_by_label(a).unwrap();
    let t = trace_from_cone(s, v, angle, pa.dist(pb) * (1.0 + 1e-7) + 10.0 * s.tol())?;
    match from_trajectory(s, &t)? {
        Some(sc) if sc.end == b => Ok(sc),
        _ => Err(bad("chord does not reach its end vertex")),
    }
}

/// What a billiard path becomes on the double.
#[derive(Clone, Debug)]
pub enum Lift {
    SaddleConnection(SaddleConnection),
    /// A closed geodesic, traced once around.
    ClosedGeodesic(Trajectory),
}

impl Lift {
    pub fn length(&self) -> f64 {
        match self {
            Lift::SaddleConnection(s) => s.length,
            Lift::ClosedGeodesic(t) => t.length,
        }
    }
}

/// Unfold a billiard path onto the double, starting on copy A.
pub fn lift_billiard_path(double: &Double, path: &BilliardPath) -> Result<Lift, BilliardError> {
    let s = &double.surface;
    let tol = 1e-9 * (1.0 + double.polygon.area().sqrt());
    check_reflections(&double.polygon, path, tol)?;
    let len = path.length();
    let bad = |d: &str| BilliardError::InvalidReflection { index: 0, detail: d.to_string() };
    let d0 = (path.points[1] - path.points[0]).unit();
    if path.diagonal {
        let m = path.points.len();
        let a = vertex_at(&double.polygon, path.points[0], tol).unwrap();
        let b = vertex_at(&double.polygon, path.points[m - 1], tol).unwrap();
        let angle = angle_on_copy_a(double, a, d0).ok_or_else(|| bad("first segment leaves the polygon"))?;
        let v = s.vertex_by_label(a).unwrap();
        let t = trace_from_cone(s, v, angle, len * (1.0 + 1e-7) + 10.0 * s.tol())?;
        return match from_trajectory(s, &t)? {
            Some(sc) if sc.end == b && (sc.length - len).abs() <= 1e-7 * (1.0 + len) => Ok(Lift::SaddleConnection(sc)),
            _ => Err(bad("unfolded path does not end at the final vertex")),
        };
    }
    if !path.closed {
        return Err(bad("only generalized diagonals and periodic paths lift to closed objects"));
    }
    let mid = path.points[0].lerp(path.points[1], 0.5);
    let t = double.triangles.len();
    let f = (0..t).find(|&f| s.contains(f, mid)).ok_or_else(|| bad("start point not found on copy A"))?;
    let odd = path.segments() % 2 == 1;
    let budget = if odd { 2.0 * len } else { len };
    let traj = trace(s, Start::Point(SurfacePoint { face: f, point: mid }), d0, budget)?;
    if !matches!(traj.end, Status::BudgetExhausted(_)) || !returns_to_start(s, &traj) {
        return Err(bad("unfolded path does not close up"));
    }
    Ok(Lift::ClosedGeodesic(Trajectory { closed: true, ..traj }))
}

/// Fold a trajectory on the double back into the polygon.
pub fn project_trajectory(double: &Double, traj: &Trajectory) -> BilliardPath {
    let s = &double.surface;
    let th = &traj.threads;
    let mut points = vec![double.to_polygon(th[0].face, th[0].entry)];
    for w in th.windows(2) {
        if let crate::tracer::Endpoint::Edge(e) = w[0].exit_at {
            if double.is_seam(w[0].face, e) {
                points.push(double.to_polygon(w[0].face, w[0].exit));
            }
        }
    }
    let last = th.last().unwrap();
    points.push(double.to_polygon(last.face, last.exit));
    let diagonal = matches!(traj.start, Status::ConePoint { .. }) || matches!(traj.origin, Start::Corner { .. });
    let diagonal = diagonal && matches!(traj.end, Status::ConePoint { .. });
    if !traj.closed {
        return BilliardPath { points, closed: false, diagonal };
    }
    let _ = s;
    let m = points.len();
    let mut refl: Vec<Vec2> = points[1..m - 1].to_vec();
    if refl.is_empty() {
        return BilliardPath { points, closed: true, diagonal: false };
    }
    // The midpoints at either end belong to one segment. An odd path comes around twice.
    let half = refl.len() / 2;
    let tol = 1e-7 * (1.0 + double.polygon.area().sqrt());
    if refl.len() % 2 == 0 && (0..half).all(|i| refl[i].dist(refl[i + half]) <= tol) {
        refl.truncate(half);
    }
    refl.rotate_right(1);
    let mut points = refl.clone();
    points.push(refl[0]);
    BilliardPath { points, closed: true, diagonal: false }
}

/// Generalized diagonals of length at most `r`, each once, shortest first.
pub fn enumerate_generalized_diagonals(polygon: &Polygon, r: f64) -> Result<Vec<BilliardPath>, BilliardError> {
    let double = double_polygon(polygon)?;
    let tri = delaunay_triangulation(&double.surface)?;
    let scs = enumerate_with_triangulation(&tri, r)?.connections;
    let s = &double.surface;
    let q = 1e-7 * (1.0 + polygon.area().sqrt());
    let mut seen: HashMap<Vec<(i64, i64)>, BilliardPath> = HashMap::new();
    for sc in &scs {
        let v = s.vertex_by_label(sc.start).unwrap();
        let t = trace_from_cone(s, v, sc.start_angle, sc.length * (1.0 + 1e-7) + 10.0 * s.tol())?;
        let mut path = project_trajectory(&double, &t);
        path.diagonal = true;
        seen.entry(path.key(q)).or_insert(path);
    }
    let mut out: Vec<BilliardPath> = seen.into_values().collect();
    out.sort_by(|a, b| a.length().partial_cmp(&b.length()).unwrap());
    Ok(out)
}

/// A maximal family of parallel periodic billiard paths.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeriodicFamily {
    /// The shortest member: the core path for families of odd paths.
    pub path: BilliardPath,
    pub length: f64,
    pub odd: bool,
    /// Circumference and height of the cylinder on the double.
    pub circumference: f64,
    pub height: f64,
}

/// Families of periodic billiard paths whose shortest member has length at most `r`.
pub fn enumerate_periodic_families(polygon: &Polygon, r: f64) -> Result<Vec<PeriodicFamily>, BilliardError> {
    let double = double_polygon(polygon)?;
    // Odd families close on the double after twice their length.
    let reach = 2.0 * r;
    let tri = delaunay_triangulation(&double.surface)?;
    let scs = enumerate_with_triangulation(&tri, reach)?.connections;
    let cyl = cylinders_from_connections(tri.complex(), &scs, reach)?;
    let q = 1e-6 * (1.0 + polygon.area().sqrt());
    let mut seen: HashMap<Vec<(i64, i64)>, PeriodicFamily> = HashMap::new();
    for c in &cyl {
        let fam = family_of(&double, tri.complex(), c)?;
        if fam.length <= r * (1.0 + 1e-12) {
            seen.entry(fam.path.key(q)).or_insert(fam);
        }
    }
    let mut out: Vec<PeriodicFamily> = seen.into_values().collect();
    out.sort_by(|a, b| a.length.partial_cmp(&b.length).unwrap());
    Ok(out)
}

fn family_of(double: &Double, from: &crate::surface::Complex, c: &CylinderFamily) -> Result<PeriodicFamily, BilliardError> {
    let s = &double.surface;
    let (p, d) = transfer(from, s, SurfacePoint { face: c.face, point: c.point }, c.direction)?;
    // Slide along the midline so the start is unlikely to sit on a seam.
    let pre = trace(s, Start::Point(p), d, 0.381966 * c.circumference)?;
    let traj = trace(s, Start::Point(pre.end_point()), pre.end_dir(), c.circumference)?;
    let traj = Trajectory { closed: true, ..traj };
    let path = project_trajectory(double, &traj);
    let length = path.length();
    let odd = (length - c.circumference / 2.0).abs() <= 1e-7 * (1.0 + length);
    Ok(PeriodicFamily { path, length, odd, circumference: c.circumference, height: c.height })
}

/// Counts at each radius, for unit-area bound checks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BilliardCountRow {
    pub r: f64,
    pub n_diag: usize,
    pub n_per: usize,
}

pub fn billiard_counts(diags: &[BilliardPath], fams: &[PeriodicFamily], grid: &[f64]) -> Vec<BilliardCountRow> {
    grid.iter()
        .map(|&r| BilliardCountRow {
            r,
            n_diag: diags.iter().filter(|d| d.length() <= r).count(),
            n_per: fams.iter().filter(|f| f.length <= r).count(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_triangulates() {
        let p = Polygon::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ])
        .unwrap();
        assert_eq!(p.triangulate().len(), 2);
        let d = double_polygon(&p).unwrap();
        assert_eq!(d.surface.n(), 4);
        for c in &d.surface.cone_points {
            assert!((c.angle - PI).abs() < 1e-12);
        }
        assert!((d.surface.area() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn clockwise_is_reversed() {
        let p = Polygon::new(vec![Vec2::new(0.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(1.0, 0.0)]).unwrap();
        assert!(p.signed_area() > 0.0);
    }

    #[test]
    fn bowtie_rejected() {
        let p = Polygon::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        ]);
        assert!(matches!(p, Err(BilliardError::NonSimplePolygon(_))));
    }

    #[test]
    fn nonconvex_double() {
        let p = Polygon::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(2.0, 2.0),
            Vec2::new(1.0, 0.5),
            Vec2::new(0.0, 2.0),
        ])
        .unwrap();
        let d = double_polygon(&p).unwrap();
        assert!(crate::surface::validate(&d.surface).pass);
        let reflex = d.surface.cone_points.iter().filter(|c| c.curvature < 0.0).count();
        assert_eq!(reflex, 1);
    }

    fn equilateral() -> Polygon {
        Polygon::new(vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.5, 3f64.sqrt() / 2.0)]).unwrap()
    }

    fn fagnano() -> BilliardPath {
        let h = 3f64.sqrt() / 4.0;
        let m = [Vec2::new(0.5, 0.0), Vec2::new(0.75, h), Vec2::new(0.25, h)];
        BilliardPath { points: vec![m[0], m[1], m[2], m[0]], closed: true, diagonal: false }
    }

    #[test]
    fn fagnano_lifts_to_twice_its_length() {
        let p = equilateral();
        let path = fagnano();
        check_reflections(&p, &path, 1e-12).unwrap();
        assert!((path.length() - 1.5).abs() < 1e-12);
        let d = double_polygon(&p).unwrap();
        let lift = lift_billiard_path(&d, &path).unwrap();
        assert!((lift.length() - 3.0).abs() < 1e-9);
        let Lift::ClosedGeodesic(t) = lift else { panic!("expected a closed geodesic") };
        let back = project_trajectory(&d, &t);
        assert_eq!(back.key(1e-7), path.key(1e-7));
    }

    #[test]
    fn bad_reflection_rejected() {
        let p = equilateral();
        let mut path = fagnano();
        path.points[1] = Vec2::new(0.7, 3f64.sqrt() * 0.3);
        assert!(matches!(check_reflections(&p, &path, 1e-12), Err(BilliardError::InvalidReflection { .. })));
    }

    #[test]
    fn altitude_diagonal_lifts() {
        let p = equilateral();
        let d = double_polygon(&p).unwrap();
        // Vertex 2 straight down to the midpoint of side 0 and back up.
        let path = BilliardPath { points: vec![p.vertices[2], Vec2::new(0.5, 0.0), p.vertices[2]], closed: false, diagonal: true };
        let lift = lift_billiard_path(&d, &path).unwrap();
        assert!(matches!(lift, Lift::SaddleConnection(_)));
        assert!((lift.length() - 3f64.sqrt()).abs() < 1e-9);
        let side = chord(&d, 0, 1).unwrap();
        assert!((side.length - 1.0).abs() < 1e-12);
    }

    fn gcd(a: i64, b: i64) -> i64 {
        if b == 0 { a } else { gcd(b, a % b) }
    }

    #[test]
    fn equilateral_diagonals_match_lattice_count() {
        let p = equilateral();
        let r = 3.2;
        let diags = enumerate_generalized_diagonals(&p, r).unwrap();
        for d in &diags {
            check_reflections(&p, d, 1e-7).unwrap();
        }
        for &x in &[1.0001, 1.8, 2.7, 3.2] {
            let mut w = 0;
            for a in 0..10i64 {
                for b in 0..10i64 {
                    let q = (a * a + a * b + b * b) as f64;
                    if gcd(a, b) == 1 && q.sqrt() <= x {
                        w += 1;
                    }
                }
            }
            // Oriented diagonals leaving the three 60 degree corners; palindromes count once.
            let oriented: usize = diags
                .iter()
                .filter(|d| d.length() <= x)
                .map(|d| {
                    let r = d.reversed();
                    let same = d.points.iter().zip(&r.points).all(|(a, b)| a.dist(*b) < 1e-7);
                    if same { 1 } else { 2 }
                })
                .sum();
            assert_eq!(oriented, 3 * w, "R = {x}");
        }
    }

    #[test]
    fn fagnano_family_is_odd() {
        let p = equilateral();
        let fams = enumerate_periodic_families(&p, 1.6).unwrap();
        let f = fams.iter().find(|f| (f.length - 1.5).abs() < 1e-7).expect("Fagnano family");
        assert!(f.odd);
        assert_eq!(f.path.key(1e-6), fagnano().key(1e-6));
        for f in &fams {
            check_reflections(&p, &f.path, 1e-7).unwrap();
        }
    }
}
