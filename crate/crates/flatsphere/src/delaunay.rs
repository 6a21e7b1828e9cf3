//! Delaunay triangulations by edge flips, edge widths and circumradii.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{circumradius, corner_angle, orient, segment_distance, Iso, Vec2};
use crate::surface::{Complex, EuclideanTriangle, FlatConeSurface, HalfEdge, SurfaceError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DelaunayError {
    #[error("a Delaunay triangulation needs at least 3 cone points, found {0}")]
    NotEnoughVertices(usize),
    #[error("flip cap of {cap} flips reached; the tolerance is probably too tight")]
    FlipNonTermination { cap: usize },
    #[error(transparent)]
    Surface(#[from] SurfaceError),
}

/// Slack on the opposite-angle condition.
pub const ANGLE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeInfo {
    pub edge: HalfEdge,
    pub endpoints: (usize, usize),
    pub length: f64,
    pub width: f64,
    pub opposite_angle_sum: f64,
    pub delaunay: bool,
}

#[derive(Clone, Debug)]
pub struct Triangulation {
    pub surface: FlatConeSurface,
    pub flips: usize,
    pub edges: Vec<EdgeInfo>,
    pub circumradii: Vec<f64>,
}

impl Triangulation {
    pub fn complex(&self) -> &Complex {
        self.surface.complex()
    }

    /// `d(T)`, the smallest edge width.
    pub fn width(&self) -> f64 {
        self.edges.iter().map(|e| e.width).fold(f64::INFINITY, f64::min)
    }

    /// `R(T)`, the largest circumradius.
    pub fn max_circumradius(&self) -> f64 {
        self.circumradii.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_delaunay(&self) -> bool {
        self.edges.iter().all(|e| e.delaunay)
    }

    pub fn shortest_edge(&self) -> f64 {
        self.edges.iter().map(|e| e.length).fold(f64::INFINITY, f64::min)
    }
}

/// Sum of the two angles facing the edge, or `None` on a boundary edge.
pub fn opposite_angle_sum(c: &Complex, f: usize, e: usize) -> Option<f64> {
    let h = c.neighbor(f, e)?;
    Some(c.corner_angle(f, (e + 2) % 3) + c.corner_angle(h.face, (h.edge + 2) % 3))
}

/// The two faces of an edge laid out in the chart of `f`: `[A, D, B, C]` counterclockwise,
/// where `A → B` is the edge, `C` is opposite in `f` and `D` opposite in the neighbour.
pub fn quadrilateral(c: &Complex, f: usize, e: usize) -> Option<[Vec2; 4]> {
    let h = c.neighbor(f, e)?;
    let p = c.points(f);
    let back = c.gluing_iso(f, e).inverse();
    let d = back.apply(c.points(h.face)[(h.edge + 2) % 3]);
    Some([p[e], d, p[(e + 1) % 3], p[(e + 2) % 3]])
}

/// `d(e)`: the smaller distance between the two pairs of opposite sides of `Q(e)`.
pub fn edge_width(c: &Complex, f: usize, e: usize) -> f64 {
    match quadrilateral(c, f, e) {
        Some([a, d, b, cc]) => segment_distance(a, d, b, cc).min(segment_distance(d, b, cc, a)),
        None => {
            // Boundary edge: distance to the opposite vertex.
            let p = c.points(f);
            crate::geom::point_segment_distance(p[(e + 2) % 3], p[e], p[(e + 1) % 3])
        }
    }
}

pub fn max_circumradius(c: &Complex) -> f64 {
    (0..c.num_faces()).map(|f| circumradius(c.points(f))).fold(0.0, f64::max)
}

pub fn width(c: &Complex) -> f64 {
    c.edges().into_iter().map(|h| edge_width(c, h.face, h.edge)).fold(f64::INFINITY, f64::min)
}

/// Mutable triangle soup used while flipping.
struct Mesh {
    tris: Vec<EuclideanTriangle>,
    adj: Vec<[Option<HalfEdge>; 3]>,
    offsets: Vec<[f64; 3]>,
    label_total: std::collections::HashMap<usize, f64>,
}

impl Mesh {
    fn glue(&self, f: usize, e: usize) -> Iso {
        let h = self.adj[f][e].unwrap();
        let p = &self.tris[f].vertices;
        let q = &self.tris[h.face].vertices;
        Iso::segment_map(p[e], p[(e + 1) % 3], q[(h.edge + 1) % 3], q[h.edge])
    }

    fn angle(&self, f: usize, i: usize) -> f64 {
        corner_angle(&self.tris[f].vertices, i)
    }

    fn excess(&self, f: usize, e: usize) -> Option<f64> {
        let h = self.adj[f][e]?;
        if h.face == f {
            return None;
        }
        Some(self.angle(f, (e + 2) % 3) + self.angle(h.face, (h.edge + 2) % 3) - PI)
    }

    fn wrap(&self, label: usize, a: f64) -> f64 {
        let t = self.label_total[&label];
        a.rem_euclid(t)
    }

    /// Replace the edge `(f, e)` by the other diagonal of its quadrilateral.
    fn flip(&mut self, f: usize, e: usize) -> bool {
        let Some(h) = self.adj[f][e] else { return false };
        let g = h.face;
        if g == f {
            return false;
        }
        let ep = h.edge;
        let p = self.tris[f].vertices;
        let lf = self.tris[f].labels;
        let lg = self.tris[g].labels;
        let (a, b, cc) = (p[e], p[(e + 1) % 3], p[(e + 2) % 3]);
        let d = self.glue(f, e).inverse().apply(self.tris[g].vertices[(ep + 2) % 3]);
        let (la, lb, lc, ld) = (lf[e], lf[(e + 1) % 3], lf[(e + 2) % 3], lg[(ep + 2) % 3]);
        if orient(cc, a, d) <= 0.0 || orient(d, b, cc) <= 0.0 {
            return false;
        }
        let of = self.offsets[f];
        let og = self.offsets[g];
        let t1 = [cc, a, d];
        let t2 = [d, b, cc];
        let new_f = [
            of[(e + 2) % 3],
            og[(ep + 1) % 3],
            self.wrap(ld, og[(ep + 2) % 3] + corner_angle(&t2, 0)),
        ];
        let new_g = [og[(ep + 2) % 3], of[(e + 1) % 3], self.wrap(lc, of[(e + 2) % 3] + corner_angle(&t1, 0))];
        // Old half-edges that survive, and where they go.
        let remap = |x: HalfEdge| -> HalfEdge {
            if x == HalfEdge::new(f, (e + 2) % 3) {
                HalfEdge::new(f, 0)
            } else if x == HalfEdge::new(g, (ep + 1) % 3) {
                HalfEdge::new(f, 1)
            } else if x == HalfEdge::new(g, (ep + 2) % 3) {
                HalfEdge::new(g, 0)
            } else if x == HalfEdge::new(f, (e + 1) % 3) {
                HalfEdge::new(g, 1)
            } else {
                x
            }
        };
        let outer = [
            (HalfEdge::new(f, 0), self.adj[f][(e + 2) % 3]),
            (HalfEdge::new(f, 1), self.adj[g][(ep + 1) % 3]),
            (HalfEdge::new(g, 0), self.adj[g][(ep + 2) % 3]),
            (HalfEdge::new(g, 1), self.adj[f][(e + 1) % 3]),
        ];
        let outer: Vec<(HalfEdge, Option<HalfEdge>)> = outer.iter().map(|&(s, n)| (s, n.map(remap))).collect();
        self.tris[f] = EuclideanTriangle::new(self.tris[f].face_id, t1, [lc, la, ld]);
        self.tris[g] = EuclideanTriangle::new(self.tris[g].face_id, t2, [ld, lb, lc]);
        self.offsets[f] = new_f;
        self.offsets[g] = new_g;
        self.adj[f] = [None; 3];
        self.adj[g] = [None; 3];
        for (s, n) in outer {
            self.adj[s.face][s.edge] = n;
            if let Some(n) = n {
                self.adj[n.face][n.edge] = Some(s);
            }
        }
        self.adj[f][2] = Some(HalfEdge::new(g, 2));
        self.adj[g][2] = Some(HalfEdge::new(f, 2));
        true
    }
}

/// Flip until every interior edge satisfies the opposite-angle condition. Returns the
/// new complex, with angular coordinates carried over, and the number of flips.
pub fn delaunay_complex(c: &Complex) -> Result<(Complex, usize), DelaunayError> {
    let nf = c.num_faces();
    let mut label_total = std::collections::HashMap::new();
    for cp in &c.cone_points {
        label_total.insert(cp.label, if cp.on_boundary { f64::INFINITY } else { cp.angle });
    }
    let mut mesh = Mesh {
        tris: c.triangles().to_vec(),
        adj: (0..nf).map(|f| [c.neighbor(f, 0), c.neighbor(f, 1), c.neighbor(f, 2)]).collect(),
        offsets: (0..nf).map(|f| [c.corner_offset(f, 0), c.corner_offset(f, 1), c.corner_offset(f, 2)]).collect(),
        label_total,
    };
    let edges = c.edges().len();
    let cap = 10 * edges * edges;
    let mut flips = 0;
    let mut blocked = std::collections::HashSet::new();
    loop {
        let mut worst: Option<(f64, usize, usize)> = None;
        for f in 0..nf {
            for e in 0..3 {
                let Some(h) = mesh.adj[f][e] else { continue };
                if h < HalfEdge::new(f, e) || blocked.contains(&(f, e)) {
                    continue;
                }
                if let Some(x) = mesh.excess(f, e) {
                    if x > ANGLE_TOL && worst.map_or(true, |w| x > w.0) {
                        worst = Some((x, f, e));
                    }
                }
            }
        }
        let Some((_, f, e)) = worst else { break };
        if mesh.flip(f, e) {
            flips += 1;
            blocked.clear();
        } else {
            blocked.insert((f, e));
        }
        if flips > cap {
            return Err(DelaunayError::FlipNonTermination { cap });
        }
    }
    let mut out = Complex::from_adjacency(mesh.tris, mesh.adj, c.tol())?;
    out.set_offsets(mesh.offsets);
    Ok((out, flips))
}

pub fn delaunay_triangulation(s: &FlatConeSurface) -> Result<Triangulation, DelaunayError> {
    if s.n() < 3 {
        return Err(DelaunayError::NotEnoughVertices(s.n()));
    }
    let (c, flips) = delaunay_complex(s.complex())?;
    let surface = FlatConeSurface::from_complex(c)?;
    Ok(annotate(surface, flips))
}

/// Cache widths, circumradii and flags for a complex without flipping it.
pub fn annotate(surface: FlatConeSurface, flips: usize) -> Triangulation {
    let c = surface.complex();
    let edges = c
        .edges()
        .into_iter()
        .map(|h| {
            let sum = opposite_angle_sum(c, h.face, h.edge).unwrap_or(0.0);
            EdgeInfo {
                edge: h,
                endpoints: (c.label(c.vertex(h.face, h.edge)), c.label(c.vertex(h.face, (h.edge + 1) % 3))),
                length: c.edge_length(h.face, h.edge),
                width: edge_width(c, h.face, h.edge),
                opposite_angle_sum: sum,
                delaunay: sum <= PI + ANGLE_TOL,
            }
        })
        .collect();
    let circumradii = (0..c.num_faces()).map(|f| circumradius(c.points(f))).collect();
    Triangulation { surface, flips, edges, circumradii }
}

/// `c(n, δ) = √(4/π + 1/(2πδ))`, twice the bound on Delaunay circumradii at unit area.
pub fn delaunay_edge_bound(delta: f64) -> f64 {
    (4.0 / PI + 1.0 / (2.0 * PI * delta)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::tracer::{trace_from_cone, Status};

    #[test]
    fn equilateral_is_delaunay() {
        let s = fixtures::doubled_equilateral();
        let t = delaunay_triangulation(&s).unwrap();
        assert_eq!(t.flips, 0);
        assert!((t.width() - 3f64.sqrt() / 2.0).abs() < 1e-12);
        assert!((t.max_circumradius() - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        for e in &t.edges {
            assert!((e.opposite_angle_sum - 2.0 * PI / 3.0).abs() < 1e-12);
        }
        let n = s.normalized();
        let tn = delaunay_triangulation(&n).unwrap();
        let scale = (2.0 / 3f64.sqrt()).sqrt();
        assert!((tn.max_circumradius() - scale / 3f64.sqrt()).abs() < 1e-12);
        assert!(tn.max_circumradius() < 0.5 * delaunay_edge_bound(1.0 / 3.0));
    }

    #[test]
    fn flips_fix_a_skinny_double() {
        let p = crate::billiards::Polygon::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(4.0, 0.0),
            Vec2::new(4.2, 0.3),
            Vec2::new(0.1, 0.35),
        ])
        .unwrap();
        let s = fixtures::doubled_polygon_surface(&p);
        let t = delaunay_triangulation(&s).unwrap();
        assert!(t.is_delaunay());
        let again = delaunay_triangulation(&t.surface).unwrap();
        assert_eq!(again.flips, 0);
        // Angles and areas are untouched.
        for (a, b) in s.cone_points.iter().zip(&t.surface.cone_points) {
            assert_eq!(a.label, b.label);
            assert!((a.angle - b.angle).abs() < 1e-9);
        }
        assert!((s.area() - t.surface.area()).abs() < 1e-12);
    }

    #[test]
    fn offsets_survive_flips() {
        let p = crate::billiards::Polygon::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(3.0, 0.0),
            Vec2::new(3.3, 0.5),
            Vec2::new(1.0, 0.9),
            Vec2::new(-0.2, 0.4),
        ])
        .unwrap();
        let s = fixtures::doubled_polygon_surface(&p);
        let t = delaunay_triangulation(&s).unwrap();
        assert!(t.flips > 0);
        // The same cone-point ray reaches the same cone point at the same length.
        for v in 0..s.n() {
            for k in 0..7 {
                let a = 0.37 + k as f64 * 0.41;
                let x = trace_from_cone(&s, v, a, 20.0).unwrap();
                let y = trace_from_cone(t.complex(), v, a, 20.0).unwrap();
                assert!((x.length - y.length).abs() < 1e-7, "{} vs {}", x.length, y.length);
                if let (Status::ConePoint { label: l1, .. }, Status::ConePoint { label: l2, .. }) = (&x.end, &y.end) {
                    assert_eq!(l1, l2);
                }
            }
        }
    }

    #[test]
    fn thirty_sixty_ninety_condition() {
        let s = fixtures::doubled_polygon_surface(&fixtures::thirty_sixty_ninety());
        let t = delaunay_triangulation(&s).unwrap();
        for e in &t.edges {
            assert!(e.opposite_angle_sum <= PI + 1e-9);
        }
    }

    #[test]
    fn edge_bound_value() {
        assert!(delaunay_edge_bound(1.0 / 3.0) > 1.32 && delaunay_edge_bound(1.0 / 3.0) < 1.33);
    }
}
