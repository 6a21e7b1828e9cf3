//! Triangle complexes with edge gluings: closed flat cone spheres and flat domains.
//!
//! Every triangle is stored counterclockwise in its own chart. Edge `i` of a face runs
//! from vertex `i` to vertex `i + 1`. A gluing of `(f, e)` with `(g, e')` identifies the
//! segment of `f` with the reversed segment of `g`, so the isometry from chart `f` to
//! chart `g` sends `p_f[e] ↦ p_g[e'+1]` and `p_f[e+1] ↦ p_g[e']`.
//!
//! Vertices are the equivalence classes of corners under the gluings. Each carries a
//! user label and its angular coordinate system: `corner_offset[f][i]` is the angle,
//! measured counterclockwise inside the cone, from the vertex's reference ray to the
//! first ray (edge `i`) of corner `(f, i)`.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{corner_angle, orient, triangle_area, Iso, Vec2, TAU};

pub const DEFAULT_TOL: f64 = 1e-9;

/// Labels from here up mark temporary vertices.
pub(crate) const PLACEHOLDER: usize = 1 << 48;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurfaceError {
    #[error("edges {a:?} and {b:?} have lengths {len_a} and {len_b} (tolerance {tol})")]
    NonMatchingGluing { a: HalfEdge, b: HalfEdge, len_a: f64, len_b: f64, tol: f64 },
    #[error("complex is not a sphere: Euler characteristic {euler}, {components} component(s), {boundary_edges} boundary edge(s)")]
    NotASphere { euler: i64, components: usize, boundary_edges: usize },
    #[error("complex is not a closed disk: Euler characteristic {euler}, {boundary_loops} boundary loop(s)")]
    NotADisk { euler: i64, boundary_loops: usize },
    #[error("face {face} is degenerate: {detail} (tolerance {tol})")]
    DegenerateFace { face: usize, detail: String, tol: f64 },
    #[error("invalid gluing: {0}")]
    InvalidGluing(String),
    #[error("inconsistent vertex labels: {0}")]
    InconsistentLabels(String),
    #[error("corridor is broken at step {step}: edge {edge} of face {face} does not lead to face {next}")]
    BrokenCorridor { step: usize, face: usize, edge: usize, next: usize },
    #[error("malformed surface file: {0}")]
    Parse(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HalfEdge {
    pub face: usize,
    pub edge: usize,
}

impl HalfEdge {
    pub fn new(face: usize, edge: usize) -> Self {
        HalfEdge { face, edge }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EuclideanTriangle {
    pub face_id: usize,
    pub vertices: [Vec2; 3],
    pub labels: [usize; 3],
}

impl EuclideanTriangle {
    pub fn new(face_id: usize, vertices: [Vec2; 3], labels: [usize; 3]) -> Self {
        EuclideanTriangle { face_id, vertices, labels }
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        self.vertices[e].dist(self.vertices[(e + 1) % 3])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeGluing {
    pub side_a: HalfEdge,
    pub side_b: HalfEdge,
    /// Chart of `side_a`'s face to chart of `side_b`'s face.
    pub isometry: Iso,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConePoint {
    pub label: usize,
    /// Total angle; for a boundary vertex of a domain this is the interior corner angle.
    pub angle: f64,
    /// `(2π − angle) / 2π`. Not meaningful on boundary vertices.
    pub curvature: f64,
    pub on_boundary: bool,
}

/// A triangle complex, closed or with boundary.
#[derive(Clone, Debug)]
pub struct Complex {
    pub(crate) tris: Vec<EuclideanTriangle>,
    pub(crate) adj: Vec<[Option<HalfEdge>; 3]>,
    pub(crate) glue: Vec<[Iso; 3]>,
    pub(crate) vert: Vec<[usize; 3]>,
    pub(crate) angles: Vec<[f64; 3]>,
    pub(crate) offsets: Vec<[f64; 3]>,
    /// Corners of each vertex in counterclockwise order.
    pub(crate) fans: Vec<Vec<(usize, usize)>>,
    pub cone_points: Vec<ConePoint>,
    pub(crate) area: f64,
    pub(crate) tol: f64,
    pub(crate) euler: i64,
    pub(crate) components: usize,
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu((0..n).collect())
    }
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let n = self.0[y];
            self.0[y] = r;
            y = n;
        }
        r
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

impl Complex {
    /// Assemble a complex. Faces are renumbered by position; gluings refer to positions.
    pub fn new(
        tris: Vec<EuclideanTriangle>,
        gluings: &[(HalfEdge, HalfEdge)],
        tol: f64,
    ) -> Result<Complex, SurfaceError> {
        let nf = tris.len();
        let mut tris = tris;
        for (i, t) in tris.iter_mut().enumerate() {
            t.face_id = i;
        }
        for (f, t) in tris.iter().enumerate() {
            let p = &t.vertices;
            let longest = (0..3).map(|e| t.edge_length(e)).fold(0.0, f64::max);
            for e in 0..3 {
                if t.edge_length(e) <= tol {
                    return Err(SurfaceError::DegenerateFace {
                        face: f,
                        detail: format!("edge {e} has zero length"),
                        tol,
                    });
                }
            }
            let a2 = orient(p[0], p[1], p[2]);
            if a2 <= 0.0 || a2 / longest <= tol {
                return Err(SurfaceError::DegenerateFace {
                    face: f,
                    detail: format!("signed area {} is not positive", 0.5 * a2),
                    tol,
                });
            }
        }
        let mut adj: Vec<[Option<HalfEdge>; 3]> = vec![[None; 3]; nf];
        for &(a, b) in gluings {
            if a.face >= nf || b.face >= nf || a.edge > 2 || b.edge > 2 {
                return Err(SurfaceError::InvalidGluing(format!("{a:?} ↔ {b:?} out of range")));
            }
            if a == b {
                return Err(SurfaceError::InvalidGluing(format!("{a:?} glued to itself")));
            }
            for s in [a, b] {
                if adj[s.face][s.edge].is_some() {
                    return Err(SurfaceError::InvalidGluing(format!("{s:?} glued twice")));
                }
            }
            let la = tris[a.face].edge_length(a.edge);
            let lb = tris[b.face].edge_length(b.edge);
            if (la - lb).abs() > tol {
                return Err(SurfaceError::NonMatchingGluing { a, b, len_a: la, len_b: lb, tol });
            }
            adj[a.face][a.edge] = Some(b);
            adj[b.face][b.edge] = Some(a);
        }
        Complex::from_adjacency(tris, adj, tol)
    }

    /// Like `from_adjacency`, but vertex classes whose corners disagree on a label, or
    /// that share a label with another class, get fresh labels. Labels at or above
    /// `PLACEHOLDER` never survive. Fresh labels start at `first_fresh` or above.
    pub(crate) fn assemble(
        mut tris: Vec<EuclideanTriangle>,
        adj: Vec<[Option<HalfEdge>; 3]>,
        tol: f64,
        first_fresh: usize,
    ) -> Result<Complex, SurfaceError> {
        let nf = tris.len();
        let mut dsu = Dsu::new(3 * nf);
        for f in 0..nf {
            for e in 0..3 {
                if let Some(h) = adj[f][e] {
                    dsu.union(3 * f + e, 3 * h.face + (h.edge + 1) % 3);
                    dsu.union(3 * f + (e + 1) % 3, 3 * h.face + h.edge);
                }
            }
        }
        let mut class_labels: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for f in 0..nf {
            for i in 0..3 {
                class_labels.entry(dsu.find(3 * f + i)).or_default().push(tris[f].labels[i]);
            }
        }
        let mut next = tris
            .iter()
            .flat_map(|t| t.labels)
            .filter(|&l| l < PLACEHOLDER)
            .map(|l| l + 1)
            .max()
            .unwrap_or(0)
            .max(first_fresh);
        let mut claimed = std::collections::HashSet::new();
        let mut chosen: HashMap<usize, usize> = HashMap::new();
        for (&r, ls) in &class_labels {
            let l = ls[0];
            let keep = l < PLACEHOLDER && ls.iter().all(|&x| x == l) && claimed.insert(l);
            let l = if keep {
                l
            } else {
                next += 1;
                next - 1
            };
            chosen.insert(r, l);
        }
        for f in 0..nf {
            for i in 0..3 {
                tris[f].labels[i] = chosen[&dsu.find(3 * f + i)];
            }
        }
        Complex::from_adjacency(tris, adj, tol)
    }

    pub(crate) fn from_adjacency(
        tris: Vec<EuclideanTriangle>,
        adj: Vec<[Option<HalfEdge>; 3]>,
        tol: f64,
    ) -> Result<Complex, SurfaceError> {
        let nf = tris.len();
        let mut glue = vec![[Iso::IDENTITY; 3]; nf];
        let mut dsu = Dsu::new(3 * nf);
        let mut faces = Dsu::new(nf);
        let mut boundary_edges = 0usize;
        for f in 0..nf {
            for e in 0..3 {
                match adj[f][e] {
                    Some(h) => {
                        let p = &tris[f].vertices;
                        let q = &tris[h.face].vertices;
                        glue[f][e] = Iso::segment_map(p[e], p[(e + 1) % 3], q[(h.edge + 1) % 3], q[h.edge]);
                        dsu.union(3 * f + e, 3 * h.face + (h.edge + 1) % 3);
                        dsu.union(3 * f + (e + 1) % 3, 3 * h.face + h.edge);
                        faces.union(f, h.face);
                    }
                    None => boundary_edges += 1,
                }
            }
        }
        // Vertex classes, ordered by label.
        let mut class_label: BTreeMap<usize, usize> = BTreeMap::new();
        for f in 0..nf {
            for i in 0..3 {
                let r = dsu.find(3 * f + i);
                let l = tris[f].labels[i];
                match class_label.get(&r) {
                    Some(&l0) if l0 != l => {
                        return Err(SurfaceError::InconsistentLabels(format!(
                            "one vertex carries labels {l0} and {l}"
                        )))
                    }
                    _ => {
                        class_label.insert(r, l);
                    }
                }
            }
        }
        let mut by_label: BTreeMap<usize, usize> = BTreeMap::new();
        for (&r, &l) in &class_label {
            if by_label.insert(l, r).is_some() {
                return Err(SurfaceError::InconsistentLabels(format!(
                    "label {l} is used by two distinct vertices"
                )));
            }
        }
        let root_to_index: HashMap<usize, usize> =
            by_label.values().enumerate().map(|(i, &r)| (r, i)).collect();
        let mut vert = vec![[0usize; 3]; nf];
        let mut angles = vec![[0.0; 3]; nf];
        let mut area = 0.0;
        for f in 0..nf {
            for i in 0..3 {
                vert[f][i] = root_to_index[&dsu.find(3 * f + i)];
                angles[f][i] = corner_angle(&tris[f].vertices, i);
            }
            area += triangle_area(&tris[f].vertices);
        }
        let nv = by_label.len();
        let mut members: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nv];
        for f in 0..nf {
            for i in 0..3 {
                members[vert[f][i]].push((f, i));
            }
        }
        let mut offsets = vec![[0.0; 3]; nf];
        let mut fans = Vec::with_capacity(nv);
        let mut cone_points = Vec::with_capacity(nv);
        for (v, label) in by_label.keys().enumerate() {
            let corners = &members[v];
            // Start at a corner whose clockwise neighbour is missing, if any.
            let start = corners
                .iter()
                .copied()
                .find(|&(f, i)| adj[f][i].is_none())
                .unwrap_or(corners[0]);
            let on_boundary = adj[start.0][start.1].is_none();
            let mut fan = vec![start];
            let mut acc = 0.0;
            let (mut f, mut i) = start;
            loop {
                offsets[f][i] = acc;
                acc += angles[f][i];
                match adj[f][(i + 2) % 3] {
                    None => break,
                    Some(h) => {
                        if (h.face, h.edge) == start {
                            break;
                        }
                        f = h.face;
                        i = h.edge;
                        fan.push((f, i));
                    }
                }
                if fan.len() > corners.len() {
                    break;
                }
            }
            if fan.len() != corners.len() {
                return Err(SurfaceError::InvalidGluing(format!(
                    "vertex {label} has a non-manifold link ({} of {} corners reachable)",
                    fan.len(),
                    corners.len()
                )));
            }
            cone_points.push(ConePoint {
                label: *label,
                angle: acc,
                curvature: (TAU - acc) / TAU,
                on_boundary,
            });
            fans.push(fan);
        }
        let mut roots = std::collections::HashSet::new();
        for f in 0..nf {
            roots.insert(faces.find(f));
        }
        let edges = (3 * nf + boundary_edges) / 2;
        let euler = nv as i64 - edges as i64 + nf as i64;
        Ok(Complex {
            tris,
            adj,
            glue,
            vert,
            angles,
            offsets,
            fans,
            cone_points,
            area,
            tol,
            euler,
            components: roots.len(),
        })
    }

    pub fn num_faces(&self) -> usize {
        self.tris.len()
    }

    pub fn triangles(&self) -> &[EuclideanTriangle] {
        &self.tris
    }

    pub fn triangle(&self, f: usize) -> &EuclideanTriangle {
        &self.tris[f]
    }

    pub fn points(&self, f: usize) -> &[Vec2; 3] {
        &self.tris[f].vertices
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.euler
    }

    pub fn num_vertices(&self) -> usize {
        self.cone_points.len()
    }

    pub fn neighbor(&self, f: usize, e: usize) -> Option<HalfEdge> {
        self.adj[f][e]
    }

    /// Chart of `f` to chart of the face across edge `e`.
    pub fn gluing_iso(&self, f: usize, e: usize) -> Iso {
        self.glue[f][e]
    }

    /// Vertex index (into `cone_points`) of corner `(f, i)`.
    pub fn vertex(&self, f: usize, i: usize) -> usize {
        self.vert[f][i]
    }

    pub fn label(&self, v: usize) -> usize {
        self.cone_points[v].label
    }

    pub fn vertex_by_label(&self, label: usize) -> Option<usize> {
        self.cone_points.iter().position(|c| c.label == label)
    }

    pub fn corner_angle(&self, f: usize, i: usize) -> f64 {
        self.angles[f][i]
    }

    pub fn corner_offset(&self, f: usize, i: usize) -> f64 {
        self.offsets[f][i]
    }

    pub fn fan(&self, v: usize) -> &[(usize, usize)] {
        &self.fans[v]
    }

    pub fn edge_length(&self, f: usize, e: usize) -> f64 {
        self.tris[f].edge_length(e)
    }

    pub fn is_closed(&self) -> bool {
        self.adj.iter().all(|a| a.iter().all(|h| h.is_some()))
    }

    /// Every gluing once, with `side_a < side_b`.
    pub fn gluings(&self) -> Vec<EdgeGluing> {
        let mut out = Vec::new();
        for f in 0..self.tris.len() {
            for e in 0..3 {
                if let Some(h) = self.adj[f][e] {
                    let a = HalfEdge::new(f, e);
                    if a < h {
                        out.push(EdgeGluing { side_a: a, side_b: h, isometry: self.glue[f][e] });
                    }
                }
            }
        }
        out
    }

    /// Undirected edges, each represented by its smaller half-edge.
    pub fn edges(&self) -> Vec<HalfEdge> {
        let mut out = Vec::new();
        for f in 0..self.tris.len() {
            for e in 0..3 {
                let a = HalfEdge::new(f, e);
                match self.adj[f][e] {
                    Some(h) if h < a => {}
                    _ => out.push(a),
                }
            }
        }
        out
    }

    /// Unit vector along the first ray (edge `i`) of corner `(f, i)`.
    pub fn corner_ray(&self, f: usize, i: usize) -> Vec2 {
        let p = self.points(f);
        (p[(i + 1) % 3] - p[i]).unit()
    }

    /// Corner containing absolute angle `a` at vertex `v`, with the angle measured inside it.
    /// The first ray of a corner belongs to it; the last ray belongs to the next corner.
    pub fn corner_at_angle(&self, v: usize, a: f64) -> (usize, usize, f64) {
        let fan = &self.fans[v];
        let total = self.cone_points[v].angle;
        if self.cone_points[v].on_boundary {
            let a = a.clamp(0.0, total);
            let mut best = fan[0];
            for &(f, i) in fan {
                if self.offsets[f][i] <= a {
                    best = (f, i);
                }
            }
            let (f, i) = best;
            return (f, i, (a - self.offsets[f][i]).clamp(0.0, self.angles[f][i]));
        }
        let a = a.rem_euclid(total);
        // Offsets need not start at zero after flips; the corner with the largest offset
        // not exceeding `a` wins, wrapping to the largest offset overall.
        let mut best: Option<(usize, usize)> = None;
        let mut last = fan[0];
        for &(f, i) in fan {
            let o = self.offsets[f][i];
            if o <= a && best.map_or(true, |(g, j)| self.offsets[g][j] < o) {
                best = Some((f, i));
            }
            if o > self.offsets[last.0][last.1] {
                last = (f, i);
            }
        }
        let (f, i) = best.unwrap_or(last);
        let phi = (a - self.offsets[f][i]).rem_euclid(total);
        (f, i, phi.min(self.angles[f][i]))
    }

    /// Absolute angle at the vertex of corner `(f, i)` of a direction `d` pointing into it.
    pub fn absolute_angle(&self, f: usize, i: usize, d: Vec2) -> f64 {
        let v = self.vert[f][i];
        let mut phi = self.angle_in_corner(f, i, d);
        if phi > self.angles[f][i] {
            // Slightly outside on either side: snap to the nearer ray.
            phi = if phi - self.angles[f][i] < TAU - phi { self.angles[f][i] } else { 0.0 };
        }
        let a = self.offsets[f][i] + phi;
        if self.cone_points[v].on_boundary {
            a
        } else {
            a.rem_euclid(self.cone_points[v].angle)
        }
    }

    /// Replace the angular coordinates, re-sorting each fan by offset.
    pub(crate) fn set_offsets(&mut self, offsets: Vec<[f64; 3]>) {
        self.offsets = offsets;
        for (v, fan) in self.fans.iter_mut().enumerate() {
            if self.cone_points[v].on_boundary {
                continue;
            }
            let o = &self.offsets;
            fan.sort_by(|&(f, i), &(g, j)| o[f][i].partial_cmp(&o[g][j]).unwrap());
        }
    }

    /// Direction (in the chart of `f`) making angle `phi` counterclockwise from edge `i`.
    pub fn direction_in_corner(&self, f: usize, i: usize, phi: f64) -> Vec2 {
        self.corner_ray(f, i).rotate(phi)
    }

    /// Angle of direction `d` measured from the first ray of corner `(f, i)`.
    pub fn angle_in_corner(&self, f: usize, i: usize, d: Vec2) -> f64 {
        let r = self.corner_ray(f, i);
        crate::geom::signed_angle(r, d).rem_euclid(TAU)
    }

    /// Barycentric-free containment test with tolerance.
    pub fn contains(&self, f: usize, p: Vec2) -> bool {
        let q = self.points(f);
        (0..3).all(|e| {
            let a = q[e];
            let b = q[(e + 1) % 3];
            orient(a, b, p) / a.dist(b) >= -self.tol
        })
    }

    pub fn scaled(&self, s: f64) -> Complex {
        let tris = self
            .tris
            .iter()
            .map(|t| EuclideanTriangle {
                face_id: t.face_id,
                vertices: [t.vertices[0] * s, t.vertices[1] * s, t.vertices[2] * s],
                labels: t.labels,
            })
            .collect();
        Complex::from_adjacency(tris, self.adj.clone(), self.tol).expect("scaling preserves validity")
    }

    pub fn with_tol(mut self, tol: f64) -> Complex {
        self.tol = tol;
        self
    }

    /// The smallest label not yet in use.
    pub fn fresh_label(&self) -> usize {
        self.cone_points.iter().map(|c| c.label + 1).max().unwrap_or(0)
    }
}

/// A closed genus-0 flat cone surface.
#[derive(Clone, Debug)]
pub struct FlatConeSurface {
    complex: Complex,
}

impl std::ops::Deref for FlatConeSurface {
    type Target = Complex;
    fn deref(&self) -> &Complex {
        &self.complex
    }
}

impl std::ops::DerefMut for FlatConeSurface {
    fn deref_mut(&mut self) -> &mut Complex {
        &mut self.complex
    }
}

impl FlatConeSurface {
    pub fn complex(&self) -> &Complex {
        &self.complex
    }

    pub fn into_complex(self) -> Complex {
        self.complex
    }

    pub fn genus(&self) -> usize {
        0
    }

    pub fn curvatures(&self) -> Vec<f64> {
        self.cone_points.iter().map(|c| c.curvature).collect()
    }

    pub fn n(&self) -> usize {
        self.cone_points.len()
    }

    pub fn from_complex(c: Complex) -> Result<FlatConeSurface, SurfaceError> {
        let boundary = c.adj.iter().flatten().filter(|h| h.is_none()).count();
        if boundary > 0 || c.components != 1 || c.euler != 2 {
            return Err(SurfaceError::NotASphere {
                euler: c.euler,
                components: c.components,
                boundary_edges: boundary,
            });
        }
        Ok(FlatConeSurface { complex: c })
    }

    /// Rescale so that the area is one.
    pub fn normalized(&self) -> FlatConeSurface {
        let s = 1.0 / self.area.sqrt();
        FlatConeSurface { complex: self.complex.scaled(s) }
    }

    pub fn scaled(&self, s: f64) -> FlatConeSurface {
        FlatConeSurface { complex: self.complex.scaled(s) }
    }
}

/// Glue triangles into a flat cone sphere. Gluings refer to triangle `face_id`s.
pub fn build_from_triangles(
    triangles: Vec<EuclideanTriangle>,
    gluings: &[(HalfEdge, HalfEdge)],
) -> Result<FlatConeSurface, SurfaceError> {
    build_with_tol(triangles, gluings, DEFAULT_TOL)
}

pub fn build_with_tol(
    triangles: Vec<EuclideanTriangle>,
    gluings: &[(HalfEdge, HalfEdge)],
    tol: f64,
) -> Result<FlatConeSurface, SurfaceError> {
    let index: HashMap<usize, usize> =
        triangles.iter().enumerate().map(|(i, t)| (t.face_id, i)).collect();
    if index.len() != triangles.len() {
        return Err(SurfaceError::InvalidGluing("duplicate face id".into()));
    }
    let mut mapped = Vec::with_capacity(gluings.len());
    for &(a, b) in gluings {
        let fa = *index
            .get(&a.face)
            .ok_or_else(|| SurfaceError::InvalidGluing(format!("unknown face {}", a.face)))?;
        let fb = *index
            .get(&b.face)
            .ok_or_else(|| SurfaceError::InvalidGluing(format!("unknown face {}", b.face)))?;
        mapped.push((HalfEdge::new(fa, a.edge), HalfEdge::new(fb, b.edge)));
    }
    let c = Complex::new(triangles, &mapped, tol)?;
    FlatConeSurface::from_complex(c)
}

/// `min over subsets I of |1 − Σ_{i∈I, k_i<1} k_i|`.
pub fn curvature_gap(curvatures: &[f64]) -> f64 {
    let mut ks: Vec<f64> = curvatures.iter().copied().filter(|&k| k < 1.0).collect();
    // Sorted so that rounding does not depend on the input order.
    ks.sort_by(f64::total_cmp);
    if ks.len() <= 24 {
        let mut best: f64 = 1.0;
        let n = ks.len();
        // Gray-code walk keeps the running sum to one addition per subset.
        let mut sum = 0.0;
        let mut mask = 0u32;
        for i in 1u32..(1u32 << n) {
            let bit = i.trailing_zeros() as usize;
            if mask & (1 << bit) != 0 {
                sum -= ks[bit];
            } else {
                sum += ks[bit];
            }
            mask ^= 1 << bit;
            best = best.min((1.0 - sum).abs());
        }
        best
    } else {
        let (a, b) = ks.split_at(ks.len() / 2);
        let sums = |xs: &[f64]| {
            let mut s = vec![0.0];
            for &x in xs {
                let add: Vec<f64> = s.iter().map(|v| v + x).collect();
                s.extend(add);
            }
            s
        };
        let sa = sums(a);
        let mut sb = sums(b);
        sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut best: f64 = 1.0;
        for x in sa {
            let target = 1.0 - x;
            let j = sb.partition_point(|&y| y < target);
            for k in [j.wrapping_sub(1), j] {
                if let Some(&y) = sb.get(k) {
                    best = best.min((1.0 - x - y).abs());
                }
            }
        }
        best
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub tolerance: f64,
    pub gauss_bonnet_residual: f64,
    pub angle_residuals: Vec<(usize, f64)>,
    pub curvature_residuals: Vec<(usize, f64)>,
    pub euler_characteristic: i64,
    pub connected: bool,
    pub failures: Vec<String>,
}

/// Check the stored cone data against the geometry of the triangles.
pub fn validate(surface: &FlatConeSurface) -> ValidationReport {
    let tol = surface.tol;
    let mut failures = Vec::new();
    let ksum: f64 = surface.cone_points.iter().map(|c| c.curvature).sum();
    let gb = (ksum - (2.0 - 2.0 * surface.genus() as f64)).abs();
    if gb >= tol {
        failures.push(format!("Gauss-Bonnet residual {gb:e} exceeds tolerance {tol:e}"));
    }
    let mut angle_residuals = Vec::new();
    let mut curvature_residuals = Vec::new();
    for (v, cp) in surface.cone_points.iter().enumerate() {
        let sum: f64 = surface.fans[v].iter().map(|&(f, i)| surface.angles[f][i]).sum();
        let r = (sum - cp.angle).abs();
        if r >= tol {
            failures.push(format!("vertex {} angle residual {r:e} exceeds tolerance {tol:e}", cp.label));
        }
        angle_residuals.push((cp.label, r));
        let rk = (cp.curvature - (TAU - cp.angle) / TAU).abs();
        if rk >= tol {
            failures.push(format!("vertex {} curvature residual {rk:e} exceeds tolerance {tol:e}", cp.label));
        }
        curvature_residuals.push((cp.label, rk));
    }
    if surface.euler != 2 {
        failures.push(format!("Euler characteristic {} is not 2", surface.euler));
    }
    if surface.components != 1 {
        failures.push(format!("{} connected components", surface.components));
    }
    ValidationReport {
        pass: failures.is_empty(),
        tolerance: tol,
        gauss_bonnet_residual: gb,
        angle_residuals,
        curvature_residuals,
        euler_characteristic: surface.euler,
        connected: surface.components == 1,
        failures,
    }
}

/// Faces visited in order; `edges[i]` is the local edge of `faces[i]` crossed into `faces[i+1]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Corridor {
    pub faces: Vec<usize>,
    pub edges: Vec<usize>,
}

impl Corridor {
    pub fn single(face: usize) -> Self {
        Corridor { faces: vec![face], edges: vec![] }
    }

    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Placement {
    pub face: usize,
    /// Chart of `face` to the developing plane.
    pub iso: Iso,
    pub vertices: [Vec2; 3],
}

/// Lay the faces of a corridor out in the plane of the first face's chart.
pub fn develop(c: &Complex, corridor: &Corridor) -> Result<Vec<Placement>, SurfaceError> {
    let mut out = Vec::with_capacity(corridor.faces.len());
    let mut iso = Iso::IDENTITY;
    for (step, &f) in corridor.faces.iter().enumerate() {
        if step > 0 {
            let prev = corridor.faces[step - 1];
            let e = corridor.edges[step - 1];
            match c.adj[prev][e] {
                Some(h) if h.face == f => {
                    // chart(f) → chart(prev) is the inverse of the stored gluing.
                    iso = iso.compose(&c.glue[prev][e].inverse()).normalized();
                }
                _ => return Err(SurfaceError::BrokenCorridor { step, face: prev, edge: e, next: f }),
            }
        }
        let p = c.points(f);
        out.push(Placement { face: f, iso, vertices: [iso.apply(p[0]), iso.apply(p[1]), iso.apply(p[2])] });
    }
    Ok(out)
}

/// Corridor that walks counterclockwise around the vertex of corner `(f, i)` through
/// `turns` full turns.
pub fn loop_around_vertex(c: &Complex, f: usize, i: usize, turns: usize) -> Corridor {
    let v = c.vert[f][i];
    let fan = &c.fans[v];
    let start = fan.iter().position(|&x| x == (f, i)).unwrap();
    let mut faces = vec![f];
    let mut edges = Vec::new();
    let total = fan.len() * turns;
    for k in 0..total {
        let (g, j) = fan[(start + k) % fan.len()];
        let e = (j + 2) % 3;
        let h = c.adj[g][e].expect("closed vertex");
        edges.push(e);
        faces.push(h.face);
    }
    Corridor { faces, edges }
}
