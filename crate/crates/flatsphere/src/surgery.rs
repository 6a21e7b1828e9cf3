//! Convex hulls of cone-point clusters and Thurston surgery.
//!
//! A hull `D` is given by its boundary: a cyclic list of saddle connections with `D` on
//! the left. Surgery cuts `X` along the boundary, removes `D`, and glues in the cone `C_D`
//! over the boundary loop, whose corner angles make every boundary point flat. A pairwise
//! surgery along `γ` is the degenerate hull `[γ, γ⁻¹]`; `C_D` is then the double of the
//! triangle with angles `π(1 − kᵢ − kⱼ)`, `πkᵢ`, `πkⱼ`.

use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::billiards::Polygon;
use crate::enumerator::{enumerate_on_complex, from_trajectory, EnumError, EnumOptions, SaddleConnection};
use crate::geom::{orient, segment_distance, Vec2, TAU};
use crate::infinite::{BoundaryCorner, InfiniteFlatSphere};
use crate::mesh::Soup;
use crate::surface::{Complex, EuclideanTriangle, FlatConeSurface, HalfEdge, SurfaceError, PLACEHOLDER};
use crate::tracer::{canonical, trace, trace_from_cone, Endpoint, Start, Status, SurfacePoint, TraceError};

/// Angular slack for the exterior-angle test.
pub const HULL_ANGLE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurgeryError {
    #[error("cluster curvature {sum} is not below 1")]
    CurvatureTooLarge { sum: f64 },
    #[error("saddle connection is not simple: {0}")]
    NotSimple(String),
    #[error("no convex hull: tightening is forced through cone point {label}")]
    NoHull { label: usize },
    #[error("hulls overlap")]
    OverlappingHulls,
    #[error("hull tightening did not settle after {0} steps")]
    TighteningCap(usize),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Enum(#[from] EnumError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HullCorner {
    pub label: usize,
    pub vertex: usize,
    /// Angle on the hull side, and on the other side.
    pub interior: f64,
    pub exterior: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvexHull {
    /// Labels of the cone points in the hull, boundary and interior.
    pub cluster: Vec<usize>,
    /// Cyclic boundary with the hull on the left; `boundary[k]` starts at `corners[k]`.
    pub boundary: Vec<SaddleConnection>,
    pub corners: Vec<HullCorner>,
    pub degenerate: bool,
}

impl ConvexHull {
    pub fn point(label: usize) -> ConvexHull {
        ConvexHull { cluster: vec![label], boundary: Vec::new(), corners: Vec::new(), degenerate: true }
    }

    /// The degenerate hull along one saddle connection.
    pub fn segment(c: &Complex, sc: &SaddleConnection) -> ConvexHull {
        let boundary = vec![sc.clone(), sc.reversed(c)];
        let corners = hull_corners(c, &boundary);
        ConvexHull { cluster: vec![sc.start, sc.end], boundary, corners, degenerate: true }
    }

    pub fn perimeter(&self) -> f64 {
        self.boundary.iter().map(|s| s.length).sum()
    }

    /// Every boundary corner has exterior angle at least `π`.
    pub fn is_convex(&self) -> bool {
        self.corners.iter().all(|k| k.exterior >= PI - HULL_ANGLE_TOL)
    }

    pub fn curvature(&self, c: &Complex) -> f64 {
        self.cluster
            .iter()
            .map(|&l| c.cone_points[c.vertex_by_label(l).unwrap()].curvature)
            .sum()
    }
}

fn hull_corners(c: &Complex, boundary: &[SaddleConnection]) -> Vec<HullCorner> {
    let m = boundary.len();
    (0..m)
        .map(|k| {
            let inc = &boundary[(k + m - 1) % m];
            let out = &boundary[k];
            let v = out.start_vertex;
            let total = c.cone_points[v].angle;
            let mut interior = (inc.end_angle - out.start_angle).rem_euclid(total);
            if interior > total - HULL_ANGLE_TOL {
                interior = 0.0;
            }
            HullCorner { label: out.start, vertex: v, interior, exterior: total - interior }
        })
        .collect()
}

fn is_degenerate(boundary: &[SaddleConnection]) -> bool {
    let mut count: HashMap<&crate::enumerator::ConnectionKey, usize> = HashMap::new();
    for s in boundary {
        *count.entry(&s.key).or_default() += 1;
    }
    count.values().all(|&n| n == 2)
}

/// Geodesic from cone point `u` at absolute angle `angle` that must reach `w` after `len`.
fn shortcut(c: &Complex, u: usize, angle: f64, len: f64) -> Result<SaddleConnection, SurgeryError> {
    let t = trace_from_cone(c, u, angle, len * (1.0 + 1e-7) + 10.0 * c.tol())?;
    match from_trajectory(c, &t)? {
        Some(sc) => Ok(sc),
        None => Err(SurgeryError::Construction("shortcut ended away from a cone point".into())),
    }
}

/// Tighten a loop of saddle connections around `cluster` until every corner has exterior
/// angle at least `π`. The loop must have the cluster on its left.
pub fn convex_hull(surface: &FlatConeSurface, cluster: &[usize], enclosing: Vec<SaddleConnection>) -> Result<ConvexHull, SurgeryError> {
    let c = surface.complex();
    if enclosing.is_empty() {
        return match cluster {
            [l] => Ok(ConvexHull::point(*l)),
            _ => Err(SurgeryError::Construction("empty loop around several points".into())),
        };
    }
    let in_cluster: HashSet<usize> = cluster.iter().copied().collect();
    let mut boundary = enclosing;
    let cap = 10_000 * boundary.len().max(1);
    let mut steps = 0;
    loop {
        let corners = hull_corners(c, &boundary);
        let Some(k) = (0..corners.len())
            .filter(|&k| corners[k].exterior < PI - HULL_ANGLE_TOL)
            .min_by(|&a, &b| corners[a].exterior.partial_cmp(&corners[b].exterior).unwrap())
        else {
            let mut all: Vec<usize> = cluster.to_vec();
            all.sort_unstable();
            all.dedup();
            let degenerate = is_degenerate(&boundary);
            return Ok(ConvexHull { cluster: all, boundary, corners, degenerate });
        };
        steps += 1;
        if steps > cap {
            return Err(SurgeryError::TighteningCap(cap));
        }
        let m = boundary.len();
        let inc = boundary[(k + m - 1) % m].clone();
        let out = boundary[k].clone();
        let ext = corners[k].exterior;
        // Triangle (v, u, w) on the exterior side, v at the origin.
        let (l1, l2) = (inc.length, out.length);
        let u = Vec2::new(l1, 0.0);
        let w = Vec2::from_angle(ext) * l2;
        let uw = u.dist(w);
        let alpha = crate::geom::corner_angle(&[Vec2::ZERO, u, w], 1);
        let first = shortcut(c, inc.start_vertex, inc.start_angle - alpha, uw)?;
        let replacement = if first.end_vertex == out.end_vertex && (first.length - uw).abs() <= 1e-7 * (1.0 + uw) {
            vec![first]
        } else if in_cluster.contains(&first.end) && first.length < uw {
            let second = shortcut(c, first.end_vertex, first.end_angle + PI, uw - first.length)?;
            if second.end_vertex != out.end_vertex {
                return Err(SurgeryError::NoHull { label: second.end });
            }
            vec![first, second]
        } else {
            return Err(SurgeryError::NoHull { label: first.end });
        };
        let mut next = Vec::with_capacity(m + 1);
        for j in 0..m {
            if j == (k + m - 1) % m {
                continue;
            }
            if j == k {
                next.extend(replacement.iter().cloned());
            } else {
                next.push(boundary[j].clone());
            }
        }
        // Keep the loop starting where it did, up to rotation.
        boundary = next;
    }
}

/// Whether no short saddle connection crosses the loop around the tree `tree`.
/// Returns `Ok(None)` when the sufficient condition `|γ| ≥ 2|F|` holds, otherwise a witness.
pub fn hull_existence_condition(surface: &FlatConeSurface, tree: &[SaddleConnection]) -> Result<Option<SaddleConnection>, SurgeryError> {
    let c = surface.complex();
    let size: f64 = tree.iter().map(|s| s.length).sum();
    let cluster: HashSet<usize> = tree.iter().flat_map(|s| [s.start, s.end]).collect();
    let keys: HashSet<_> = tree.iter().map(|s| s.key.clone()).collect();
    let cap = (crate::enumerator::depth_cap_for(c, 2.0 * size)).max(8);
    let found = enumerate_on_complex(c, EnumOptions { max_length: 2.0 * size, depth_cap: cap })?;
    let tree_threads: Vec<_> = tree.iter().map(|s| s.trajectory(c)).collect();
    for sc in found.connections {
        if sc.iota > 0 || keys.contains(&sc.key) || sc.length >= 2.0 * size {
            continue;
        }
        let touches = cluster.contains(&sc.start) || cluster.contains(&sc.end);
        let crosses = || {
            let t = sc.trajectory(c);
            t.threads.iter().any(|a| {
                tree_threads.iter().flat_map(|x| x.threads.iter()).any(|b| {
                    a.face == b.face && segment_distance(a.entry, a.exit, b.entry, b.exit) <= c.tol()
                        && !shares_endpoint(a, b, c.tol())
                })
            })
        };
        if touches || crosses() {
            return Ok(Some(sc));
        }
    }
    Ok(None)
}

fn shares_endpoint(a: &crate::tracer::Thread, b: &crate::tracer::Thread, tol: f64) -> bool {
    [a.entry, a.exit].iter().any(|p| matches_vertex(p, b, tol))
}

fn matches_vertex(p: &Vec2, b: &crate::tracer::Thread, tol: f64) -> bool {
    let ends = [(b.entry, b.entry_at), (b.exit, b.exit_at)];
    ends.iter().any(|(q, at)| matches!(at, Endpoint::Vertex(_)) && q.dist(*p) <= tol)
}

/// The flat disk glued in place of a hull.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AddedCone {
    pub apex_label: usize,
    pub curvature: f64,
    /// Boundary loop, matching the hull boundary: side lengths and corner angles.
    pub side_lengths: Vec<f64>,
    pub corner_angles: Vec<f64>,
    /// Distances from the apex to the boundary corners.
    pub legs: Vec<f64>,
    pub area: f64,
}

impl AddedCone {
    /// Boundary data at the cluster corners only, for comparing cones up to rotation.
    pub fn signature(&self) -> Vec<(f64, f64)> {
        self.side_lengths.iter().zip(&self.corner_angles).map(|(&a, &b)| (a, b)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct SurgeryResult {
    pub top: FlatConeSurface,
    pub infinitesimal: Vec<InfiniteFlatSphere>,
    pub added_cones: Vec<AddedCone>,
    /// `Area(D_i)`.
    pub hull_areas: Vec<f64>,
    /// The glued complex before flat points were forgotten, faces tagged with the face of
    /// the original surface they came from (`None` for cone faces).
    pub glued: Complex,
    pub parent: Vec<Option<usize>>,
    /// Pieces of hull boundary inside each original face, in that face's chart.
    pub cuts: HashMap<usize, Vec<(Vec2, Vec2)>>,
}

#[derive(Clone, Copy, Debug)]
enum NodeRef {
    Corner(usize),
    Edge(usize, f64),
}

struct Seg {
    left: HalfEdge,
    right: HalfEdge,
    length: f64,
    /// Whether the segment's start node is an endpoint of its saddle connection.
    start_is_corner: bool,
}

struct Refined {
    tris: Vec<EuclideanTriangle>,
    adj: Vec<[Option<HalfEdge>; 3]>,
    parent: Vec<usize>,
    segs: Vec<Vec<Seg>>,
    cuts: HashMap<usize, Vec<(Vec2, Vec2)>>,
}

fn canonical_edge(c: &Complex, f: usize, e: usize) -> (HalfEdge, bool) {
    let me = HalfEdge::new(f, e);
    match c.neighbor(f, e) {
        Some(h) if h < me => (h, false),
        _ => (me, true),
    }
}

/// Subdivide the faces of `c` so that every saddle connection in `scs` runs along edges,
/// and leave those edges unglued.
fn refine(c: &Complex, scs: &[SaddleConnection]) -> Result<Refined, SurgeryError> {
    let tol = c.tol();
    let trajs: Vec<_> = scs.iter().map(|s| s.trajectory(c)).collect();
    // Split parameters along canonical half-edges.
    let mut splits: HashMap<HalfEdge, Vec<f64>> = HashMap::new();
    let mut slit_edges: HashSet<HalfEdge> = HashSet::new();
    let mut chords: Vec<(usize, NodeRef, NodeRef, usize, usize)> = Vec::new();
    let param = |f: usize, e: usize, x: Vec2| {
        let p = c.points(f);
        (x.dist(p[e]) / p[e].dist(p[(e + 1) % 3])).clamp(0.0, 1.0)
    };
    for (si, t) in trajs.iter().enumerate() {
        for (k, x) in t.threads.iter().enumerate() {
            let node = |at: Endpoint, pt: Vec2| -> Result<NodeRef, SurgeryError> {
                match at {
                    Endpoint::Vertex(i) => Ok(NodeRef::Corner(i)),
                    Endpoint::Edge(e) => {
                        let q = c.points(x.face);
                        let eps = tol / q[e].dist(q[(e + 1) % 3]);
                        let u = param(x.face, e, pt);
                        Ok(if u <= eps {
                            NodeRef::Corner(e)
                        } else if u >= 1.0 - eps {
                            NodeRef::Corner((e + 1) % 3)
                        } else {
                            NodeRef::Edge(e, u)
                        })
                    }
                    Endpoint::Interior => Err(SurgeryError::Construction("thread ends inside a face".into())),
                }
            };
            let a = node(x.entry_at, x.entry)?;
            let b = node(x.exit_at, x.exit)?;
            for r in [a, b] {
                if let NodeRef::Edge(e, u) = r {
                    let (h, fwd) = canonical_edge(c, x.face, e);
                    splits.entry(h).or_default().push(if fwd { u } else { 1.0 - u });
                }
            }
            match (a, b) {
                (NodeRef::Corner(i), NodeRef::Corner(j)) if i == j => continue,
                (NodeRef::Corner(i), NodeRef::Corner(j)) => {
                    // Along a side of the face.
                    let e = if j == (i + 1) % 3 { i } else { j };
                    slit_edges.insert(canonical_edge(c, x.face, e).0);
                }
                _ => {}
            }
            chords.push((x.face, a, b, si, k));
        }
    }
    for v in splits.values_mut() {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);
    }
    let mut next_marker = PLACEHOLDER;
    let mut markers: HashMap<(HalfEdge, usize), usize> = HashMap::new();
    for (h, v) in &splits {
        for k in 0..v.len() {
            markers.insert((*h, k), next_marker);
            next_marker += 1;
        }
    }
    let mut tris = Vec::new();
    let mut parent = Vec::new();
    // (face, local node a, local node b) → directed half-edge of the refined mesh.
    let mut directed: HashMap<(usize, usize, usize), HalfEdge> = HashMap::new();
    let mut pair_key: HashMap<HalfEdge, (u8, usize, usize, usize)> = HashMap::new();
    let mut face_nodes: Vec<Vec<(Vec2, usize)>> = Vec::with_capacity(c.num_faces());
    let mut face_edge_start: Vec<[usize; 3]> = Vec::with_capacity(c.num_faces());
    let mut chord_set: HashSet<(usize, usize, usize)> = HashSet::new();
    let mut cuts: HashMap<usize, Vec<(Vec2, Vec2)>> = HashMap::new();
    let mut chord_nodes: Vec<(usize, usize, usize, usize, usize)> = Vec::new();
    for f in 0..c.num_faces() {
        let p = c.points(f);
        let labels = c.triangle(f).labels;
        let mut nodes: Vec<(Vec2, usize)> = Vec::new();
        let mut starts = [0; 3];
        for e in 0..3 {
            starts[e] = nodes.len();
            nodes.push((p[e], labels[e]));
            let (h, fwd) = canonical_edge(c, f, e);
            if let Some(v) = splits.get(&h) {
                let n = v.len();
                for k in 0..n {
                    let (ck, u) = if fwd { (k, v[k]) } else { (n - 1 - k, 1.0 - v[n - 1 - k]) };
                    nodes.push((p[e].lerp(p[(e + 1) % 3], u), markers[&(h, ck)]));
                }
            }
        }
        face_nodes.push(nodes);
        face_edge_start.push(starts);
    }
    let locate = |f: usize, r: NodeRef, face_nodes: &Vec<Vec<(Vec2, usize)>>, starts: &Vec<[usize; 3]>| -> usize {
        match r {
            NodeRef::Corner(i) => starts[f][i],
            NodeRef::Edge(e, u) => {
                let p = c.points(f);
                let x = p[e].lerp(p[(e + 1) % 3], u);
                let n = face_nodes[f].len();
                let end = if e == 2 { n } else { starts[f][e + 1] };
                (starts[f][e] + 1..end)
                    .min_by(|&a, &b| face_nodes[f][a].0.dist(x).partial_cmp(&face_nodes[f][b].0.dist(x)).unwrap())
                    .unwrap_or(starts[f][e])
            }
        }
    };
    for &(f, a, b, si, k) in &chords {
        let na = locate(f, a, &face_nodes, &face_edge_start);
        let nb = locate(f, b, &face_nodes, &face_edge_start);
        if na == nb {
            return Err(SurgeryError::Construction("degenerate chord".into()));
        }
        chord_set.insert((f, na.min(nb), na.max(nb)));
        cuts.entry(f).or_default().push((face_nodes[f][na].0, face_nodes[f][nb].0));
        chord_nodes.push((f, na, nb, si, k));
    }
    for f in 0..c.num_faces() {
        let nodes = &face_nodes[f];
        let n = nodes.len();
        let mut polys: Vec<Vec<usize>> = vec![(0..n).collect()];
        for &(g, a, b) in chord_set.iter().filter(|x| x.0 == f) {
            let _ = g;
            let Some(pi) = polys.iter().position(|poly| {
                let (Some(ia), Some(ib)) = (poly.iter().position(|&x| x == a), poly.iter().position(|&x| x == b)) else {
                    return false;
                };
                let m = poly.len();
                (ia + 1) % m != ib && (ib + 1) % m != ia
            }) else {
                // Already a side of some piece (an edge of the face): nothing to split.
                continue;
            };
            let poly = polys.swap_remove(pi);
            let m = poly.len();
            let ia = poly.iter().position(|&x| x == a).unwrap();
            let ib = poly.iter().position(|&x| x == b).unwrap();
            let walk = |from: usize, to: usize| {
                let mut out = vec![poly[from]];
                let mut j = from;
                while j != to {
                    j = (j + 1) % m;
                    out.push(poly[j]);
                }
                out
            };
            polys.push(walk(ia, ib));
            polys.push(walk(ib, ia));
        }
        for poly in polys {
            let pg = Polygon { vertices: poly.iter().map(|&x| nodes[x].0).collect() };
            for t in pg.triangulate() {
                let ids = [poly[t[0]], poly[t[1]], poly[t[2]]];
                let face = tris.len();
                tris.push(EuclideanTriangle::new(face, ids.map(|x| nodes[x].0), ids.map(|x| nodes[x].1)));
                parent.push(f);
                for k in 0..3 {
                    let (a, b) = (ids[k], ids[(k + 1) % 3]);
                    let h = HalfEdge::new(face, k);
                    directed.insert((f, a, b), h);
                    // Which original edge, if any, holds this side.
                    let on_edge = (0..3).find(|&e| {
                        let s = face_edge_start[f][e];
                        let end = if e == 2 { n } else { face_edge_start[f][e + 1] };
                        let next = if e == 2 { 0 } else { end };
                        a >= s && a < end && (b == a + 1 || (a + 1 == end && b == next))
                    });
                    let key = match on_edge {
                        Some(e) => {
                            let (ch, fwd) = canonical_edge(c, f, e);
                            let segs = splits.get(&ch).map_or(0, |v| v.len());
                            let s = a - face_edge_start[f][e];
                            let cs = if fwd { s } else { segs - s };
                            (0u8, ch.face, ch.edge, cs)
                        }
                        None => (1u8, f, a.min(b), a.max(b)),
                    };
                    pair_key.insert(h, key);
                }
            }
        }
    }
    let mut by_key: HashMap<(u8, usize, usize, usize), Vec<HalfEdge>> = HashMap::new();
    for (&h, &k) in &pair_key {
        by_key.entry(k).or_default().push(h);
    }
    let mut adj = vec![[None; 3]; tris.len()];
    let mut partner: HashMap<HalfEdge, HalfEdge> = HashMap::new();
    for (k, hs) in &by_key {
        match hs.as_slice() {
            [a, b] => {
                partner.insert(*a, *b);
                partner.insert(*b, *a);
                let slit = match k.0 {
                    0 => slit_edges.contains(&HalfEdge::new(k.1, k.2)),
                    _ => chord_set.contains(&(k.1, k.2, k.3)),
                };
                if !slit {
                    adj[a.face][a.edge] = Some(*b);
                    adj[b.face][b.edge] = Some(*a);
                }
            }
            [_] => {}
            _ => return Err(SurgeryError::Construction("side shared by more than two faces".into())),
        }
    }
    let mut segs: Vec<Vec<Seg>> = (0..scs.len()).map(|_| Vec::new()).collect();
    for &(f, na, nb, si, k) in &chord_nodes {
        let missing = || SurgeryError::Construction("chord missing from the refinement".into());
        let lone = || SurgeryError::Construction("chord without a second side".into());
        // A chord along a side of `f` may have `f` on its right.
        let (left, right) = match directed.get(&(f, na, nb)) {
            Some(&l) => (l, *partner.get(&l).ok_or_else(lone)?),
            None => {
                let r = *directed.get(&(f, nb, na)).ok_or_else(missing)?;
                (*partner.get(&r).ok_or_else(lone)?, r)
            }
        };
        let length = face_nodes[f][na].0.dist(face_nodes[f][nb].0);
        segs[si].push(Seg { left, right, length, start_is_corner: k == 0 });
    }
    let _ = tol;
    Ok(Refined { tris, adj, parent, segs, cuts })
}

/// Cut out every hull and glue in its cone.
pub fn generalized_surgery(surface: &FlatConeSurface, hulls: &[ConvexHull]) -> Result<SurgeryResult, SurgeryError> {
    let c = surface.complex();
    for (i, a) in hulls.iter().enumerate() {
        let k = a.curvature(c);
        if k >= 1.0 - 1e-12 {
            return Err(SurgeryError::CurvatureTooLarge { sum: k });
        }
        for b in &hulls[i + 1..] {
            if a.cluster.iter().any(|l| b.cluster.contains(l)) {
                return Err(SurgeryError::OverlappingHulls);
            }
        }
    }
    // Distinct saddle connections over all boundaries, and each loop as (index, reversed).
    let mut scs: Vec<SaddleConnection> = Vec::new();
    let mut loops: Vec<Vec<(usize, bool)>> = Vec::new();
    for h in hulls {
        let mut lp = Vec::new();
        for s in &h.boundary {
            match scs.iter().position(|x| x.key == s.key) {
                Some(i) => lp.push((i, scs[i].start_vertex != s.start_vertex || (scs[i].start_angle - s.start_angle).abs() > 1e-9)),
                None => {
                    scs.push(s.clone());
                    lp.push((scs.len() - 1, false));
                }
            }
        }
        loops.push(lp);
    }
    for s in &scs {
        if s.iota > 0 {
            return Err(SurgeryError::NotSimple(format!("{} → {} has ι = {}", s.start, s.end, s.iota)));
        }
    }
    let r = refine(c, &scs)?;
    let nf = r.tris.len();
    // Hull interiors: flood fill from the left sides of non-degenerate loops.
    let mut in_hull = vec![usize::MAX; nf];
    for (hi, (h, lp)) in hulls.iter().zip(&loops).enumerate() {
        if h.degenerate {
            continue;
        }
        let mut stack: Vec<usize> = Vec::new();
        for &(si, rev) in lp {
            for s in &r.segs[si] {
                stack.push(if rev { s.right.face } else { s.left.face });
            }
        }
        while let Some(f) = stack.pop() {
            if in_hull[f] != usize::MAX {
                if in_hull[f] != hi {
                    return Err(SurgeryError::OverlappingHulls);
                }
                continue;
            }
            in_hull[f] = hi;
            for e in 0..3 {
                if let Some(n) = r.adj[f][e] {
                    stack.push(n.face);
                }
            }
        }
    }
    let hull_areas: Vec<f64> = (0..hulls.len())
        .map(|hi| (0..nf).filter(|&f| in_hull[f] == hi).fold(0.0, |a, f| a + crate::geom::triangle_area(&r.tris[f].vertices)))
        .collect();
    // Remainder faces, renumbered.
    let mut index = vec![usize::MAX; nf];
    let mut tris = Vec::new();
    let mut parent = Vec::new();
    for f in 0..nf {
        if in_hull[f] == usize::MAX {
            index[f] = tris.len();
            let mut t = r.tris[f].clone();
            t.face_id = tris.len();
            tris.push(t);
            parent.push(Some(r.parent[f]));
        }
    }
    let mut adj: Vec<[Option<HalfEdge>; 3]> = (0..nf)
        .filter(|&f| in_hull[f] == usize::MAX)
        .map(|f| r.adj[f].map(|h| h.and_then(|h| (index[h.face] != usize::MAX).then(|| HalfEdge::new(index[h.face], h.edge)))))
        .collect();
    let mut fresh = c.fresh_label();
    let mut added_cones = Vec::new();
    let mut apex_labels = Vec::new();
    for (h, lp) in hulls.iter().zip(&loops) {
        if h.boundary.is_empty() {
            // A single point: nothing to cut.
            added_cones.push(AddedCone {
                apex_label: h.cluster[0],
                curvature: h.curvature(c),
                side_lengths: vec![],
                corner_angles: vec![],
                legs: vec![],
                area: 0.0,
            });
            apex_labels.push(h.cluster[0]);
            continue;
        }
        // Loop segments with the remainder side and the cone-side angle at each start node.
        let mut outer: Vec<HalfEdge> = Vec::new();
        let mut lengths: Vec<f64> = Vec::new();
        let mut phis: Vec<f64> = Vec::new();
        let mut corner_of_node: Vec<Option<usize>> = Vec::new();
        for (k, &(si, rev)) in lp.iter().enumerate() {
            let segs = &r.segs[si];
            let n = segs.len();
            for j in 0..n {
                let (s, first) = if rev { (&segs[n - 1 - j], j == 0) } else { (&segs[j], j == 0) };
                outer.push(if rev { s.left } else { s.right });
                lengths.push(s.length);
                let _ = s.start_is_corner;
                if first {
                    phis.push(TAU - h.corners[k].exterior);
                    corner_of_node.push(Some(k));
                } else {
                    phis.push(PI);
                    corner_of_node.push(None);
                }
            }
        }
        let m = outer.len();
        let turning: f64 = phis.iter().map(|p| PI - p).sum();
        let k_apex = h.curvature(c);
        let theta = TAU * (1.0 - k_apex);
        if (turning - theta).abs() > 1e-6 {
            return Err(SurgeryError::Construction(format!(
                "boundary turning {turning} does not match cone angle {theta}"
            )));
        }
        let mut pts = vec![Vec2::ZERO];
        let mut heading = 0.0;
        for t in 0..m {
            let p = pts[t] + Vec2::from_angle(heading) * lengths[t];
            pts.push(p);
            heading += PI - phis[(t + 1) % m];
        }
        // Apex: P_m is P_0 rotated by the cone angle about it.
        let (cs, sn) = (theta.cos(), theta.sin());
        let pm = pts[m];
        let (a11, a12, a21, a22) = (1.0 - cs, sn, -sn, 1.0 - cs);
        let det = a11 * a22 - a12 * a21;
        if det.abs() < 1e-14 {
            return Err(SurgeryError::Construction("cone angle too close to 2π".into()));
        }
        let apex = Vec2::new((pm.x * a22 - a12 * pm.y) / det, (a11 * pm.y - a21 * pm.x) / det);
        let apex_label = fresh;
        fresh += 1;
        apex_labels.push(apex_label);
        let base = tris.len();
        let mut area = 0.0;
        for t in 0..m {
            let (p, q) = (pts[t], pts[t + 1]);
            if orient(p, q, apex) <= 0.0 {
                return Err(SurgeryError::Construction("cone is not star-shaped from its apex".into()));
            }
            let lp = r.tris[outer[t].face].labels[(outer[t].edge + 1) % 3];
            let lq = r.tris[outer[t].face].labels[outer[t].edge];
            tris.push(EuclideanTriangle::new(base + t, [p, q, apex], [lp, lq, apex_label]));
            parent.push(None);
            adj.push([None; 3]);
            area += crate::geom::triangle_area(&[p, q, apex]);
        }
        for t in 0..m {
            let o = HalfEdge::new(index[outer[t].face], outer[t].edge);
            if o.face == usize::MAX {
                return Err(SurgeryError::Construction("remainder side lies in a hull".into()));
            }
            adj[base + t][0] = Some(o);
            adj[o.face][o.edge] = Some(HalfEdge::new(base + t, 0));
            let nx = base + (t + 1) % m;
            adj[base + t][1] = Some(HalfEdge::new(nx, 2));
            adj[nx][2] = Some(HalfEdge::new(base + t, 1));
        }
        let legs = (0..m).filter(|&t| corner_of_node[t].is_some()).map(|t| pts[t].dist(apex)).collect();
        let (side_lengths, corner_angles) = cluster_sides(&lengths, &phis, &corner_of_node);
        added_cones.push(AddedCone { apex_label, curvature: k_apex, side_lengths, corner_angles, legs, area });
    }
    let glued = Complex::assemble(tris, adj, c.tol(), fresh)?;
    let original: HashSet<usize> = c.cone_points.iter().map(|p| p.label).collect();
    let loop_labels: HashSet<usize> = hulls.iter().flat_map(|h| h.corners.iter().map(|k| k.label)).collect();
    let mut remove = Vec::new();
    for p in &glued.cone_points {
        let created = !original.contains(&p.label) && !apex_labels.contains(&p.label);
        if created || loop_labels.contains(&p.label) {
            if p.curvature.abs() > 1e-7 {
                return Err(SurgeryError::Construction(format!("vertex {} should be flat, has curvature {}", p.label, p.curvature)));
            }
            remove.push(p.label);
        }
    }
    let top = FlatConeSurface::from_complex(strip_flat(&glued, &remove)?)?;
    let infinitesimal = hulls
        .iter()
        .enumerate()
        .map(|(hi, h)| infinitesimal_sphere(c, h, &r, &in_hull, hi, &original))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SurgeryResult { top, infinitesimal, added_cones, hull_areas, glued, parent, cuts: r.cuts })
}

fn strip_flat(c: &Complex, labels: &[usize]) -> Result<Complex, SurgeryError> {
    let mut soup = Soup::from_complex(c);
    soup.remove_flat_vertices(labels)?;
    let (t, a) = soup.compact();
    Ok(Complex::from_adjacency(t, a, c.tol())?)
}

/// Collapse a loop's side lengths and angles to the cluster corners.
fn cluster_sides(lengths: &[f64], phis: &[f64], corner: &[Option<usize>]) -> (Vec<f64>, Vec<f64>) {
    let mut sides = Vec::new();
    let mut angles = Vec::new();
    for t in 0..lengths.len() {
        if corner[t].is_some() {
            sides.push(0.0);
            angles.push(phis[t]);
        }
        if let Some(s) = sides.last_mut() {
            *s += lengths[t];
        }
    }
    (sides, angles)
}

fn infinitesimal_sphere(
    c: &Complex,
    h: &ConvexHull,
    r: &Refined,
    in_hull: &[usize],
    hi: usize,
    original: &HashSet<usize>,
) -> Result<InfiniteFlatSphere, SurgeryError> {
    let exterior: HashMap<usize, f64> = h.corners.iter().map(|k| (k.label, k.exterior)).collect();
    if h.degenerate {
        let corners = h
            .corners
            .iter()
            .zip(&h.boundary)
            .map(|(k, s)| BoundaryCorner {
                label: k.label,
                exterior: k.exterior,
                next_length: s.length,
            })
            .collect();
        return Ok(InfiniteFlatSphere { domain: None, boundary: corners });
    }
    let faces: Vec<usize> = (0..r.tris.len()).filter(|&f| in_hull[f] == hi).collect();
    let mut index = vec![usize::MAX; r.tris.len()];
    for (k, &f) in faces.iter().enumerate() {
        index[f] = k;
    }
    let tris: Vec<EuclideanTriangle> = faces
        .iter()
        .enumerate()
        .map(|(k, &f)| {
            let mut t = r.tris[f].clone();
            t.face_id = k;
            t
        })
        .collect();
    let adj: Vec<[Option<HalfEdge>; 3]> = faces
        .iter()
        .map(|&f| r.adj[f].map(|x| x.and_then(|x| (index[x.face] != usize::MAX).then(|| HalfEdge::new(index[x.face], x.edge)))))
        .collect();
    let d = Complex::assemble(tris, adj, c.tol(), c.fresh_label())?;
    let created: Vec<usize> = d.cone_points.iter().map(|p| p.label).filter(|l| !original.contains(l)).collect();
    let domain = strip_flat(&d, &created)?;
    InfiniteFlatSphere::from_domain(domain, &exterior).map_err(SurgeryError::Construction)
}

/// Pairwise surgery: collapse the two endpoints of `sc` into one cone point.
pub fn surgery_along_saddle_connection(surface: &FlatConeSurface, sc: &SaddleConnection) -> Result<SurgeryResult, SurgeryError> {
    let c = surface.complex();
    if sc.start_vertex == sc.end_vertex {
        return Err(SurgeryError::NotSimple("both ends at the same cone point".into()));
    }
    let ki = c.cone_points[sc.start_vertex].curvature;
    let kj = c.cone_points[sc.end_vertex].curvature;
    if ki + kj >= 1.0 - 1e-12 {
        return Err(SurgeryError::CurvatureTooLarge { sum: ki + kj });
    }
    if ki.abs() <= 1e-9 || kj.abs() <= 1e-9 {
        // A marked point is simply forgotten.
        let forget = if ki.abs() <= 1e-9 { sc.start } else { sc.end };
        let keep = if ki.abs() <= 1e-9 { sc.end } else { sc.start };
        let top = FlatConeSurface::from_complex(strip_flat(c, &[forget])?)?;
        let cone = AddedCone {
            apex_label: keep,
            curvature: ki + kj,
            side_lengths: vec![],
            corner_angles: vec![],
            legs: vec![],
            area: 0.0,
        };
        let n = c.num_faces();
        return Ok(SurgeryResult {
            top,
            infinitesimal: vec![],
            added_cones: vec![cone],
            hull_areas: vec![0.0],
            glued: c.clone(),
            parent: (0..n).map(Some).collect(),
            cuts: HashMap::new(),
        });
    }
    generalized_surgery(surface, &[ConvexHull::segment(c, sc)])
}

/// One remainder spot check: a geodesic segment traced before and after surgery.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpotCheck {
    pub face: usize,
    pub start: Vec2,
    pub direction: Vec2,
    pub length: f64,
    /// Distance between the two endpoints, compared in the original chart.
    pub drift: f64,
}

impl SurgeryResult {
    /// Trace `count` random segments that stay at least `margin` away from every hull
    /// boundary, on the original surface and on the glued complex, and compare endpoints.
    pub fn spot_check(&self, original: &FlatConeSurface, rng: &mut ChaCha8Rng, count: usize, margin: f64) -> Vec<SpotCheck> {
        let c = original.complex();
        let g = &self.glued;
        let scale = c.area().sqrt();
        let areas: Vec<f64> = (0..c.num_faces()).map(|f| crate::geom::triangle_area(c.points(f))).collect();
        let total: f64 = areas.iter().sum();
        let mut out = Vec::new();
        let mut attempts = 0;
        while out.len() < count && attempts < 200 * count.max(1) {
            attempts += 1;
            let mut x = rng.gen::<f64>() * total;
            let mut f = 0;
            while f + 1 < areas.len() && x > areas[f] {
                x -= areas[f];
                f += 1;
            }
            let (mut a, mut b) = (rng.gen::<f64>(), rng.gen::<f64>());
            if a + b > 1.0 {
                a = 1.0 - a;
                b = 1.0 - b;
            }
            let q = c.points(f);
            let p = q[0] + (q[1] - q[0]) * a + (q[2] - q[0]) * b;
            let d = Vec2::from_angle(rng.gen::<f64>() * TAU);
            let len = (0.05 + 0.45 * rng.gen::<f64>()) * scale;
            let Ok(t) = trace(c, Start::Point(SurfacePoint { face: f, point: p }), d, len) else { continue };
            if !matches!(t.end, Status::BudgetExhausted(_)) {
                continue;
            }
            let near = t.threads.iter().any(|th| {
                self.cuts.get(&th.face).map_or(false, |cs| {
                    cs.iter().any(|&(u, v)| segment_distance(th.entry, th.exit, u, v) < margin)
                })
            });
            if near {
                continue;
            }
            let Some(h) = (0..g.num_faces()).find(|&h| self.parent[h] == Some(f) && g.contains(h, p)) else {
                continue;
            };
            let Ok(t2) = trace(g, Start::Point(SurfacePoint { face: h, point: p }), d, len) else { continue };
            let Status::BudgetExhausted(e2) = t2.end else { continue };
            let Some(pf) = self.parent[e2.face] else { continue };
            let e1 = t.end_point();
            let (f1, x1, _) = canonical(c, e1.face, e1.point, t.end_dir(), c.tol());
            let (f2, x2, _) = canonical(c, pf, e2.point, t2.end_dir(), c.tol());
            let drift = if f1 == f2 { x1.dist(x2) } else { f64::INFINITY };
            out.push(SpotCheck { face: f, start: p, direction: d, length: len, drift });
        }
        out
    }
}

/// Hull of a triangle of polygon vertices, or of a diagonal, on the double of a polygon.
#[derive(Clone, Debug)]
pub struct PolygonHull {
    pub surface: FlatConeSurface,
    pub hull: ConvexHull,
    pub vertices: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HullKind {
    /// Three pairwise non-adjacent polygon vertices.
    Triangle,
    /// Two vertices joined by a diagonal.
    Diagonal,
}

/// A random admissible hull on the double of a random convex polygon.
pub fn random_polygon_hull(rng: &mut ChaCha8Rng, kind: HullKind) -> Result<PolygonHull, SurgeryError> {
    for _ in 0..5000 {
        let n = match kind {
            HullKind::Triangle => rng.gen_range(6..=7),
            HullKind::Diagonal => rng.gen_range(5..=7),
        };
        let poly = crate::fixtures::random_convex_polygon(rng, n);
        let double = crate::billiards::double_polygon(&poly).map_err(|e| SurgeryError::Construction(e.to_string()))?;
        let s = double.surface.clone();
        let i0 = rng.gen_range(0..n);
        match kind {
            HullKind::Triangle => {
                let i1 = (i0 + 2) % n;
                let i2 = (i0 + rng.gen_range(4..n - 1)) % n;
                let mut ids = vec![i0, i1, i2];
                // Increasing order runs counterclockwise, with the triangle on the left.
                ids.sort_unstable();
                let mut sides = Vec::new();
                for j in 0..3 {
                    sides.push(crate::billiards::chord(&double, ids[j], ids[(j + 1) % 3]).map_err(|e| SurgeryError::Construction(e.to_string()))?);
                }
                if let Ok(h) = convex_hull(&s, &ids, sides) {
                    if !h.degenerate && h.curvature(&s) < 0.98 {
                        return Ok(PolygonHull { surface: s, hull: h, vertices: ids });
                    }
                }
            }
            HullKind::Diagonal => {
                let i1 = (i0 + rng.gen_range(2..n - 1)) % n;
                let sc = crate::billiards::chord(&double, i0, i1).map_err(|e| SurgeryError::Construction(e.to_string()))?;
                let h = ConvexHull::segment(&s, &sc);
                if h.is_convex() && h.curvature(&s) < 0.98 {
                    return Ok(PolygonHull { surface: s, hull: h, vertices: vec![i0, i1] });
                }
            }
        }
    }
    Err(SurgeryError::Construction(format!("no admissible {kind:?} hull after 5000 draws")))
}

/// Collapse a hull one saddle connection at a time, taking the cluster points in `order`:
/// first `order[0]` with `order[1]` along their hull side, then the merged point with
/// `order[2]` along the shortest saddle connection between them, and so on.
pub fn collapse_in_order(surface: &FlatConeSurface, hull: &ConvexHull, order: &[usize], search: f64) -> Result<FlatConeSurface, SurgeryError> {
    let joins = |x: &SaddleConnection, a: usize, b: usize| (x.start == a && x.end == b) || (x.start == b && x.end == a);
    let mut s = surface.clone();
    let mut current = order[0];
    for (step, &next) in order[1..].iter().enumerate() {
        let side = if step == 0 { hull.boundary.iter().find(|x| joins(x, current, next)).cloned() } else { None };
        let sc = match side {
            Some(x) => x,
            None => {
                let c = s.complex();
                let cap = crate::enumerator::depth_cap_for(c, search);
                let found = enumerate_on_complex(c, EnumOptions { max_length: search, depth_cap: cap })?;
                found
                    .connections
                    .into_iter()
                    .filter(|x| x.iota == 0)
                    .find(|x| joins(x, current, next))
                    .ok_or_else(|| SurgeryError::Construction(format!("no saddle connection {current} to {next} within {search}")))?
            }
        };
        let res = surgery_along_saddle_connection(&s, &sc)?;
        current = res.added_cones[0].apex_label;
        s = res.top;
    }
    Ok(s)
}

/// Isometry invariants of a closed surface: area, sorted curvatures and the shortest
/// saddle-connection lengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub area: f64,
    pub curvatures: Vec<f64>,
    pub spectrum: Vec<f64>,
}

pub fn fingerprint(surface: &FlatConeSurface, r: f64) -> Result<Fingerprint, SurgeryError> {
    let mut curvatures = surface.curvatures();
    curvatures.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let spectrum = crate::enumerator::enumerate_saddle_connections(surface, r)?.iter().map(|x| x.length).collect();
    Ok(Fingerprint { area: surface.area(), curvatures, spectrum })
}

impl Fingerprint {
    /// Largest discrepancy, comparing spectra only below `r` with a margin for boundary effects.
    pub fn distance(&self, other: &Fingerprint, r: f64) -> f64 {
        let mut d = (self.area - other.area).abs();
        if self.curvatures.len() != other.curvatures.len() {
            return f64::INFINITY;
        }
        for (a, b) in self.curvatures.iter().zip(&other.curvatures) {
            d = d.max((a - b).abs());
        }
        let cut = r * (1.0 - 1e-6);
        let a: Vec<f64> = self.spectrum.iter().copied().filter(|&x| x < cut).collect();
        let b: Vec<f64> = other.spectrum.iter().copied().filter(|&x| x < cut).collect();
        if a.len() != b.len() {
            return f64::INFINITY;
        }
        for (x, y) in a.iter().zip(&b) {
            d = d.max((x - y).abs());
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::billiards::double_polygon;
    use crate::enumerator::enumerate_saddle_connections;
    use crate::fixtures;
    use rand::SeedableRng;

    fn octagon() -> FlatConeSurface {
        let v = (0..8).map(|k| Vec2::from_angle(k as f64 * PI / 4.0)).collect();
        double_polygon(&Polygon::new(v).unwrap()).unwrap().surface
    }

    #[test]
    fn quarter_points_merge() {
        let s = octagon();
        let c = s.complex();
        let sc = enumerate_on_complex(c, EnumOptions { max_length: 0.8, depth_cap: 50 })
            .unwrap()
            .connections
            .into_iter()
            .find(|x| x.start != x.end)
            .unwrap();
        let res = surgery_along_saddle_connection(&s, &sc).unwrap();
        let mut k = res.top.curvatures();
        k.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(k.len(), 7);
        assert!((k[6] - 0.5).abs() < 1e-9);
        assert!(crate::surface::validate(&res.top).pass);
        let cone = &res.added_cones[0];
        // Double of the right isosceles triangle with hypotenuse L.
        let l = sc.length;
        assert!((cone.area - l * l / 2.0).abs() < 1e-9, "{}", cone.area);
        assert!((res.top.area() - s.area() - cone.area).abs() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let checks = res.spot_check(&s, &mut rng, 20, 1e-3);
        assert_eq!(checks.len(), 20);
        assert!(checks.iter().all(|x| x.drift < 1e-7), "{checks:?}");
    }

    #[test]
    fn too_much_curvature() {
        let s = fixtures::doubled_equilateral();
        let sc = enumerate_saddle_connections(&s, 1.01).unwrap().remove(0);
        let c = crate::delaunay::delaunay_triangulation(&s).unwrap();
        let _ = c;
        assert!(matches!(
            surgery_along_saddle_connection(&s, &sc),
            Err(SurgeryError::CurvatureTooLarge { .. })
        ));
    }

    #[test]
    fn triangle_hull_matches_pairwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut done = 0;
        for _ in 0..40 {
            let ph = random_polygon_hull(&mut rng, HullKind::Triangle).unwrap();
            let res = generalized_surgery(&ph.surface, &[ph.hull.clone()]).unwrap();
            let k = ph.hull.curvature(ph.surface.complex());
            let top_k: f64 = res.top.curvatures().iter().filter(|&&x| (x - k).abs() < 1e-9).sum();
            assert!(top_k > 0.0);
            let lhs = ph.surface.area();
            let rhs = res.top.area() - (res.added_cones[0].area - res.hull_areas[0]);
            assert!((lhs - rhs).abs() < 1e-9);
            assert!(res.hull_areas[0] <= res.added_cones[0].area + 1e-12);
            let inf = &res.infinitesimal[0];
            assert!(inf.boundary.iter().all(|b| b.exterior >= PI - 1e-9));
            done += 1;
            if done == 3 {
                break;
            }
        }
        assert!(done > 0);
    }
}
