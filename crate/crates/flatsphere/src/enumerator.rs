//! Saddle connections and cylinders up to a length bound.
//!
//! Saddle connections are found by a sector search rooted at every corner: the set of
//! directions still visible through the crossed edges is an open angular interval, which
//! splits whenever a vertex appears strictly inside it. Cylinders are found by pushing a
//! geodesic slightly off each saddle connection and waiting for it to close.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::m0_constant;
use crate::delaunay::{delaunay_triangulation, DelaunayError, Triangulation};
use crate::geom::{Iso, Vec2};
use crate::surface::{Complex, Corridor, FlatConeSurface, HalfEdge};
use crate::tracer::{
    self_intersection_number, trace, Endpoint, Start, Status, SurfacePoint, Thread, TraceError, Trajectory,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnumError {
    #[error(transparent)]
    Delaunay(#[from] DelaunayError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConnectionKey {
    /// An edge of the triangulation, by its smaller half-edge.
    Edge(HalfEdge),
    /// Start corner followed by the crossed half-edges, for the smaller orientation.
    Path(Vec<(usize, usize)>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SaddleConnection {
    pub start: usize,
    pub end: usize,
    pub start_vertex: usize,
    pub end_vertex: usize,
    /// Absolute angle of the outgoing direction at each endpoint.
    pub start_angle: f64,
    pub end_angle: f64,
    pub start_corner: (usize, usize),
    pub end_corner: (usize, usize),
    pub corridor: Corridor,
    /// Developed displacement in the chart of the first face.
    pub holonomy: Vec2,
    pub length: f64,
    pub iota: usize,
    pub key: ConnectionKey,
}

impl SaddleConnection {
    pub fn depth(&self) -> usize {
        self.corridor.len()
    }

    pub fn is_edge(&self) -> bool {
        matches!(self.key, ConnectionKey::Edge(_))
    }

    /// The same connection traversed from the other end.
    pub fn reversed(&self, c: &Complex) -> SaddleConnection {
        let last = self.trajectory(c).threads.last().unwrap().dir;
        let faces: Vec<usize> = self.corridor.faces.iter().rev().copied().collect();
        let edges: Vec<usize> = (0..self.corridor.edges.len())
            .rev()
            .map(|k| c.neighbor(self.corridor.faces[k], self.corridor.edges[k]).unwrap().edge)
            .collect();
        SaddleConnection {
            start: self.end,
            end: self.start,
            start_vertex: self.end_vertex,
            end_vertex: self.start_vertex,
            start_angle: self.end_angle,
            end_angle: self.start_angle,
            start_corner: self.end_corner,
            end_corner: self.start_corner,
            corridor: Corridor { faces, edges },
            holonomy: -last * self.length,
            length: self.length,
            iota: self.iota,
            key: self.key.clone(),
        }
    }

    /// Threads of the connection, read off the corridor.
    pub fn trajectory(&self, c: &Complex) -> Trajectory {
        let (f0, i0) = self.start_corner;
        let p = c.points(f0)[i0];
        let u = self.holonomy.unit();
        let mut iso = Iso::IDENTITY;
        let mut threads = Vec::with_capacity(self.corridor.len());
        let mut t_in = 0.0;
        let mut entry_at = Endpoint::Vertex(i0);
        for (k, &f) in self.corridor.faces.iter().enumerate() {
            if k > 0 {
                let prev = self.corridor.faces[k - 1];
                iso = iso.compose(&c.gluing_iso(prev, self.corridor.edges[k - 1]).inverse()).normalized();
            }
            let inv = iso.inverse();
            let (t_out, exit_at) = if k + 1 < self.corridor.len() {
                let e = self.corridor.edges[k];
                let q = c.points(f);
                let a = iso.apply(q[e]);
                let b = iso.apply(q[(e + 1) % 3]);
                // Parameter along p + t u where it meets the line a b.
                let t = (a - p).cross(b - a) / u.cross(b - a);
                (t, Endpoint::Edge(e))
            } else {
                (self.length, Endpoint::Vertex(self.end_corner.1))
            };
            let entry = inv.apply(p + u * t_in);
            let exit = if k + 1 < self.corridor.len() {
                inv.apply(p + u * t_out)
            } else {
                c.points(f)[self.end_corner.1]
            };
            threads.push(Thread {
                face: f,
                entry: if k == 0 { p } else { entry },
                exit,
                entry_at,
                exit_at,
                dir: inv.apply_vec(u).unit(),
                start_s: t_in,
                length: t_out - t_in,
            });
            if let Endpoint::Edge(e) = exit_at {
                entry_at = Endpoint::Edge(c.neighbor(f, e).unwrap().edge);
            }
            t_in = t_out;
        }
        let status = |v: usize, (f, i): (usize, usize), angle: f64| Status::ConePoint {
            label: c.label(v),
            vertex: v,
            face: f,
            corner: i,
            angle,
        };
        Trajectory {
            threads,
            length: self.length,
            start: status(self.start_vertex, self.start_corner, self.start_angle),
            end: status(self.end_vertex, self.end_corner, self.end_angle),
            origin: Start::Corner { face: f0, corner: i0 },
            origin_dir: u,
            closed: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CylinderFamily {
    pub circumference: f64,
    pub height: f64,
    /// A point on the core curve and its direction, in the chart of `face`.
    pub face: usize,
    pub point: Vec2,
    pub direction: Vec2,
    pub corridor: Corridor,
    /// Self-intersection number of the core curve.
    pub iota: usize,
    /// Indices of the saddle connections whose push-offs found this family.
    pub boundary: Vec<usize>,
    /// Crossings of the core curve with edges: (smaller half-edge, parameter along it).
    pub crossings: Vec<(HalfEdge, f64)>,
}

#[derive(Clone, Copy, Debug)]
pub struct EnumOptions {
    pub max_length: f64,
    pub depth_cap: usize,
}

#[derive(Clone, Debug)]
pub struct EnumResult {
    pub connections: Vec<SaddleConnection>,
    pub depth_cap: usize,
    /// Deepest corridor visited, and whether any branch was stopped by the cap.
    pub max_depth: usize,
    pub cap_hit: bool,
    /// Depth of the deepest corridor that produced a connection.
    pub deepest_connection: usize,
}

struct Node {
    parent: usize,
    face: usize,
    /// Edge of the parent face crossed to reach this face (unused at the root).
    crossed: usize,
    entry: usize,
    iso: Iso,
    right: Vec2,
    left: Vec2,
    depth: usize,
}

/// Distance from `p` to the part of segment `a b` that lies in the wedge `(r, l)` at `p`.
fn wedge_distance(p: Vec2, r: Vec2, l: Vec2, a: Vec2, b: Vec2) -> f64 {
    let mut lo: f64 = 0.0;
    let mut hi: f64 = 1.0;
    for (x, y) in [(r, 1.0), (l, -1.0)] {
        // Constraint y * cross(x, a + t (b - a) - p) >= 0.
        let c0 = y * x.cross(a - p);
        let c1 = y * x.cross(b - a);
        if c1.abs() < 1e-300 {
            if c0 < 0.0 {
                return f64::INFINITY;
            }
        } else {
            let t = -c0 / c1;
            if c1 > 0.0 {
                lo = lo.max(t);
            } else {
                hi = hi.min(t);
            }
        }
    }
    if lo > hi + 1e-12 {
        return f64::INFINITY;
    }
    let lo = lo.clamp(0.0, 1.0);
    let hi = hi.clamp(0.0, 1.0);
    crate::geom::point_segment_distance(p, a.lerp(b, lo), a.lerp(b, hi))
}

fn reverse_key(c: &Complex, end_corner: (usize, usize), crossings: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut out = vec![end_corner];
    for &(f, e) in crossings.iter().rev() {
        let h = c.neighbor(f, e).unwrap();
        out.push((h.face, h.edge));
    }
    out
}

fn edge_connection(c: &Complex, f: usize, i: usize) -> SaddleConnection {
    let p = c.points(f);
    let j = (i + 1) % 3;
    let me = HalfEdge::new(f, i);
    let key = match c.neighbor(f, i) {
        Some(h) if h < me => h,
        _ => me,
    };
    let (sv, ev) = (c.vertex(f, i), c.vertex(f, j));
    SaddleConnection {
        start: c.label(sv),
        end: c.label(ev),
        start_vertex: sv,
        end_vertex: ev,
        start_angle: c.corner_offset(f, i),
        end_angle: c.absolute_angle(f, j, p[i] - p[j]),
        start_corner: (f, i),
        end_corner: (f, j),
        corridor: Corridor::single(f),
        holonomy: p[j] - p[i],
        length: p[i].dist(p[j]),
        iota: 0,
        key: ConnectionKey::Edge(key),
    }
}

/// Sector search from one corner.
fn search_corner(c: &Complex, f: usize, i: usize, opts: EnumOptions, out: &mut Vec<SaddleConnection>) -> (usize, bool) {
    let tol = c.tol();
    let r_max = opts.max_length + tol;
    let q = c.points(f);
    let p = q[i];
    if q[(i + 1) % 3].dist(p) <= r_max {
        out.push(edge_connection(c, f, i));
    }
    let mut max_depth = 1;
    let mut cap_hit = false;
    let first = (i + 1) % 3;
    let Some(h0) = c.neighbor(f, first) else {
        return (max_depth, cap_hit);
    };
    let right = (q[(i + 1) % 3] - p).unit();
    let left = (q[(i + 2) % 3] - p).unit();
    if wedge_distance(p, right, left, q[first], q[(first + 1) % 3]) > r_max {
        return (max_depth, cap_hit);
    }
    let mut arena = vec![Node { parent: usize::MAX, face: f, crossed: 0, entry: 0, iso: Iso::IDENTITY, right, left, depth: 1 }];
    let root_iso = Iso::IDENTITY.compose(&c.gluing_iso(f, first).inverse());
    arena.push(Node { parent: 0, face: h0.face, crossed: first, entry: h0.edge, iso: root_iso, right, left, depth: 2 });
    let mut stack = vec![1usize];
    while let Some(k) = stack.pop() {
        let (g, e_in, iso, r, l, depth) = {
            let n = &arena[k];
            (n.face, n.entry, n.iso, n.right, n.left, n.depth)
        };
        max_depth = max_depth.max(depth);
        let qg = c.points(g);
        let x = iso.apply(qg[e_in]);
        let y = iso.apply(qg[(e_in + 1) % 3]);
        let z = iso.apply(qg[(e_in + 2) % 3]);
        let w = z - p;
        let zr = r.cross(w);
        let zl = w.cross(l);
        let inside = zr > tol && zl > tol;
        if inside && w.norm() <= r_max {
            out.push(record(c, &arena, k, p, z, (f, i)));
        }
        let zd = w.unit();
        let mut children = Vec::with_capacity(2);
        if inside {
            children.push(((e_in + 1) % 3, y, z, r, zd));
            children.push(((e_in + 2) % 3, z, x, zd, l));
        } else if zr <= tol {
            children.push(((e_in + 2) % 3, z, x, r, l));
        } else {
            children.push(((e_in + 1) % 3, y, z, r, l));
        }
        for (e, a, b, cr, cl) in children {
            let Some(h) = c.neighbor(g, e) else { continue };
            if wedge_distance(p, cr, cl, a, b) > r_max {
                continue;
            }
            if depth + 1 > opts.depth_cap {
                cap_hit = true;
                continue;
            }
            let child_iso = iso.compose(&c.gluing_iso(g, e).inverse()).normalized();
            arena.push(Node { parent: k, face: h.face, crossed: e, entry: h.edge, iso: child_iso, right: cr, left: cl, depth: depth + 1 });
            stack.push(arena.len() - 1);
        }
    }
    (max_depth, cap_hit)
}

fn record(c: &Complex, arena: &[Node], k: usize, p: Vec2, z: Vec2, root: (usize, usize)) -> SaddleConnection {
    let mut faces = Vec::new();
    let mut edges = Vec::new();
    let mut j = k;
    while j != usize::MAX {
        faces.push(arena[j].face);
        if arena[j].parent != usize::MAX {
            edges.push(arena[j].crossed);
        }
        j = arena[j].parent;
    }
    faces.reverse();
    edges.reverse();
    let crossings: Vec<(usize, usize)> = faces.iter().zip(&edges).map(|(&f, &e)| (f, e)).collect();
    let n = &arena[k];
    let end_corner = (n.face, (n.entry + 2) % 3);
    let back = n.iso.inverse().apply_vec(p - z);
    let start_vertex = c.vertex(root.0, root.1);
    let end_vertex = c.vertex(end_corner.0, end_corner.1);
    let mut fwd = vec![root];
    fwd.extend(crossings.iter().copied());
    let rev = reverse_key(c, end_corner, &crossings);
    let key = if fwd <= rev { fwd } else { rev };
    SaddleConnection {
        start: c.label(start_vertex),
        end: c.label(end_vertex),
        start_vertex,
        end_vertex,
        start_angle: c.absolute_angle(root.0, root.1, z - p),
        end_angle: c.absolute_angle(end_corner.0, end_corner.1, back),
        start_corner: root,
        end_corner,
        corridor: Corridor { faces, edges },
        holonomy: z - p,
        length: z.dist(p),
        iota: 0,
        key: ConnectionKey::Path(key),
    }
}

/// Saddle connection read off a trajectory that starts and ends at cone points.
pub fn from_trajectory(c: &Complex, traj: &Trajectory) -> Result<Option<SaddleConnection>, TraceError> {
    let (Some(sv), Some(ev)) = (traj.start.cone_vertex(), traj.end.cone_vertex()) else {
        return Ok(None);
    };
    let first = &traj.threads[0];
    let last = traj.threads.last().unwrap();
    let (Endpoint::Vertex(i), Endpoint::Vertex(j)) = (first.entry_at, last.exit_at) else {
        return Ok(None);
    };
    let start_corner = (first.face, i);
    let end_corner = (last.face, j);
    let mut faces = vec![first.face];
    let mut edges = Vec::new();
    let mut crossings = Vec::new();
    for (k, t) in traj.threads.iter().enumerate().take(traj.threads.len() - 1) {
        let Endpoint::Edge(e) = t.exit_at else { return Ok(None) };
        crossings.push((t.face, e));
        edges.push(e);
        faces.push(traj.threads[k + 1].face);
    }
    let key = if traj.threads.len() == 1 {
        let e = if j == (i + 1) % 3 { i } else { j };
        let me = HalfEdge::new(first.face, e);
        ConnectionKey::Edge(match c.neighbor(first.face, e) {
            Some(h) if h < me => h,
            _ => me,
        })
    } else {
        let mut fwd = vec![start_corner];
        fwd.extend(crossings.iter().copied());
        let rev = reverse_key(c, end_corner, &crossings);
        ConnectionKey::Path(if fwd <= rev { fwd } else { rev })
    };
    let iota = if traj.threads.len() == 1 { 0 } else { self_intersection_number(c, traj)? };
    Ok(Some(SaddleConnection {
        start: c.label(sv),
        end: c.label(ev),
        start_vertex: sv,
        end_vertex: ev,
        start_angle: c.absolute_angle(first.face, i, first.dir),
        end_angle: c.absolute_angle(last.face, j, -last.dir),
        start_corner,
        end_corner,
        corridor: Corridor { faces, edges },
        holonomy: first.dir * traj.length,
        length: traj.length,
        iota,
        key,
    }))
}

fn cmp_len(a: &SaddleConnection, b: &SaddleConnection) -> Ordering {
    a.length.partial_cmp(&b.length).unwrap().then_with(|| a.key.cmp(&b.key))
}

/// Every saddle connection of length at most `opts.max_length` on the complex, once each.
pub fn enumerate_on_complex(c: &Complex, opts: EnumOptions) -> Result<EnumResult, EnumError> {
    let corners: Vec<(usize, usize)> = (0..c.num_faces()).flat_map(|f| (0..3).map(move |i| (f, i))).collect();
    let parts: Vec<(Vec<SaddleConnection>, usize, bool)> = corners
        .par_iter()
        .map(|&(f, i)| {
            let mut out = Vec::new();
            let (d, hit) = search_corner(c, f, i, opts, &mut out);
            (out, d, hit)
        })
        .collect();
    let mut all = Vec::new();
    let mut max_depth = 0;
    let mut cap_hit = false;
    for (v, d, h) in parts {
        all.extend(v);
        max_depth = max_depth.max(d);
        cap_hit |= h;
    }
    all.sort_by(|a, b| a.key.cmp(&b.key));
    all.dedup_by(|a, b| a.key == b.key);
    let with_iota: Result<Vec<SaddleConnection>, TraceError> = all
        .into_par_iter()
        .map(|mut s| {
            if !s.is_edge() {
                s.iota = self_intersection_number(c, &s.trajectory(c))?;
            }
            Ok(s)
        })
        .collect();
    let mut connections = with_iota?;
    connections.sort_by(cmp_len);
    let deepest_connection = connections.iter().map(|s| s.depth()).max().unwrap_or(0);
    Ok(EnumResult { connections, depth_cap: opts.depth_cap, max_depth, cap_hit, deepest_connection })
}

/// `2 m₀ (R / d(T) + 1)`, the combinatorial length any trajectory of length `R` can reach.
pub fn depth_cap(surface: &FlatConeSurface, tri: &Triangulation, r: f64) -> usize {
    let m0 = m0_constant(0, surface.n(), &surface.curvatures()) as f64;
    (2.0 * m0 * (r / tri.width() + 1.0)).ceil() as usize
}

/// Depth cap for a closed complex that need not be Delaunay, from its own width.
pub fn depth_cap_for(c: &Complex, r: f64) -> usize {
    let k: Vec<f64> = c.cone_points.iter().map(|p| p.curvature).collect();
    let m0 = m0_constant(0, k.len().max(3), &k) as f64;
    (2.0 * m0 * (r / crate::delaunay::width(c) + 1.0)).ceil() as usize
}

pub fn enumerate_with_triangulation(tri: &Triangulation, r: f64) -> Result<EnumResult, EnumError> {
    let cap = depth_cap(&tri.surface, tri, r);
    enumerate_on_complex(tri.complex(), EnumOptions { max_length: r, depth_cap: cap })
}

pub fn enumerate_saddle_connections(surface: &FlatConeSurface, r: f64) -> Result<Vec<SaddleConnection>, EnumError> {
    let tri = delaunay_triangulation(surface)?;
    Ok(enumerate_with_triangulation(&tri, r)?.connections)
}

/// Length of the shortest saddle connection.
pub fn relative_systole(surface: &FlatConeSurface) -> Result<f64, EnumError> {
    let tri = delaunay_triangulation(surface)?;
    let r = tri.shortest_edge();
    let found = enumerate_with_triangulation(&tri, r)?;
    Ok(found.connections.iter().map(|s| s.length).fold(r, f64::min))
}

/// Canonical (smaller half-edge, parameter) form of a crossing of half-edge `(f, e)`.
fn canonical_crossing(c: &Complex, f: usize, e: usize, u: f64) -> (HalfEdge, f64) {
    let me = HalfEdge::new(f, e);
    match c.neighbor(f, e) {
        Some(h) if h < me => (h, 1.0 - u),
        _ => (me, u),
    }
}

/// Result of pushing a geodesic off one side of a saddle connection.
fn cylinder_from(c: &Complex, sc: &SaddleConnection, reverse: bool, r: f64) -> Result<Option<CylinderFamily>, TraceError> {
    let traj = sc.trajectory(c);
    let k = (0..traj.threads.len())
        .max_by(|&a, &b| traj.threads[a].length.partial_cmp(&traj.threads[b].length).unwrap())
        .unwrap();
    let t = &traj.threads[k];
    let mut d = t.dir;
    if reverse {
        d = -d;
    }
    let scale = c.area().sqrt();
    let eps = 1e-7 * scale;
    let mid = (t.entry + t.exit) * 0.5;
    let p0 = mid + d.perp() * eps;
    if !c.contains(t.face, p0) {
        return Ok(None);
    }
    let start = SurfacePoint { face: t.face, point: p0 };
    let tr = match trace(c, Start::Point(start), d, r + eps) {
        Ok(x) => x,
        Err(TraceError::DegenerateStart(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    // Develop along the trajectory and look for the first return through p0.
    let close_tol = 1e-9 * scale;
    let mut iso = Iso::IDENTITY;
    let f0 = tr.threads[0].face;
    let d0 = tr.threads[0].dir;
    let p0 = tr.threads[0].entry;
    let mut edges_dev: Vec<(Vec2, Vec2)> = Vec::new();
    let mut corridor = Corridor::single(f0);
    let mut crossed: Vec<(usize, usize)> = Vec::new();
    let mut closing: Option<f64> = None;
    for (j, th) in tr.threads.iter().enumerate() {
        if j > 0 {
            let prev = &tr.threads[j - 1];
            let Endpoint::Edge(e) = prev.exit_at else { break };
            let q = c.points(prev.face);
            edges_dev.push((iso.apply(q[e]), iso.apply(q[(e + 1) % 3])));
            crossed.push((prev.face, e));
            iso = iso.compose(&c.gluing_iso(prev.face, e).inverse()).normalized();
            corridor.edges.push(e);
            corridor.faces.push(th.face);
            if th.face == f0 && th.dir.dist(d0) <= 1e-9 {
                let off = th.dir.cross(p0 - th.entry);
                let along = th.dir.dot(p0 - th.entry);
                if off.abs() <= close_tol && along >= -close_tol && along <= th.length + close_tol {
                    closing = Some(th.start_s + along);
                    break;
                }
            }
        }
    }
    let Some(len) = closing else { return Ok(None) };
    if len > r + close_tol || iso.angle().abs() > 1e-9 {
        return Ok(None);
    }
    let shift = iso.apply(p0) - p0;
    if shift.dist(d0 * len) > 1e3 * close_tol {
        return Ok(None);
    }
    // The family: offsets at which the parallel line crosses every edge of the corridor.
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for &(a, b) in &edges_dev {
        let ra = d0.cross(a - p0);
        let rb = d0.cross(b - p0);
        lo = lo.max(ra.min(rb));
        hi = hi.min(ra.max(rb));
    }
    if !(lo < 0.0 && hi > 0.0) {
        return Ok(None);
    }
    let r_mid = 0.5 * (lo + hi);
    let pm = p0 + d0.perp() * r_mid;
    let mut crossings = Vec::with_capacity(edges_dev.len());
    for (&(a, b), &(f, e)) in edges_dev.iter().zip(&crossed) {
        let u = (a - pm).cross(d0) / d0.cross(b - a);
        crossings.push(canonical_crossing(c, f, e, -u));
    }
    // Start the core curve on the first crossed edge, in the first face's chart.
    let (a, b) = edges_dev[0];
    let u0 = (pm - a).cross(d0) / (b - a).cross(d0);
    let x0 = a.lerp(b, u0.clamp(0.0, 1.0));
    let core = trace(c, Start::Point(SurfacePoint { face: f0, point: x0 }), d0, len)?;
    let iota = if core.closed {
        self_intersection_number(c, &core)?
    } else {
        return Ok(None);
    };
    Ok(Some(CylinderFamily {
        circumference: len,
        height: hi - lo,
        face: f0,
        point: x0,
        direction: d0,
        corridor,
        iota,
        boundary: Vec::new(),
        crossings,
    }))
}

fn same_family(a: &CylinderFamily, b: &CylinderFamily) -> bool {
    if (a.circumference - b.circumference).abs() > 1e-7 * a.circumference.max(1.0) {
        return false;
    }
    let Some(&(h, u)) = a.crossings.iter().min_by(|x, y| x.partial_cmp(y).unwrap()) else {
        return false;
    };
    b.crossings.iter().any(|&(h2, u2)| h2 == h && (u - u2).abs() <= 1e-6)
}

/// Maximal cylinders with circumference at most `r`, given the saddle connections up to `r`.
pub fn cylinders_from_connections(c: &Complex, scs: &[SaddleConnection], r: f64) -> Result<Vec<CylinderFamily>, EnumError> {
    let found: Result<Vec<Vec<(usize, CylinderFamily)>>, TraceError> = scs
        .par_iter()
        .enumerate()
        .map(|(k, sc)| {
            let mut v = Vec::new();
            for rev in [false, true] {
                if let Some(cy) = cylinder_from(c, sc, rev, r)? {
                    v.push((k, cy));
                }
            }
            Ok(v)
        })
        .collect();
    let mut out: Vec<CylinderFamily> = Vec::new();
    for (k, cy) in found?.into_iter().flatten() {
        match out.iter_mut().find(|o| same_family(o, &cy)) {
            Some(o) => {
                if !o.boundary.contains(&k) {
                    o.boundary.push(k);
                }
            }
            None => {
                let mut cy = cy;
                cy.boundary.push(k);
                out.push(cy);
            }
        }
    }
    out.sort_by(|a, b| a.circumference.partial_cmp(&b.circumference).unwrap());
    Ok(out)
}

pub fn enumerate_cylinders(surface: &FlatConeSurface, r: f64) -> Result<Vec<CylinderFamily>, EnumError> {
    let tri = delaunay_triangulation(surface)?;
    let scs = enumerate_with_triangulation(&tri, r)?.connections;
    cylinders_from_connections(tri.complex(), &scs, r)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CountRow {
    pub r: f64,
    pub n_sc: usize,
    pub n_cg: usize,
}

/// `N^sc` and `N^cg` of the unit-area rescaling, sampled on a grid of lengths.
pub fn counting_functions(surface: &FlatConeSurface, grid: &[f64]) -> Result<Vec<CountRow>, EnumError> {
    let unit = surface.normalized();
    let r = grid.iter().copied().fold(0.0, f64::max);
    let tri = delaunay_triangulation(&unit)?;
    let scs = enumerate_with_triangulation(&tri, r)?.connections;
    let cyl = cylinders_from_connections(tri.complex(), &scs, r)?;
    Ok(count_table(&scs, &cyl, grid))
}

pub fn count_table(scs: &[SaddleConnection], cyl: &[CylinderFamily], grid: &[f64]) -> Vec<CountRow> {
    grid.iter()
        .map(|&r| CountRow {
            r,
            n_sc: scs.iter().filter(|s| s.length <= r).count(),
            n_cg: cyl.iter().filter(|c| c.circumference <= r).count(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::tracer::trace_from_cone;
    use std::f64::consts::PI;

    #[test]
    fn equilateral_edges() {
        let s = fixtures::doubled_equilateral();
        let scs = enumerate_saddle_connections(&s, 1.01).unwrap();
        assert_eq!(scs.len(), 3);
        for sc in &scs {
            assert!((sc.length - 1.0).abs() < 1e-12);
            assert_eq!(sc.iota, 0);
        }
        assert!(enumerate_saddle_connections(&s, 0.5).unwrap().is_empty());
        assert!((relative_systole(&s).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn retrace_matches() {
        let s = fixtures::doubled_polygon_surface(&fixtures::thirty_sixty_ninety());
        let tri = delaunay_triangulation(&s).unwrap();
        let scs = enumerate_with_triangulation(&tri, 3.0).unwrap().connections;
        assert!(scs.len() > 10);
        for sc in &scs {
            let t = trace_from_cone(tri.complex(), sc.start_vertex, sc.start_angle, sc.length + 1e-6).unwrap();
            assert_eq!(t.end.cone_vertex(), Some(sc.end_vertex));
            assert!((t.length - sc.length).abs() < 1e-7);
            let built = sc.trajectory(tri.complex());
            assert_eq!(built.threads.len(), t.threads.len());
            assert_eq!(self_intersection_number(tri.complex(), &t).unwrap(), sc.iota);
        }
        assert!((relative_systole(&s).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn scaling_relsys() {
        let s = fixtures::doubled_polygon_surface(&fixtures::thirty_sixty_ninety());
        let a = relative_systole(&s).unwrap();
        let b = relative_systole(&s.scaled(2.5)).unwrap();
        assert!((b - 2.5 * a).abs() < 1e-12);
    }

    #[test]
    fn fagnano_family() {
        let s = fixtures::doubled_equilateral();
        let cyl = enumerate_cylinders(&s, 3.1).unwrap();
        let f = cyl.iter().find(|c| (c.circumference - 3.0).abs() < 1e-9).expect("Fagnano family");
        assert!(f.height > 0.0);
        assert_eq!(f.iota, 3);
        assert!(cyl.iter().all(|c| c.circumference >= (PI / 3.0).sqrt() * s.area().sqrt() - 1e-9));
    }

    #[test]
    fn delta_witness_contains_gamma_m() {
        let theta = 0.1;
        for m in 1..=4 {
            let e = fixtures::delta_witness(theta, m).unwrap();
            let want = 2.0 * (m as f64 * theta / 2.0).sin();
            let scs = enumerate_saddle_connections(&e.surface, want + 1e-6).unwrap();
            assert!(
                scs.iter().any(|sc| (sc.length - want).abs() < 1e-9 && sc.iota == m - 1),
                "m = {m}"
            );
        }
    }
}
