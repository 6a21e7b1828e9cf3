//! Straight-line geodesic propagation across face charts.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{orient, point_segment_distance, Iso, Vec2, TAU};
use crate::surface::Complex;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("trajectory passes within {tol:e} of cone point {label} at length {at_length}")]
    VertexGrazing { label: usize, at_length: f64, tol: f64 },
    #[error("degenerate start: {0}")]
    DegenerateStart(String),
    #[error("thread cap {0} reached before the budget was used up")]
    ThreadCap(usize),
    #[error("strands overlap along a segment at lengths {s} and {t}; self-intersection is undefined")]
    TangentialOverlap { s: f64, t: f64 },
    #[error("trajectory is contained in an edge of the triangulation")]
    ContainedInEdge,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub face: usize,
    pub point: Vec2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Start {
    Point(SurfacePoint),
    /// The vertex of corner `corner` in `face`.
    Corner { face: usize, corner: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Endpoint {
    Edge(usize),
    Vertex(usize),
    Interior,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CornerSide {
    Left,
    Right,
    Both,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thread {
    pub face: usize,
    pub entry: Vec2,
    pub exit: Vec2,
    pub entry_at: Endpoint,
    pub exit_at: Endpoint,
    /// Unit direction in the chart of `face`.
    pub dir: Vec2,
    /// Arc length at which the thread starts.
    pub start_s: f64,
    pub length: f64,
}

impl Thread {
    /// Which side of the trajectory the cut corner lies on.
    pub fn side(&self, c: &Complex) -> CornerSide {
        match (self.entry_at, self.exit_at) {
            (Endpoint::Vertex(_), _) | (_, Endpoint::Vertex(_)) => CornerSide::Both,
            (Endpoint::Edge(a), Endpoint::Edge(b)) if a != b => {
                let v = if b == (a + 1) % 3 { b } else { a };
                let q = c.points(self.face)[v];
                let s = self.dir.cross(q - self.entry);
                if s > 0.0 {
                    CornerSide::Left
                } else {
                    CornerSide::Right
                }
            }
            _ => CornerSide::None,
        }
    }

    /// A thread joining two vertices of its face runs along an edge.
    pub fn along_edge(&self) -> bool {
        matches!((self.entry_at, self.exit_at), (Endpoint::Vertex(i), Endpoint::Vertex(j)) if i != j)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Status {
    ConePoint {
        label: usize,
        vertex: usize,
        face: usize,
        corner: usize,
        /// Absolute angle at the vertex of the ray pointing along the trajectory.
        angle: f64,
    },
    Interior(SurfacePoint),
    BudgetExhausted(SurfacePoint),
    Boundary(SurfacePoint),
}

impl Status {
    pub fn cone_vertex(&self) -> Option<usize> {
        match self {
            Status::ConePoint { vertex, .. } => Some(*vertex),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub threads: Vec<Thread>,
    pub length: f64,
    pub start: Status,
    pub end: Status,
    pub origin: Start,
    pub origin_dir: Vec2,
    /// Returned to its start point with its start direction.
    pub closed: bool,
}

impl Trajectory {
    pub fn combinatorial_length(&self) -> usize {
        self.threads.len()
    }

    pub fn end_dir(&self) -> Vec2 {
        self.threads.last().map(|t| t.dir).unwrap_or(self.origin_dir)
    }

    pub fn end_point(&self) -> SurfacePoint {
        let t = self.threads.last().expect("nonempty trajectory");
        SurfacePoint { face: t.face, point: t.exit }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TraceOptions {
    /// When false, reaching a cone point is an error rather than an endpoint.
    pub stop_at_cone: bool,
    pub max_threads: usize,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions { stop_at_cone: true, max_threads: 10_000_000 }
    }
}

pub fn trace(c: &Complex, start: Start, dir: Vec2, budget: f64) -> Result<Trajectory, TraceError> {
    trace_with(c, start, dir, budget, TraceOptions::default())
}

/// Face in which a point on an edge should start moving along `d`, with point and
/// direction in that face's chart. Tangent directions go to the face on the left.
fn resolve_point_start(c: &Complex, mut f: usize, mut p: Vec2, mut d: Vec2) -> Result<(usize, Vec2, Vec2, Endpoint), TraceError> {
    let tol = c.tol();
    for _ in 0..3 {
        let q = c.points(f);
        if !c.contains(f, p) {
            return Err(TraceError::DegenerateStart(format!("point {p:?} is outside face {f}")));
        }
        for j in 0..3 {
            if q[j].dist(p) <= tol {
                return Err(TraceError::DegenerateStart(format!(
                    "point coincides with vertex {j} of face {f}; start from the corner instead"
                )));
            }
        }
        let mut moved = false;
        let mut on = Endpoint::Interior;
        for e in 0..3 {
            let a = q[e];
            let b = q[(e + 1) % 3];
            if point_segment_distance(p, a, b) > tol {
                continue;
            }
            on = Endpoint::Edge(e);
            let u = (b - a).unit();
            let out = d.cross(u);
            let leave = if out.abs() <= tol { d.dot(u) < 0.0 } else { out > 0.0 };
            if leave {
                match c.neighbor(f, e) {
                    None => return Err(TraceError::DegenerateStart("direction leaves the domain".into())),
                    Some(h) => {
                        let g = c.gluing_iso(f, e);
                        p = g.apply(p);
                        d = g.apply_vec(d).unit();
                        f = h.face;
                        moved = true;
                        break;
                    }
                }
            }
        }
        if !moved {
            return Ok((f, p, d, on));
        }
    }
    Err(TraceError::DegenerateStart("could not resolve a start face".into()))
}

/// Corner `(f, i)` adjusted so that `d` lies in `[first ray, last ray)`.
fn resolve_corner_start(c: &Complex, mut f: usize, mut i: usize, mut d: Vec2) -> Result<(usize, usize, Vec2), TraceError> {
    let tol = c.tol();
    let v = c.vertex(f, i);
    for _ in 0..c.fan(v).len() + 1 {
        let q = c.points(f);
        let a = c.angle_in_corner(f, i, d);
        let inside = a <= c.corner_angle(f, i) + 1e-9 || a >= TAU - 1e-9;
        if !inside {
            return Err(TraceError::DegenerateStart(format!(
                "direction is outside corner {i} of face {f} (angle {a})"
            )));
        }
        // Along the last ray: hand over to the next corner counterclockwise.
        let last = q[(i + 2) % 3] - q[i];
        let along_last = d.cross(last) <= tol && d.dot(last) > 0.0;
        if along_last {
            match c.neighbor(f, (i + 2) % 3) {
                Some(h) => {
                    d = c.gluing_iso(f, (i + 2) % 3).apply_vec(d).unit();
                    f = h.face;
                    i = h.edge;
                    continue;
                }
                None => return Ok((f, i, d)),
            }
        }
        return Ok((f, i, d));
    }
    Err(TraceError::DegenerateStart("direction does not fit any corner".into()))
}

/// Representative of a point on a glued edge in the face with the smaller id.
pub(crate) fn canonical(c: &Complex, f: usize, p: Vec2, d: Vec2, tol: f64) -> (usize, Vec2, Vec2) {
    let q = c.points(f);
    for e in 0..3 {
        if point_segment_distance(p, q[e], q[(e + 1) % 3]) <= tol {
            if let Some(h) = c.neighbor(f, e) {
                if h.face < f {
                    let g = c.gluing_iso(f, e);
                    return (h.face, g.apply(p), g.apply_vec(d));
                }
            }
        }
    }
    (f, p, d)
}

pub fn trace_with(
    c: &Complex,
    start: Start,
    dir: Vec2,
    budget: f64,
    opts: TraceOptions,
) -> Result<Trajectory, TraceError> {
    let tol = c.tol();
    if !(dir.norm() > 0.0) || !dir.x.is_finite() || !dir.y.is_finite() {
        return Err(TraceError::DegenerateStart("direction must be a nonzero finite vector".into()));
    }
    let d0 = dir.unit();
    let (mut f, mut p, mut d, mut entry_at, start_status) = match start {
        Start::Point(sp) => {
            let (f, p, d, on) = resolve_point_start(c, sp.face, sp.point, d0)?;
            (f, p, d, on, Status::Interior(sp))
        }
        Start::Corner { face, corner } => {
            let (f, i, d) = resolve_corner_start(c, face, corner, d0)?;
            let v = c.vertex(f, i);
            let status = Status::ConePoint {
                label: c.label(v),
                vertex: v,
                face: f,
                corner: i,
                angle: c.absolute_angle(f, i, d),
            };
            (f, c.points(f)[i], d, Endpoint::Vertex(i), status)
        }
    };
    let mut threads: Vec<Thread> = Vec::new();
    let mut s = 0.0;
    let end;
    loop {
        if threads.len() >= opts.max_threads {
            return Err(TraceError::ThreadCap(opts.max_threads));
        }
        let q = c.points(f);
        let remaining = budget - s;
        // Exit through the first outgoing edge line.
        let mut exit: Option<(usize, f64)> = None;
        for e in 0..3 {
            // A ray from a corner leaves through the opposite side; along either adjacent
            // side it reaches the next vertex, which the hit test below catches.
            let adjacent = matches!(entry_at, Endpoint::Vertex(i) if e == i || e == (i + 2) % 3);
            if entry_at == Endpoint::Edge(e) || adjacent {
                continue;
            }
            let a = q[e];
            let b = q[(e + 1) % 3];
            let n = d.cross(b - a);
            if n <= 0.0 {
                continue;
            }
            // Solve orient(a, b, p + t d) = 0.
            let t = (orient(a, b, p) / n).max(0.0);
            if exit.map_or(true, |(_, bt)| t < bt) {
                exit = Some((e, t));
            }
        }
        let mut hit: Option<(usize, f64)> = None;
        for j in 0..3 {
            if entry_at == Endpoint::Vertex(j) {
                continue;
            }
            let w = q[j] - p;
            let t = d.dot(w);
            if t > tol && d.cross(w).abs() <= tol && hit.map_or(true, |(_, bt)| t < bt) {
                hit = Some((j, t));
            }
        }
        let (exit_e, exit_t, exit_pt) = match exit {
            Some((e, t)) => {
                let a = q[e];
                let b = q[(e + 1) % 3];
                let x = p + d * t;
                let u = ((x - a).dot(b - a) / (b - a).norm2()).clamp(0.0, 1.0);
                let x = a.lerp(b, u);
                // An exit point on top of a vertex is a hit of that vertex.
                for (j, y) in [(e, a), ((e + 1) % 3, b)] {
                    if x.dist(y) <= tol && entry_at != Endpoint::Vertex(j) && hit.is_none() {
                        hit = Some((j, d.dot(y - p)));
                    }
                }
                (Some(e), t, x)
            }
            None => (None, f64::INFINITY, p),
        };
        let hit = hit.filter(|&(_, t)| t <= exit_t + tol || exit_e.is_none());
        if let Some((j, t)) = hit {
            if remaining >= t - tol {
                let y = q[j];
                let len = y.dist(p);
                threads.push(Thread { face: f, entry: p, exit: y, entry_at, exit_at: Endpoint::Vertex(j), dir: d, start_s: s, length: len });
                s += len;
                let v = c.vertex(f, j);
                if !opts.stop_at_cone {
                    return Err(TraceError::VertexGrazing { label: c.label(v), at_length: s, tol });
                }
                end = Status::ConePoint { label: c.label(v), vertex: v, face: f, corner: j, angle: c.absolute_angle(f, j, -d) };
                break;
            }
        }
        if exit_e.is_none() {
            if hit.is_none() {
                return Err(TraceError::DegenerateStart(format!("no exit from face {f} at length {s}")));
            }
        }
        if remaining < exit_t - tol || exit_e.is_none() {
            let y = p + d * remaining.max(0.0);
            threads.push(Thread { face: f, entry: p, exit: y, entry_at, exit_at: Endpoint::Interior, dir: d, start_s: s, length: remaining.max(0.0) });
            s = budget;
            end = Status::BudgetExhausted(SurfacePoint { face: f, point: y });
            break;
        }
        if remaining <= exit_t {
            // The budget runs out on the exit edge itself.
            let e = exit_e.unwrap();
            threads.push(Thread { face: f, entry: p, exit: exit_pt, entry_at, exit_at: Endpoint::Edge(e), dir: d, start_s: s, length: remaining.max(0.0) });
            s = budget;
            end = Status::BudgetExhausted(SurfacePoint { face: f, point: exit_pt });
            break;
        }
        let e = exit_e.unwrap();
        let len = exit_pt.dist(p);
        threads.push(Thread { face: f, entry: p, exit: exit_pt, entry_at, exit_at: Endpoint::Edge(e), dir: d, start_s: s, length: len });
        s += len;
        match c.neighbor(f, e) {
            None => {
                end = Status::Boundary(SurfacePoint { face: f, point: exit_pt });
                break;
            }
            Some(h) => {
                let g = c.gluing_iso(f, e);
                let a = q[e];
                let b = q[(e + 1) % 3];
                let u = (exit_pt - a).dot(b - a) / (b - a).norm2();
                let r = c.points(h.face);
                p = r[(h.edge + 1) % 3].lerp(r[h.edge], u);
                d = g.apply_vec(d).unit();
                f = h.face;
                entry_at = Endpoint::Edge(h.edge);
            }
        }
    }
    let mut traj = Trajectory { threads, length: s, start: start_status, end, origin: start, origin_dir: d0, closed: false };
    traj.closed = returns_to_start(c, &traj);
    Ok(traj)
}

pub(crate) fn returns_to_start(c: &Complex, t: &Trajectory) -> bool {
    let (Start::Point(sp), Status::BudgetExhausted(ep)) = (&t.origin, &t.end) else {
        return false;
    };
    if t.length <= 0.0 {
        return false;
    }
    let tol = 1e3 * c.tol();
    let (f0, p0, d0) = canonical(c, sp.face, sp.point, t.origin_dir, tol);
    let (f1, p1, d1) = canonical(c, ep.face, ep.point, t.end_dir(), tol);
    f0 == f1 && p0.dist(p1) <= tol && d0.dist(d1) <= 1e-7
}

/// Trace from the cone point with label `label` at absolute angle `angle`.
pub fn trace_from_cone(c: &Complex, vertex: usize, angle: f64, budget: f64) -> Result<Trajectory, TraceError> {
    let (f, i, phi) = c.corner_at_angle(vertex, angle);
    trace(c, Start::Corner { face: f, corner: i }, c.direction_in_corner(f, i, phi), budget)
}

/// Move a point and a direction from one complex to another with the same cone points
/// and compatible angular coordinates, by tracing from a vertex of the face.
pub fn transfer(from: &Complex, to: &Complex, sp: SurfacePoint, dir: Vec2) -> Result<(SurfacePoint, Vec2), TraceError> {
    let q = from.points(sp.face);
    let j = (0..3)
        .max_by(|&a, &b| q[a].dist(sp.point).partial_cmp(&q[b].dist(sp.point)).unwrap())
        .unwrap();
    let r = q[j].dist(sp.point);
    let u = (sp.point - q[j]).unit();
    let alpha = from.absolute_angle(sp.face, j, u);
    let label = from.label(from.vertex(sp.face, j));
    let v = to
        .vertex_by_label(label)
        .ok_or_else(|| TraceError::DegenerateStart(format!("label {label} missing from target complex")))?;
    let t = trace_with(to, {
        let (f, i, _) = to.corner_at_angle(v, alpha);
        Start::Corner { face: f, corner: i }
    }, {
        let (f, i, phi) = to.corner_at_angle(v, alpha);
        to.direction_in_corner(f, i, phi)
    }, r, TraceOptions { stop_at_cone: false, ..Default::default() })?;
    let Status::BudgetExhausted(ep) = t.end else {
        return Err(TraceError::DegenerateStart("transfer path ended early".into()));
    };
    let rot = Iso::segment_map(Vec2::ZERO, u, Vec2::ZERO, t.end_dir());
    Ok((ep, rot.apply_vec(dir).unit()))
}

/// Re-trace `traj` (traced on `surface`) on the complex `tri` and return its threads
/// there together with the combinatorial length.
pub fn decompose_threads(surface: &Complex, traj: &Trajectory, tri: &Complex) -> Result<(Vec<Thread>, usize), TraceError> {
    let t = match traj.origin {
        Start::Corner { face, corner } => {
            let a = surface.absolute_angle(face, corner, traj.origin_dir);
            let v = tri
                .vertex_by_label(surface.label(surface.vertex(face, corner)))
                .ok_or_else(|| TraceError::DegenerateStart("label missing from triangulation".into()))?;
            trace_from_cone(tri, v, a, traj.length + tri.tol())?
        }
        Start::Point(sp) => {
            let (p, d) = transfer(surface, tri, sp, traj.origin_dir)?;
            trace(tri, Start::Point(p), d, traj.length)?
        }
    };
    if t.threads.len() == 1 && t.threads[0].along_edge() {
        return Err(TraceError::ContainedInEdge);
    }
    let m = t.threads.len();
    Ok((t.threads, m))
}

/// Indices `i` such that threads `i` and `i + 1` cut corners on opposite sides.
pub fn corner_switches(c: &Complex, traj: &Trajectory) -> Vec<usize> {
    let sides: Vec<CornerSide> = traj.threads.iter().map(|t| t.side(c)).collect();
    (0..sides.len().saturating_sub(1)).filter(|&i| is_switch(sides[i], sides[i + 1])).collect()
}

pub fn is_switch(a: CornerSide, b: CornerSide) -> bool {
    use CornerSide::*;
    matches!((a, b), (Left, Right) | (Right, Left) | (Both, Left | Right | Both) | (Left | Right, Both))
}

struct Hit {
    x: Vec2,
    si: f64,
    sj: f64,
    di: Vec2,
    dj: Vec2,
}

/// Intersection of threads `a` and `b` of the same face, if any.
fn thread_hit(a: &Thread, b: &Thread, len: f64, closed: bool, tol: f64) -> Result<Option<Hit>, TraceError> {
    let w = b.entry - a.entry;
    let cr = a.dir.cross(b.dir);
    if cr.abs() <= 1e-12 {
        // Parallel: overlapping collinear strands are an error unless they are one visit.
        if a.dir.cross(w).abs() > tol {
            return Ok(None);
        }
        let sign = a.dir.dot(b.dir).signum();
        let (b0, b1) = (a.dir.dot(w), a.dir.dot(w) + sign * b.length);
        let (lo, hi) = (b0.min(b1), b0.max(b1));
        if hi < -tol || lo > a.length + tol {
            return Ok(None);
        }
        let ta = lo.max(0.0);
        let tb = (ta - b0) * sign;
        let si = a.start_s + ta;
        let sj = b.start_s + tb.clamp(0.0, b.length);
        if same_s(si, sj, len, closed, tol) {
            return Ok(None);
        }
        return Err(TraceError::TangentialOverlap { s: si.min(sj), t: si.max(sj) });
    }
    let t = w.cross(b.dir) / cr;
    let u = w.cross(a.dir) / cr;
    if t < -tol || t > a.length + tol || u < -tol || u > b.length + tol {
        return Ok(None);
    }
    let t = t.clamp(0.0, a.length);
    let u = u.clamp(0.0, b.length);
    Ok(Some(Hit { x: a.entry + a.dir * t, si: a.start_s + t, sj: b.start_s + u, di: a.dir, dj: b.dir }))
}

fn usable(s: f64, len: f64, closed: bool, tol: f64) -> Option<f64> {
    if closed {
        return Some(if s >= len - tol { 0.0 } else { s });
    }
    if s <= tol || s >= len - tol {
        None
    } else {
        Some(s)
    }
}

fn same_s(a: f64, b: f64, len: f64, closed: bool, tol: f64) -> bool {
    let d = (a - b).abs();
    d <= tol || (closed && (len - d).abs() <= tol)
}

/// Number of transverse pairs over all interior points of the trajectory.
pub fn self_intersection_number(c: &Complex, traj: &Trajectory) -> Result<usize, TraceError> {
    let tol = 1e2 * c.tol();
    let len = traj.length;
    let closed = traj.closed;
    let mut by_face: HashMap<usize, Vec<usize>> = HashMap::new();
    for (k, t) in traj.threads.iter().enumerate() {
        by_face.entry(t.face).or_default().push(k);
    }
    let mut faces: Vec<_> = by_face.into_iter().collect();
    faces.sort_by_key(|x| x.0);
    // Visits grouped by canonical point: (face, point, list of (s, dir)).
    let mut points: Vec<(usize, Vec2, Vec<(f64, Vec2)>)> = Vec::new();
    let mut grid: HashMap<(usize, i64, i64), Vec<usize>> = HashMap::new();
    let cell = (tol * 1e3).max(1e-6);
    for (f, ids) in &faces {
        for (a, b) in candidate_pairs(&traj.threads, ids) {
            let ta = &traj.threads[a];
            let tb = &traj.threads[b];
            let Some(h) = thread_hit(ta, tb, len, closed, tol)? else { continue };
            if same_s(h.si, h.sj, len, closed, tol) {
                continue;
            }
            let (Some(si), Some(sj)) = (usable(h.si, len, closed, tol), usable(h.sj, len, closed, tol)) else {
                continue;
            };
            let (cf, cx, cdi) = canonical(c, *f, h.x, h.di, tol);
            let (_, _, cdj) = canonical(c, *f, h.x, h.dj, tol);
            let key = (cf, (cx.x / cell).floor() as i64, (cx.y / cell).floor() as i64);
            let mut found = None;
            'outer: for dx in -1..=1 {
                for dy in -1..=1 {
                    if let Some(list) = grid.get(&(key.0, key.1 + dx, key.2 + dy)) {
                        for &k in list {
                            if points[k].1.dist(cx) <= tol {
                                found = Some(k);
                                break 'outer;
                            }
                        }
                    }
                }
            }
            let k = match found {
                Some(k) => k,
                None => {
                    points.push((cf, cx, Vec::new()));
                    grid.entry(key).or_default().push(points.len() - 1);
                    points.len() - 1
                }
            };
            for (s, d) in [(si, cdi), (sj, cdj)] {
                if !points[k].2.iter().any(|&(s2, _)| same_s(s, s2, len, closed, tol)) {
                    points[k].2.push((s, d));
                }
            }
        }
    }
    let mut count = 0;
    for (_, _, visits) in &points {
        for i in 0..visits.len() {
            for j in i + 1..visits.len() {
                if visits[i].1.cross(visits[j].1).abs() > 1e-9 {
                    count += 1;
                } else {
                    return Err(TraceError::TangentialOverlap { s: visits[i].0, t: visits[j].0 });
                }
            }
        }
    }
    Ok(count)
}

/// Pairs of threads whose bounding boxes share a grid cell.
fn candidate_pairs(threads: &[Thread], ids: &[usize]) -> Vec<(usize, usize)> {
    if ids.len() <= 48 {
        let mut out = Vec::new();
        for (x, &a) in ids.iter().enumerate() {
            for &b in &ids[x + 1..] {
                out.push((a, b));
            }
        }
        return out;
    }
    let (mut lo, mut hi) = (Vec2::new(f64::INFINITY, f64::INFINITY), Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for &k in ids {
        for p in [threads[k].entry, threads[k].exit] {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
    }
    let cells = (ids.len() as f64).sqrt().ceil().max(1.0);
    let w = ((hi.x - lo.x).max(hi.y - lo.y) / cells).max(1e-12);
    let pad = 1e-7 * w.max(1.0);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for &k in ids {
        let t = &threads[k];
        let x0 = ((t.entry.x.min(t.exit.x) - pad - lo.x) / w).floor() as i64;
        let x1 = ((t.entry.x.max(t.exit.x) + pad - lo.x) / w).floor() as i64;
        let y0 = ((t.entry.y.min(t.exit.y) - pad - lo.y) / w).floor() as i64;
        let y1 = ((t.entry.y.max(t.exit.y) + pad - lo.y) / w).floor() as i64;
        for gx in x0..=x1 {
            for gy in y0..=y1 {
                grid.entry((gx, gy)).or_default().push(k);
            }
        }
    }
    let mut seen = std::collections::HashSet::new();
    for list in grid.values() {
        for (x, &a) in list.iter().enumerate() {
            for &b in &list[x + 1..] {
                seen.insert((a.min(b), a.max(b)));
            }
        }
    }
    let mut out: Vec<_> = seen.into_iter().collect();
    out.sort_unstable();
    out
}

/// Brute-force count: every pair of threads sharing a face, deduplicated by the pair of
/// arc-length parameters of the meeting.
pub fn self_intersection_oracle(c: &Complex, traj: &Trajectory) -> Result<usize, TraceError> {
    let tol = 1e2 * c.tol();
    let len = traj.length;
    let closed = traj.closed;
    let n = traj.threads.len();
    let mut pairs: Vec<(f64, f64, bool)> = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let (ta, tb) = (&traj.threads[a], &traj.threads[b]);
            if ta.face != tb.face {
                continue;
            }
            let Some(h) = thread_hit(ta, tb, len, closed, tol)? else { continue };
            if same_s(h.si, h.sj, len, closed, tol) {
                continue;
            }
            let (Some(si), Some(sj)) = (usable(h.si, len, closed, tol), usable(h.sj, len, closed, tol)) else {
                continue;
            };
            let transverse = h.di.cross(h.dj).abs() > 1e-9;
            pairs.push((si.min(sj), si.max(sj), transverse));
        }
    }
    pairs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut kept: Vec<(f64, f64, bool)> = Vec::new();
    for p in pairs {
        if !kept.iter().rev().take(64).any(|q| (q.0 - p.0).abs() <= tol && (q.1 - p.1).abs() <= tol) {
            kept.push(p);
        }
    }
    if let Some(p) = kept.iter().find(|p| !p.2) {
        return Err(TraceError::TangentialOverlap { s: p.0, t: p.1 });
    }
    Ok(kept.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use std::f64::consts::PI;

    #[test]
    fn single_thread_budget() {
        let s = fixtures::doubled_equilateral();
        let p = SurfacePoint { face: 0, point: Vec2::new(0.5, 0.2) };
        let t = trace(&s, Start::Point(p), Vec2::new(1.0, 0.0), 0.05).unwrap();
        assert_eq!(t.threads.len(), 1);
        assert!(matches!(t.end, Status::BudgetExhausted(_)));
        assert_eq!(self_intersection_number(&s, &t).unwrap(), 0);
    }

    #[test]
    fn fagnano_closes() {
        let s = fixtures::doubled_equilateral();
        let p = SurfacePoint { face: 0, point: Vec2::new(0.5, 0.0) };
        let d = Vec2::from_angle(PI / 3.0);
        let t = trace(&s, Start::Point(p), d, 3.0).unwrap();
        assert!(t.closed);
        assert_eq!(t.threads.len(), 6);
        assert!((t.length - 3.0).abs() < 1e-12);
        // Each reflection point is crossed twice, once per lap of the billiard path.
        assert_eq!(self_intersection_number(&s, &t).unwrap(), 3);
        assert_eq!(self_intersection_oracle(&s, &t).unwrap(), 3);
        // The mirror copy flips sides, so every consecutive pair switches.
        let sides: Vec<_> = t.threads.iter().map(|x| x.side(&s)).collect();
        for w in sides.windows(2) {
            assert!(matches!(w, [CornerSide::Left, CornerSide::Right] | [CornerSide::Right, CornerSide::Left]));
        }
        assert_eq!(corner_switches(&s, &t), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn b2_witness_iota_one() {
        for x in [0.05, 0.3, 0.77] {
            let e = fixtures::b2_witness(x).unwrap();
            let d = &e.trajectory;
            let t = trace(&e.surface, Start::Point(SurfacePoint { face: d.face, point: d.point }), d.direction, d.budget).unwrap();
            assert!((t.length - 3f64.sqrt() * x).abs() < 1e-12);
            assert_eq!(self_intersection_number(&e.surface, &t).unwrap(), 1);
            assert_eq!(self_intersection_oracle(&e.surface, &t).unwrap(), 1);
            let end = t.end_point();
            let (f, p, _) = canonical(&e.surface, end.face, end.point, t.end_dir(), 1e-9);
            let (g, q, _) = canonical(&e.surface, d.face, d.point, d.direction, 1e-9);
            assert_eq!(f, g);
            assert!(p.dist(q) < 1e-12);
        }
    }

    #[test]
    fn cone_hit_terminates() {
        let s = fixtures::doubled_equilateral();
        let t = trace(&s, Start::Corner { face: 0, corner: 0 }, Vec2::new(1.0, 0.0), 5.0).unwrap();
        assert_eq!(t.threads.len(), 1);
        assert!(t.threads[0].along_edge());
        assert!((t.length - 1.0).abs() < 1e-12);
        assert_eq!(t.end.cone_vertex(), Some(s.vertex(0, 1)));
        let g = trace_with(
            &s,
            Start::Corner { face: 0, corner: 0 },
            Vec2::new(1.0, 0.0),
            5.0,
            TraceOptions { stop_at_cone: false, ..Default::default() },
        );
        assert!(matches!(g, Err(TraceError::VertexGrazing { .. })));
    }

    #[test]
    fn reverse_retrace() {
        let s = fixtures::doubled_polygon_surface(&fixtures::thirty_sixty_ninety());
        let p = SurfacePoint { face: 0, point: Vec2::new(0.6, 0.1) };
        let t = trace(&s, Start::Point(p), Vec2::from_angle(1.234), 4.0).unwrap();
        let end = t.end_point();
        let r = trace(&s, Start::Point(end), -t.end_dir(), t.length).unwrap();
        assert_eq!(r.threads.len(), t.threads.len());
        for (a, b) in t.threads.iter().zip(r.threads.iter().rev()) {
            assert_eq!(a.face, b.face);
            assert!(a.entry.dist(b.exit) < 1e-9 && a.exit.dist(b.entry) < 1e-9);
        }
    }

    #[test]
    fn switch_rule() {
        use CornerSide::*;
        assert!(is_switch(Both, Left) && is_switch(Right, Both) && is_switch(Left, Right));
        assert!(!is_switch(Left, Left) && !is_switch(None, Right));
    }
}
