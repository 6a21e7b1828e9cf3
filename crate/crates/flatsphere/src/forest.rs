//! Geometric forests of short saddle connections: sets of saddle connections with
//! disjoint interiors whose union, as a graph on the cone points, has no cycle.

use serde::{Deserialize, Serialize};

use crate::enumerator::{enumerate_saddle_connections, EnumError, SaddleConnection};
use crate::geom::{orient, Vec2};
use crate::surface::{Complex, FlatConeSurface};

/// Whether two saddle connections meet away from their endpoints.
pub fn interiors_cross(c: &Complex, a: &SaddleConnection, b: &SaddleConnection) -> bool {
    let (ta, tb) = (a.trajectory(c), b.trajectory(c));
    let tol = 1e3 * c.tol();
    for x in &ta.threads {
        for y in tb.threads.iter().filter(|y| y.face == x.face) {
            if let Some(p) = crossing(x.entry, x.exit, y.entry, y.exit, tol) {
                if c.points(x.face).iter().all(|v| v.dist(p) > tol) {
                    return true;
                }
            }
        }
    }
    false
}

fn crossing(a: Vec2, b: Vec2, p: Vec2, q: Vec2, tol: f64) -> Option<Vec2> {
    let (u, v) = (b - a, q - p);
    let den = u.cross(v);
    if den.abs() <= tol * u.norm() * v.norm() {
        // Parallel: distinct geodesics only share a segment if they coincide, which the
        // caller rules out; touching endpoints are handled by the vertex test.
        let overlap = orient(a, b, p).abs() <= tol * u.norm() && {
            let s0 = (p - a).dot(u) / u.norm2();
            let s1 = (q - a).dot(u) / u.norm2();
            s0.max(s1) > 1e-9 && s0.min(s1) < 1.0 - 1e-9
        };
        return overlap.then(|| a.lerp(b, 0.5));
    }
    let s = (p - a).cross(v) / den;
    let t = (p - a).cross(u) / den;
    let slack = tol / u.norm().min(v.norm()).max(tol);
    (s >= -slack && s <= 1.0 + slack && t >= -slack && t <= 1.0 + slack).then(|| a + u * s)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ForestReport {
    pub epsilon: f64,
    /// Saddle connections of normalized length below `epsilon`.
    pub connections: Vec<SaddleConnection>,
    /// Each forest as indices into `connections`, in increasing order.
    pub forests: Vec<Vec<usize>>,
    /// The listing stopped at the requested maximum.
    pub truncated: bool,
}

impl ForestReport {
    /// Forests not contained in a larger one.
    pub fn maximal(&self) -> Vec<&Vec<usize>> {
        self.forests
            .iter()
            .filter(|f| !self.forests.iter().any(|g| g.len() > f.len() && f.iter().all(|i| g.contains(i))))
            .collect()
    }
}

/// Every nonempty geometric forest whose edges have length `< epsilon` on the area-one
/// rescaling of `surface`, up to `max_forests` of them.
pub fn geometric_forests(surface: &FlatConeSurface, epsilon: f64, max_forests: usize) -> Result<ForestReport, EnumError> {
    let unit = surface.normalized();
    let mut connections = enumerate_saddle_connections(&unit, epsilon)?;
    connections.retain(|s| s.length < epsilon);
    let c = unit.complex();
    let m = connections.len();
    let mut cross = vec![vec![false; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let x = interiors_cross(c, &connections[i], &connections[j]);
            cross[i][j] = x;
            cross[j][i] = x;
        }
    }
    let labels: Vec<usize> = unit.cone_points.iter().map(|p| p.label).collect();
    let ends: Vec<(usize, usize)> = connections
        .iter()
        .map(|s| (labels.iter().position(|&l| l == s.start).unwrap(), labels.iter().position(|&l| l == s.end).unwrap()))
        .collect();
    let mut forests = Vec::new();
    let mut truncated = false;
    let mut chosen = Vec::new();
    extend(&ends, &cross, 0, &mut chosen, &mut forests, max_forests, &mut truncated);
    Ok(ForestReport { epsilon, connections, forests, truncated })
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    r
}

fn acyclic(ends: &[(usize, usize)], chosen: &[usize]) -> bool {
    let n = ends.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0);
    let mut parent: Vec<usize> = (0..n).collect();
    for &i in chosen {
        let (a, b) = (find(&mut parent, ends[i].0), find(&mut parent, ends[i].1));
        if a == b {
            return false;
        }
        parent[a] = b;
    }
    true
}

fn extend(
    ends: &[(usize, usize)],
    cross: &[Vec<bool>],
    from: usize,
    chosen: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
    max: usize,
    truncated: &mut bool,
) {
    for j in from..ends.len() {
        if *truncated {
            return;
        }
        if chosen.iter().any(|&i| cross[i][j]) {
            continue;
        }
        chosen.push(j);
        if acyclic(ends, chosen) {
            if out.len() == max {
                *truncated = true;
            } else {
                out.push(chosen.clone());
                extend(ends, cross, j + 1, chosen, out, max, truncated);
            }
        }
        chosen.pop();
    }
}
