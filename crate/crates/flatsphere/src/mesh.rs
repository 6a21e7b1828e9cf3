//! Mutable triangle soup for local retriangulation: flips and removal of flat vertices.

use crate::geom::{orient, Iso, Vec2};
use crate::surface::{Complex, EuclideanTriangle, HalfEdge, SurfaceError};

#[derive(Clone, Debug)]
pub(crate) struct Soup {
    pub tris: Vec<EuclideanTriangle>,
    pub adj: Vec<[Option<HalfEdge>; 3]>,
    pub alive: Vec<bool>,
}

impl Soup {
    pub fn new(tris: Vec<EuclideanTriangle>, adj: Vec<[Option<HalfEdge>; 3]>) -> Soup {
        let alive = vec![true; tris.len()];
        Soup { tris, adj, alive }
    }

    pub fn from_complex(c: &Complex) -> Soup {
        let adj = (0..c.num_faces()).map(|f| [c.neighbor(f, 0), c.neighbor(f, 1), c.neighbor(f, 2)]).collect();
        Soup::new(c.triangles().to_vec(), adj)
    }

    /// Chart of `f` to chart of the face across `e`.
    fn glue(&self, f: usize, e: usize) -> Iso {
        let h = self.adj[f][e].unwrap();
        let p = &self.tris[f].vertices;
        let q = &self.tris[h.face].vertices;
        Iso::segment_map(p[e], p[(e + 1) % 3], q[(h.edge + 1) % 3], q[h.edge])
    }

    fn corners_of(&self, label: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (f, t) in self.tris.iter().enumerate() {
            if !self.alive[f] {
                continue;
            }
            for i in 0..3 {
                if t.labels[i] == label {
                    out.push((f, i));
                }
            }
        }
        out
    }

    /// Remove a vertex of angle `2π` (interior) or `π` (boundary): develop its star,
    /// which is a planar polygon, and triangulate the polygon without it.
    pub fn remove_flat_vertex(&mut self, label: usize) -> Result<(), SurfaceError> {
        let fail = |why: &str| SurfaceError::InvalidGluing(format!("cannot remove flat vertex {label}: {why}"));
        let corners = self.corners_of(label);
        if corners.is_empty() {
            return Err(fail("no such vertex"));
        }
        let faces: std::collections::HashSet<usize> = corners.iter().map(|c| c.0).collect();
        if faces.len() != corners.len() {
            return Err(fail("a face meets it twice"));
        }
        // Walk counterclockwise; a boundary star starts where the first ray is free.
        let start = corners.iter().copied().find(|&(f, i)| self.adj[f][i].is_none());
        let (mut f, mut i) = start.unwrap_or(corners[0]);
        let mut iso = Iso::IDENTITY;
        let mut ring: Vec<(usize, usize, Iso)> = Vec::new();
        loop {
            ring.push((f, i, iso));
            let e = (i + 2) % 3;
            let Some(h) = self.adj[f][e] else { break };
            let back = self.glue(f, e).inverse();
            iso = iso.compose(&back);
            f = h.face;
            i = h.edge;
            if start.is_none() && (f, i) == (ring[0].0, ring[0].1) {
                break;
            }
            if ring.len() > corners.len() {
                return Err(fail("star does not close"));
            }
        }
        if ring.len() != corners.len() {
            return Err(fail("star is not a single fan"));
        }
        let boundary = start.is_some();
        // Link vertices, with the outer half-edge and its gluing behind each polygon side.
        let mut pts: Vec<Vec2> = Vec::new();
        let mut labels: Vec<usize> = Vec::new();
        let mut sides: Vec<(HalfEdge, Option<HalfEdge>)> = Vec::new();
        for &(f, i, iso) in &ring {
            let t = &self.tris[f];
            pts.push(iso.apply(t.vertices[(i + 1) % 3]));
            labels.push(t.labels[(i + 1) % 3]);
            let o = HalfEdge::new(f, (i + 1) % 3);
            sides.push((o, self.adj[f][o.edge]));
        }
        if boundary {
            let &(f, i, iso) = ring.last().unwrap();
            pts.push(iso.apply(self.tris[f].vertices[(i + 2) % 3]));
            labels.push(self.tris[f].labels[(i + 2) % 3]);
        } else {
            let &(f, i, iso) = ring.last().unwrap();
            if iso.apply(self.tris[f].vertices[(i + 2) % 3]).dist(pts[0]) > 1e-7 * (1.0 + pts[0].norm()) {
                return Err(fail("star does not develop flat"));
            }
        }
        if labels.contains(&label) {
            return Err(fail("its link passes through itself"));
        }
        let tri = ear_clip(&pts, &labels).ok_or_else(|| fail("link polygon has no ear"))?;
        let n = pts.len();
        let slots: Vec<usize> = ring.iter().map(|r| r.0).collect();
        let mut side_of: std::collections::HashMap<(usize, usize), Option<HalfEdge>> = std::collections::HashMap::new();
        let mut remap: std::collections::HashMap<HalfEdge, HalfEdge> = std::collections::HashMap::new();
        let mut new_sides: Vec<(usize, usize, HalfEdge)> = Vec::new();
        for (t, ids) in tri.iter().enumerate() {
            let f = slots[t];
            for k in 0..3 {
                let (a, b) = (ids[k], ids[(k + 1) % 3]);
                let h = HalfEdge::new(f, k);
                if b == (a + 1) % n && !(boundary && a == n - 1) {
                    remap.insert(sides[a].0, h);
                    side_of.insert((a, b), sides[a].1);
                }
                new_sides.push((a, b, h));
            }
        }
        for &f in &slots[tri.len()..] {
            self.alive[f] = false;
            self.adj[f] = [None; 3];
        }
        for (t, ids) in tri.iter().enumerate() {
            let f = slots[t];
            self.tris[f] = EuclideanTriangle::new(self.tris[f].face_id, ids.map(|x| pts[x]), ids.map(|x| labels[x]));
            self.adj[f] = [None; 3];
        }
        let by_pair: std::collections::HashMap<(usize, usize), HalfEdge> = new_sides.iter().map(|&(a, b, h)| ((a, b), h)).collect();
        for &(a, b, h) in &new_sides {
            if let Some(outer) = side_of.get(&(a, b)) {
                let target = outer.map(|o| remap.get(&o).copied().unwrap_or(o));
                self.adj[h.face][h.edge] = target;
                if let Some(o) = target {
                    self.adj[o.face][o.edge] = Some(h);
                }
            } else if let Some(&g) = by_pair.get(&(b, a)) {
                self.adj[h.face][h.edge] = Some(g);
            }
            // Otherwise the new boundary side of a boundary star.
        }
        Ok(())
    }

    /// Remove every listed flat vertex, retrying those whose star is not yet a simple fan.
    /// When none can be removed, flip an edge at one of them to lower its degree.
    pub fn remove_flat_vertices(&mut self, labels: &[usize]) -> Result<(), SurfaceError> {
        let mut todo: Vec<usize> = labels.to_vec();
        let mut flips = 0;
        while !todo.is_empty() {
            let mut left = Vec::new();
            let mut last = None;
            for &l in &todo {
                if let Err(e) = self.remove_flat_vertex(l) {
                    left.push(l);
                    last = Some(e);
                }
            }
            if left.len() == todo.len() {
                if flips > 64 * self.tris.len() || !left.iter().any(|&l| self.flip_at(l)) {
                    return Err(last.unwrap());
                }
                flips += 1;
            }
            todo = left;
        }
        Ok(())
    }

    /// Flip some edge at `label` whose quadrilateral is strictly convex.
    fn flip_at(&mut self, label: usize) -> bool {
        for (f, i) in self.corners_of(label) {
            let Some(h) = self.adj[f][i] else { continue };
            if h.face == f {
                continue;
            }
            let p = self.tris[f].vertices;
            let q = &self.tris[h.face];
            let y = self.glue(f, i).inverse().apply(q.vertices[(h.edge + 2) % 3]);
            let (v, w, x) = (p[i], p[(i + 1) % 3], p[(i + 2) % 3]);
            let scale = (w - v).norm2() + (x - v).norm2() + (y - v).norm2();
            let quad = [v, y, w, x];
            if (0..4).all(|k| orient(quad[k], quad[(k + 1) % 4], quad[(k + 2) % 4]) > 1e-9 * scale) {
                self.flip(f, i);
                return true;
            }
        }
        false
    }

    /// Replace the diagonal `v w` of faces `f = (v, w, x)` and its neighbour `(w, v, y)`
    /// by `x y`. Both new faces use the chart of `f`.
    fn flip(&mut self, f: usize, i: usize) {
        let h = self.adj[f][i].unwrap();
        let g = h.face;
        let y = self.glue(f, i).inverse().apply(self.tris[g].vertices[(h.edge + 2) % 3]);
        let ly = self.tris[g].labels[(h.edge + 2) % 3];
        let t = &self.tris[f];
        let (v, w, x) = (t.vertices[i], t.vertices[(i + 1) % 3], t.vertices[(i + 2) % 3]);
        let (lv, lw, lx) = (t.labels[i], t.labels[(i + 1) % 3], t.labels[(i + 2) % 3]);
        // Outer sides: old half-edge and the new one that replaces it.
        let outer = [
            (HalfEdge::new(f, (i + 2) % 3), HalfEdge::new(f, 0)),
            (HalfEdge::new(g, (h.edge + 1) % 3), HalfEdge::new(f, 1)),
            (HalfEdge::new(g, (h.edge + 2) % 3), HalfEdge::new(g, 0)),
            (HalfEdge::new(f, (i + 1) % 3), HalfEdge::new(g, 1)),
        ];
        let targets: Vec<Option<HalfEdge>> = outer.iter().map(|(o, _)| self.adj[o.face][o.edge]).collect();
        let remap = |e: HalfEdge| outer.iter().find(|(o, _)| *o == e).map_or(e, |(_, n)| *n);
        self.tris[f] = EuclideanTriangle::new(self.tris[f].face_id, [x, v, y], [lx, lv, ly]);
        self.tris[g] = EuclideanTriangle::new(self.tris[g].face_id, [y, w, x], [ly, lw, lx]);
        self.adj[f] = [None, None, Some(HalfEdge::new(g, 2))];
        self.adj[g] = [None, None, Some(HalfEdge::new(f, 2))];
        for ((_, n), t) in outer.iter().zip(targets) {
            let t = t.map(remap);
            self.adj[n.face][n.edge] = t;
            if let Some(t) = t {
                self.adj[t.face][t.edge] = Some(*n);
            }
        }
    }

    /// Drop dead faces and renumber.
    pub fn compact(self) -> (Vec<EuclideanTriangle>, Vec<[Option<HalfEdge>; 3]>) {
        let mut index = vec![usize::MAX; self.tris.len()];
        let mut k = 0;
        for (f, &a) in self.alive.iter().enumerate() {
            if a {
                index[f] = k;
                k += 1;
            }
        }
        let mut tris = Vec::with_capacity(k);
        let mut adj = Vec::with_capacity(k);
        for f in 0..self.tris.len() {
            if !self.alive[f] {
                continue;
            }
            let mut t = self.tris[f].clone();
            t.face_id = index[f];
            tris.push(t);
            adj.push(self.adj[f].map(|h| h.map(|h| HalfEdge::new(index[h.face], h.edge))));
        }
        (tris, adj)
    }
}

/// Ear clipping of a counterclockwise polygon. Diagonals joining two vertices with the
/// same label are used only when nothing else works.
fn ear_clip(v: &[Vec2], labels: &[usize]) -> Option<Vec<[usize; 3]>> {
    let area: f64 = 0.5 * (0..v.len()).map(|i| v[i].cross(v[(i + 1) % v.len()])).sum::<f64>();
    if area <= 0.0 {
        return None;
    }
    let eps = 1e-12 * area;
    let mut idx: Vec<usize> = (0..v.len()).collect();
    let mut out = Vec::with_capacity(v.len().saturating_sub(2));
    while idx.len() > 3 {
        let m = idx.len();
        let mut best: Option<(usize, bool, f64)> = None;
        for k in 0..m {
            let (a, b, c) = (idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]);
            if orient(v[a], v[b], v[c]) <= eps {
                continue;
            }
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
            let clean = labels[a] != labels[c];
            let p = [v[a], v[b], v[c]];
            let q = (0..3).map(|i| crate::geom::corner_angle(&p, i)).fold(f64::INFINITY, f64::min);
            if best.map_or(true, |(_, bc, bq)| (clean, q) > (bc, bq)) {
                best = Some((k, clean, q));
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn compact_round_trip() {
        let s = fixtures::doubled_equilateral();
        let soup = Soup::from_complex(s.complex());
        let (t, a) = soup.compact();
        let c = Complex::from_adjacency(t, a, 1e-9).unwrap();
        assert!((c.area() - s.area()).abs() < 1e-12);
        assert_eq!(c.num_vertices(), 3);
    }

    #[test]
    fn flips_keep_the_surface() {
        let p = crate::billiards::Polygon::new(vec![Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(1.5, 1.0), Vec2::new(0.2, 1.2)]).unwrap();
        let s = fixtures::doubled_polygon_surface(&p);
        let mut soup = Soup::from_complex(s.complex());
        let before = s.complex().num_faces();
        let mut flipped = 0;
        for l in 0..4 {
            flipped += usize::from(soup.flip_at(l));
        }
        assert!(flipped > 0);
        let (t, a) = soup.compact();
        assert_eq!(t.len(), before);
        let c = Complex::from_adjacency(t, a, 1e-9).unwrap();
        assert!((c.area() - s.area()).abs() < 1e-12);
        let mut k: Vec<f64> = c.cone_points.iter().map(|p| p.curvature).collect();
        let mut k0 = s.curvatures();
        k.sort_by(|a, b| a.partial_cmp(b).unwrap());
        k0.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(k.iter().zip(&k0).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}
