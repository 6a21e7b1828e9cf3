//! JSON files for surfaces, polygons and infinite spheres.
//!
//! Coordinates may be written as numbers or as decimal strings; strings parse to the
//! nearest double, so fixtures stay bit-stable. Output writes coordinates as the shortest
//! decimal string that reads back to the same double.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::billiards::{BilliardError, Polygon};
use crate::geom::Vec2;
use crate::infinite::{BoundaryCorner, InfiniteFlatSphere};
use crate::surface::{Complex, EuclideanTriangle, FlatConeSurface, HalfEdge, SurfaceError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coord {
    Num(f64),
    Str(String),
}

impl Coord {
    pub fn value(&self) -> Result<f64, SurfaceError> {
        match self {
            Coord::Num(x) => Ok(*x),
            Coord::Str(s) => s.trim().parse().map_err(|_| SurfaceError::Parse(format!("not a decimal number: {s:?}"))),
        }
    }

    pub fn exact(x: f64) -> Coord {
        Coord::Str(format!("{x}"))
    }
}

fn point(c: &[Coord; 2]) -> Result<Vec2, SurfaceError> {
    Ok(Vec2::new(c[0].value()?, c[1].value()?))
}

fn coords(p: Vec2) -> [Coord; 2] {
    [Coord::exact(p.x), Coord::exact(p.y)]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TriangleRecord {
    pub id: usize,
    pub vertices: [[Coord; 2]; 3],
    pub labels: [usize; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GluingRecord {
    pub a: [usize; 2],
    pub b: [usize; 2],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurfaceFile {
    pub triangles: Vec<TriangleRecord>,
    pub gluings: Vec<GluingRecord>,
}

impl SurfaceFile {
    pub fn from_complex(c: &Complex) -> SurfaceFile {
        let triangles = c
            .triangles()
            .iter()
            .enumerate()
            .map(|(f, t)| TriangleRecord {
                id: f,
                vertices: [coords(t.vertices[0]), coords(t.vertices[1]), coords(t.vertices[2])],
                labels: t.labels,
            })
            .collect();
        let gluings = c
            .gluings()
            .iter()
            .map(|g| GluingRecord { a: [g.side_a.face, g.side_a.edge], b: [g.side_b.face, g.side_b.edge] })
            .collect();
        SurfaceFile { triangles, gluings }
    }

    fn parts(&self) -> Result<(Vec<EuclideanTriangle>, Vec<(HalfEdge, HalfEdge)>), SurfaceError> {
        let mut tris = Vec::with_capacity(self.triangles.len());
        for t in &self.triangles {
            let v = [point(&t.vertices[0])?, point(&t.vertices[1])?, point(&t.vertices[2])?];
            tris.push(EuclideanTriangle::new(t.id, v, t.labels));
        }
        for g in &self.gluings {
            if g.a[1] > 2 || g.b[1] > 2 {
                return Err(SurfaceError::Parse(format!("edge index out of range in gluing {:?} ~ {:?}", g.a, g.b)));
            }
        }
        let gl = self.gluings.iter().map(|g| (HalfEdge::new(g.a[0], g.a[1]), HalfEdge::new(g.b[0], g.b[1]))).collect();
        Ok((tris, gl))
    }

    /// A complex, possibly with boundary. Gluings refer to triangle ids.
    pub fn to_complex(&self, tol: f64) -> Result<Complex, SurfaceError> {
        let (tris, gl) = self.parts()?;
        let index: HashMap<usize, usize> = tris.iter().enumerate().map(|(i, t)| (t.face_id, i)).collect();
        if index.len() != tris.len() {
            return Err(SurfaceError::InvalidGluing("duplicate face id".into()));
        }
        let pos = |h: HalfEdge| {
            index
                .get(&h.face)
                .map(|&f| HalfEdge::new(f, h.edge))
                .ok_or_else(|| SurfaceError::InvalidGluing(format!("unknown face {}", h.face)))
        };
        let mut mapped = Vec::with_capacity(gl.len());
        for (a, b) in gl {
            mapped.push((pos(a)?, pos(b)?));
        }
        Complex::new(tris, &mapped, tol)
    }

    pub fn to_surface(&self, tol: f64) -> Result<FlatConeSurface, SurfaceError> {
        FlatConeSurface::from_complex(self.to_complex(tol)?)
    }
}

pub fn parse_surface(json: &str, tol: f64) -> Result<FlatConeSurface, SurfaceError> {
    let f: SurfaceFile = serde_json::from_str(json).map_err(|e| SurfaceError::Parse(e.to_string()))?;
    f.to_surface(tol)
}

pub fn read_surface(path: &Path, tol: f64) -> Result<FlatConeSurface, SurfaceError> {
    let s = std::fs::read_to_string(path).map_err(|e| SurfaceError::Parse(format!("{}: {e}", path.display())))?;
    parse_surface(&s, tol)
}

pub fn surface_json(c: &Complex) -> String {
    serde_json::to_string_pretty(&SurfaceFile::from_complex(c)).expect("surface records serialize")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolygonFile {
    pub vertices: Vec<[Coord; 2]>,
}

pub fn parse_polygon(json: &str) -> Result<Polygon, BilliardError> {
    let f: PolygonFile = serde_json::from_str(json).map_err(|e| BilliardError::Surface(SurfaceError::Parse(e.to_string())))?;
    let v = f.vertices.iter().map(point).collect::<Result<Vec<_>, _>>()?;
    Polygon::new(v)
}

pub fn polygon_json(p: &Polygon) -> String {
    let f = PolygonFile { vertices: p.vertices.iter().map(|&v| coords(v)).collect() };
    serde_json::to_string_pretty(&f).expect("polygon records serialize")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExteriorRecord {
    pub label: usize,
    pub angle: Coord,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CornerRecord {
    pub label: usize,
    pub exterior: Coord,
    pub next_length: Coord,
}

/// Either a finite domain with the exterior angle at each boundary vertex, or, for a
/// zero-area domain, the boundary loop itself.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InfiniteFile {
    Domain {
        triangles: Vec<TriangleRecord>,
        gluings: Vec<GluingRecord>,
        exterior: Vec<ExteriorRecord>,
    },
    Tree {
        boundary: Vec<CornerRecord>,
    },
}

impl InfiniteFile {
    pub fn from_sphere(s: &InfiniteFlatSphere) -> InfiniteFile {
        match &s.domain {
            Some(d) => {
                let f = SurfaceFile::from_complex(d);
                let exterior = s.boundary.iter().map(|b| ExteriorRecord { label: b.label, angle: Coord::exact(b.exterior) }).collect();
                InfiniteFile::Domain { triangles: f.triangles, gluings: f.gluings, exterior }
            }
            None => InfiniteFile::Tree {
                boundary: s
                    .boundary
                    .iter()
                    .map(|b| CornerRecord { label: b.label, exterior: Coord::exact(b.exterior), next_length: Coord::exact(b.next_length) })
                    .collect(),
            },
        }
    }

    pub fn to_sphere(&self, tol: f64) -> Result<InfiniteFlatSphere, SurfaceError> {
        match self {
            InfiniteFile::Domain { triangles, gluings, exterior } => {
                let d = SurfaceFile { triangles: triangles.clone(), gluings: gluings.clone() }.to_complex(tol)?;
                let mut ext = HashMap::new();
                for e in exterior {
                    ext.insert(e.label, e.angle.value()?);
                }
                InfiniteFlatSphere::from_domain(d, &ext).map_err(SurfaceError::Parse)
            }
            InfiniteFile::Tree { boundary } => {
                let mut out = Vec::with_capacity(boundary.len());
                for b in boundary {
                    out.push(BoundaryCorner { label: b.label, exterior: b.exterior.value()?, next_length: b.next_length.value()? });
                }
                Ok(InfiniteFlatSphere { domain: None, boundary: out })
            }
        }
    }
}

pub fn parse_infinite(json: &str, tol: f64) -> Result<InfiniteFlatSphere, SurfaceError> {
    let f: InfiniteFile = serde_json::from_str(json).map_err(|e| SurfaceError::Parse(e.to_string()))?;
    f.to_sphere(tol)
}

pub fn infinite_json(s: &InfiniteFlatSphere) -> String {
    serde_json::to_string_pretty(&InfiniteFile::from_sphere(s)).expect("infinite sphere records serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::doubled_equilateral;
    use crate::surface::DEFAULT_TOL;

    #[test]
    fn surface_round_trip_is_exact() {
        let s = doubled_equilateral();
        let json = surface_json(&s);
        let back = parse_surface(&json, DEFAULT_TOL).unwrap();
        assert_eq!(back.triangles(), s.triangles());
        assert_eq!(back.curvatures(), s.curvatures());
    }

    #[test]
    fn decimal_strings_accepted() {
        let json = r#"{"triangles":[
            {"id":7,"vertices":[["0","0"],["1.0","0"],[0.5,"0.8660254037844386"]],"labels":[0,1,2]},
            {"id":9,"vertices":[["0","0"],[0.5,"-0.8660254037844386"],["1","0"]],"labels":[0,2,1]}],
            "gluings":[{"a":[7,0],"b":[9,2]},{"a":[7,1],"b":[9,1]},{"a":[7,2],"b":[9,0]}]}"#;
        let s = parse_surface(json, DEFAULT_TOL).unwrap();
        assert_eq!(s.n(), 3);
        assert!((s.area() - 3f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn malformed_number_rejected() {
        let json = r#"{"triangles":[{"id":0,"vertices":[["x","0"],[1,0],[0,1]],"labels":[0,1,2]}],"gluings":[]}"#;
        assert!(matches!(parse_surface(json, DEFAULT_TOL), Err(SurfaceError::Parse(_))));
    }

    #[test]
    fn polygon_round_trip() {
        let p = crate::fixtures::unit_equilateral();
        assert_eq!(parse_polygon(&polygon_json(&p)).unwrap(), p);
    }
}
