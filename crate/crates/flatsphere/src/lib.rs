//! Flat cone spheres: geodesic tracing, saddle connection enumeration, Delaunay
//! triangulations, convex-hull surgery and counting bounds, plus polygonal billiards.

pub mod billiards;
pub mod bounds;
pub mod delaunay;
pub mod enumerator;
pub mod fixtures;
pub mod forest;
pub mod geom;
pub mod infinite;
pub mod io;
mod mesh;
pub mod surface;
pub mod surgery;
pub mod tracer;
