//! Tetrahedra, conforming triangulations, boundary subdivision and robust
//! line/triangle incidence.

mod facegrid;
mod intersect;
mod mesh;
mod tetra;

pub use facegrid::{FaceCell, FaceGrid};
pub use intersect::{line_triangle_intersection, Incidence};
pub use mesh::{parse_tet_list, Aabb, FaceAdjacency, MeshSpec, Plane, Region, Triangulation};
pub use tetra::{Tetra, Triangle};

use thiserror::Error;

pub type Vec3 = nalgebra::Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate tetrahedron: volume {volume:e} below tolerance {tolerance:e}")]
    DegenerateTetra { volume: f64, tolerance: f64 },
    #[error("subdivision level k = {0} is below the minimum of 2 for shrink-and-project")]
    LevelTooSmall(usize),
    #[error("subdivision level must be positive")]
    ZeroLevel,
    #[error("non-conforming mesh: {0}")]
    NonConforming(String),
    #[error("mesh vertex index {index} out of range ({count} vertices)")]
    BadIndex { index: usize, count: usize },
    #[error("mesh input line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown mesh generator `{0}`")]
    UnknownGenerator(String),
    #[error("empty mesh")]
    Empty,
}

/// Lexicographic order on points, used for every canonical orientation.
pub fn lex_cmp(a: &Vec3, b: &Vec3) -> std::cmp::Ordering {
    a.x.total_cmp(&b.x)
        .then(a.y.total_cmp(&b.y))
        .then(a.z.total_cmp(&b.z))
}
