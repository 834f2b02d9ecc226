//! Isosurface extraction on uniform grids and triangle-mesh utilities.

mod cleanup;
mod decode;
mod grid;
mod marching;
mod tables;
mod trimesh;

pub use cleanup::collapse_slivers;
pub use decode::{decode_mesh, sample_grid};
pub use grid::ScalarGrid;
pub use marching::{marching_cubes, marching_cubes_with, DEFAULT_MAX_ASPECT};
pub use trimesh::{check_watertight, TriangleMesh, WatertightReport};
