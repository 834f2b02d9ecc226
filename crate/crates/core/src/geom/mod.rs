//! Geometry primitives shared by every stage of the pipeline.

mod aabb;
mod cloud;
mod hull;
pub mod io;
mod kdtree;
mod vec3;

pub use aabb::Aabb;
pub use cloud::{fibonacci_sphere, PointCloud, UnitCubeTransform};
pub use hull::ConvexHull;
pub use kdtree::{KdTree, Neighbor};
pub use vec3::Vec3;
