//! Directed surface distance between a reference point set and a mesh, and
//! normalized RMSE between latent tables.

mod distance;
mod histogram;
mod nrmse;

pub use distance::{
    closest_point_on_triangle, distance_report, point_set_distance, point_to_surface_distances, reference_points,
    surface_distance, write_distance_csv, DistanceReport, ReferenceSet, SurfaceMode,
};
pub use histogram::{median, Histogram};
pub use nrmse::{nrmse_per_dim, NrmseReport, NrmseScale};
