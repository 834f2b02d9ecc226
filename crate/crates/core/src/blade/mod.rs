//! Parametric blade family: parameters, cross-sections, loft and dataset.

mod dataset;
mod params;
mod profile;
mod solid;

pub use dataset::{plan_dataset, synthesize_dataset, write_dataset, DatasetManifest, DatasetSpec, DesignRecord, Split};
pub use params::*;
pub use profile::{Profile, PROFILE_VERTICES};
pub use solid::{synthesize_cloud, BladeSolid};
