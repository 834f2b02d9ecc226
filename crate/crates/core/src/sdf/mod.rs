//! Truncated signed-distance labels from unstructured point clouds.

mod field;
mod sampling;
mod store;

pub use field::SignedField;
pub use sampling::{generate_samples, label_cloud, LabelConfig, SdfSample, SdfSampleSet, GUARD_HALF_WIDTH};
pub use store::{read_sample_set, samples_path, write_sample_set, SampleSidecar};
