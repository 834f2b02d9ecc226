//! End-to-end orchestration: run configs, experiment layout and the staged
//! runner.

pub mod config;
pub mod layout;
pub mod run;
pub mod stages;

pub use config::{CondStageConfig, DatasetConfig, EvalConfig, LatentConfig, MeshConfig, RunConfig, SCHEMA_VERSION};
pub use layout::{provenance_path, stamp_tree, write_provenance, ExpLayout, Provenance};
pub use run::{run_pipeline, RunOptions, RunSeeds, RunSummary, Stage, StageMarker};
