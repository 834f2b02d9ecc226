use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the blade SDF pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate extent: point cloud has zero size in every axis")]
    DegenerateExtent,

    #[error("degenerate hull: {0}")]
    DegenerateHull(String),

    #[error("empty point set: {0}")]
    Empty(&'static str),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("tol_surf too small: no cloud point lies within {0} of the hull boundary")]
    EmptySurfaceSubset(f64),

    #[error("band sampling stalled after {attempts} attempts ({accepted} of {wanted} accepted)")]
    BandSamplingStalled {
        attempts: usize,
        accepted: usize,
        wanted: usize,
    },

    #[error("non-finite loss {loss} at epoch {epoch}, step {step}")]
    NonFiniteLoss { loss: f64, epoch: usize, step: usize },

    #[error("no predicted surface: mesh has no triangles")]
    NoPredictedSurface,

    #[error("conditioning left manifold: decoded field has no zero crossing")]
    ConditioningLeftManifold,

    #[error("config validation failed: {0}")]
    Config(String),

    #[error("stage `{stage}` failed (artifacts under {}): {source}", artifacts.display())]
    Stage {
        stage: String,
        artifacts: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
