use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blade::DatasetSpec;
use crate::cond::CondConfig;
use crate::metrics::{ReferenceSet, SurfaceMode};
use crate::neural::{DecoderConfig, InferConfig, TrainConfig};
use crate::sdf::LabelConfig;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub n_surface: usize,
    pub n_interior: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { n_train: 222, n_test: 300, n_surface: 20_000, n_interior: 5_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub resolution: usize,
    pub half_width: f64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { resolution: 128, half_width: 1.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub reference: ReferenceSet,
    pub surface: SurfaceMode,
    pub bins: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { reference: ReferenceSet::default(), surface: SurfaceMode::default(), bins: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatentConfig {
    /// Components kept by PCA; every available one when absent.
    pub pca_components: Option<usize>,
    pub traverse_axis: usize,
    /// Traversal coordinates in units of the axis standard deviation.
    pub traverse_coords: Vec<f64>,
    pub n_samples: usize,
    pub temperature: f64,
    pub interp_steps: usize,
    /// Design ids to interpolate between; the first two training designs when absent.
    pub interp_pair: Option<(String, String)>,
}

impl Default for LatentConfig {
    fn default() -> Self {
        Self {
            pca_components: None,
            traverse_axis: 0,
            traverse_coords: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            n_samples: 10,
            temperature: 1.0,
            interp_steps: 5,
            interp_pair: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct CondStageConfig {
    /// CSV of measured strains; the surrogate model is used when absent.
    pub strains: Option<PathBuf>,
    pub model: CondConfig,
    /// Strain triplets to generate for. When empty, every training design's
    /// own triplet is used and compared against its optimized-code mesh.
    pub targets: Vec<[f64; 3]>,
}

/// Every tunable of a full pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    /// Runs every stage on a single worker thread.
    pub deterministic: bool,
    pub dataset: DatasetConfig,
    pub label: LabelConfig,
    pub decoder: DecoderConfig,
    pub train: TrainConfig,
    pub infer: InferConfig,
    pub mesh: MeshConfig,
    pub eval: EvalConfig,
    pub latent: LatentConfig,
    pub cond: Option<CondStageConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            deterministic: false,
            dataset: DatasetConfig::default(),
            label: LabelConfig::default(),
            decoder: DecoderConfig::default(),
            train: TrainConfig::default(),
            infer: InferConfig::default(),
            mesh: MeshConfig::default(),
            eval: EvalConfig::default(),
            latent: LatentConfig::default(),
            cond: None,
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

fn config_err(section: &str) -> impl FnOnce(Error) -> Error + '_ {
    move |e| match e {
        Error::Invalid(m) | Error::Config(m) => Error::Config(format!("{section}: {m}")),
        other => Error::Config(format!("{section}: {other}")),
    }
}

impl RunConfig {
    /// Parses JSON and validates it. Unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        check(self.schema_version == SCHEMA_VERSION, || {
            format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version)
        })?;
        let d = &self.dataset;
        check(d.n_train >= 2, || "dataset.n_train must be at least 2".into())?;
        check(d.n_surface > 0 && d.n_interior > 0, || "dataset point counts must be positive".into())?;

        self.label.validate().map_err(config_err("label"))?;
        self.train.validate().map_err(config_err("train"))?;
        self.infer.validate().map_err(config_err("infer"))?;
        let delta = self.label.delta;
        check(self.train.delta == delta && self.infer.delta == delta, || {
            format!(
                "delta must agree across label ({delta}), train ({}) and infer ({})",
                self.train.delta, self.infer.delta
            )
        })?;

        let dec = &self.decoder;
        check(dec.latent_dim > 0 && dec.hidden_layers > 0 && dec.width > 0, || {
            "decoder sizes must be positive".into()
        })?;
        check((0.0..1.0).contains(&dec.dropout), || format!("decoder.dropout {} outside [0, 1)", dec.dropout))?;

        check(self.mesh.resolution >= 2, || "mesh.resolution must be at least 2".into())?;
        check(self.mesh.half_width > 0.0 && self.mesh.half_width.is_finite(), || {
            "mesh.half_width must be positive".into()
        })?;
        check(self.eval.bins > 0, || "eval.bins must be positive".into())?;
        match self.eval.surface {
            SurfaceMode::Sampled { n, .. } => check(n > 0, || "eval.surface.n must be positive".into())?,
            SurfaceMode::Exact => {}
        }
        if let ReferenceSet::HullSurface { tol } = self.eval.reference {
            check(tol >= 0.0, || "eval.reference.tol must be non-negative".into())?;
        }

        let lat = &self.latent;
        check(lat.temperature > 0.0 && lat.temperature.is_finite(), || "latent.temperature must be positive".into())?;
        check(lat.interp_steps >= 2, || "latent.interp_steps must be at least 2".into())?;
        check(lat.traverse_coords.iter().all(|c| c.is_finite()), || "latent.traverse_coords must be finite".into())?;
        if let Some(k) = lat.pca_components {
            check(k > 0, || "latent.pca_components must be positive".into())?;
        }

        if let Some(c) = &self.cond {
            check(c.model.epochs > 0 && c.model.hidden > 0 && c.model.lr0 > 0.0, || {
                "cond.model epochs, hidden and lr0 must be positive".into()
            })?;
            check(c.targets.iter().flatten().all(|v| v.is_finite()), || "cond.targets must be finite".into())?;
        }
        Ok(())
    }

    /// Hex SHA-256 prefix of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))[..16].to_string()
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            n_train: self.dataset.n_train,
            n_test: self.dataset.n_test,
            n_surface: self.dataset.n_surface,
            n_interior: self.dataset.n_interior,
            seed: self.seed,
        }
    }
}
