use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{synthesize_cloud, BladeParams};
use crate::geom::io::write_ply;
use crate::geom::PointCloud;
use crate::{seeds, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRecord {
    pub design_id: String,
    pub split: Split,
    #[serde(flatten)]
    pub params: BladeParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub base_seed: u64,
    pub n_surface: usize,
    pub n_interior: usize,
    pub designs: Vec<DesignRecord>,
}

impl DatasetManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(|e| Error::parse(&path, e.to_string()))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &DesignRecord> {
        self.designs.iter().filter(move |d| d.split == split)
    }

    pub fn cloud_path(dir: &Path, design_id: &str) -> PathBuf {
        dir.join(format!("design_{design_id}.ply"))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DatasetSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub n_surface: usize,
    pub n_interior: usize,
    pub seed: u64,
}

/// Parameter records for every design; training designs come first.
pub fn plan_dataset(spec: &DatasetSpec) -> Vec<DesignRecord> {
    (0..spec.n_train + spec.n_test)
        .map(|i| DesignRecord {
            design_id: format!("{i:04}"),
            split: if i < spec.n_train { Split::Train } else { Split::Test },
            params: BladeParams::sample(seeds::derive(spec.seed, "design", i as u64)),
        })
        .collect()
}

/// Synthesizes all clouds in memory, in manifest order.
pub fn synthesize_dataset(spec: &DatasetSpec) -> Result<(DatasetManifest, Vec<PointCloud>)> {
    let designs = plan_dataset(spec);
    let clouds = designs
        .par_iter()
        .map(|d| synthesize_cloud(&d.design_id, &d.params, spec.n_surface, spec.n_interior))
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        base_seed: spec.seed,
        n_surface: spec.n_surface,
        n_interior: spec.n_interior,
        designs,
    };
    Ok((manifest, clouds))
}

/// Writes `design_<id>.ply` for each design plus `manifest.json` into `out`.
pub fn write_dataset(spec: &DatasetSpec, out: &Path) -> Result<DatasetManifest> {
    if spec.n_train + spec.n_test == 0 {
        return Err(Error::Invalid("dataset needs at least one design".into()));
    }
    fs::create_dir_all(out)?;
    let designs = plan_dataset(spec);
    designs.par_iter().try_for_each(|d| -> Result<()> {
        let cloud = synthesize_cloud(&d.design_id, &d.params, spec.n_surface, spec.n_interior)?;
        write_ply(&DatasetManifest::cloud_path(out, &d.design_id), &cloud)
    })?;
    let manifest = DatasetManifest {
        base_seed: spec.seed,
        n_surface: spec.n_surface,
        n_interior: spec.n_interior,
        designs,
    };
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}
