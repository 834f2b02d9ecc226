//! On-disk sample sets: packed little-endian `f32` quadruples `(x, y, z, s)`
//! next to a JSON sidecar carrying the labelling settings.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{SdfSample, SdfSampleSet};
use crate::geom::Vec3;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSidecar {
    pub design_id: String,
    pub n: usize,
    pub delta: f64,
    pub band_fraction: f64,
    pub seed: u64,
    pub tol_sign: f64,
    pub tol_surf: f64,
}

pub fn samples_path(dir: &Path, design_id: &str) -> PathBuf {
    dir.join(format!("design_{design_id}.sdf"))
}

fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("sdf.json")
}

pub fn write_sample_set(dir: &Path, set: &SdfSampleSet) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = samples_path(dir, &set.design_id);
    let mut bytes = Vec::with_capacity(set.len() * 16);
    for s in &set.samples {
        for v in [s.x.x, s.x.y, s.x.z, s.s] {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(&path, bytes)?;
    let meta = SampleSidecar {
        design_id: set.design_id.clone(),
        n: set.len(),
        delta: set.delta,
        band_fraction: set.band_fraction,
        seed: set.seed,
        tol_sign: set.tol_sign,
        tol_surf: set.tol_surf,
    };
    fs::write(sidecar_path(&path), serde_json::to_string_pretty(&meta)?)?;
    Ok(path)
}

/// Reads a set back. Labels are re-clamped to `delta` after widening from
/// `f32`, which can otherwise overshoot the bound by one ulp.
pub fn read_sample_set(dir: &Path, design_id: &str) -> Result<SdfSampleSet> {
    let path = samples_path(dir, design_id);
    let side = sidecar_path(&path);
    let meta: SampleSidecar =
        serde_json::from_str(&fs::read_to_string(&side)?).map_err(|e| Error::parse(&side, e.to_string()))?;
    let bytes = fs::read(&path)?;
    if bytes.len() != meta.n * 16 {
        return Err(Error::parse(
            &path,
            format!("expected {} bytes for {} samples, found {}", meta.n * 16, meta.n, bytes.len()),
        ));
    }
    let samples = bytes
        .chunks_exact(16)
        .map(|rec| {
            let f = |i: usize| f32::from_le_bytes(rec[4 * i..4 * i + 4].try_into().unwrap()) as f64;
            SdfSample {
                x: Vec3::new(f(0), f(1), f(2)),
                s: f(3).clamp(-meta.delta, meta.delta),
            }
        })
        .collect();
    Ok(SdfSampleSet {
        design_id: meta.design_id,
        samples,
        delta: meta.delta,
        band_fraction: meta.band_fraction,
        tol_sign: meta.tol_sign,
        tol_surf: meta.tol_surf,
        seed: meta.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_at_f32_precision() {
        let set = SdfSampleSet {
            design_id: "0007".into(),
            samples: vec![
                SdfSample { x: Vec3::new(0.1, -0.2, 0.3), s: 0.1 },
                SdfSample { x: Vec3::new(1.0, 0.5, -1.05), s: -0.0375 },
            ],
            delta: 0.1,
            band_fraction: 0.5,
            tol_sign: 0.0,
            tol_surf: 1e-3,
            seed: 44,
        };
        let dir = tempfile::tempdir().unwrap();
        write_sample_set(dir.path(), &set).unwrap();
        let back = read_sample_set(dir.path(), "0007").unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.seed, 44);
        assert!(back.samples.iter().all(|s| s.s.abs() <= 0.1));
        for (a, b) in set.samples.iter().zip(&back.samples) {
            assert!((a.x - b.x).norm() < 1e-6 && (a.s - b.s).abs() < 1e-7);
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let set = SdfSampleSet {
            design_id: "x".into(),
            samples: vec![SdfSample { x: Vec3::ZERO, s: 0.0 }; 3],
            delta: 0.1,
            band_fraction: 0.5,
            tol_sign: 0.0,
            tol_surf: 1e-3,
            seed: 0,
        };
        let path = write_sample_set(dir.path(), &set).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..40]).unwrap();
        assert!(read_sample_set(dir.path(), "x").is_err());
    }
}
