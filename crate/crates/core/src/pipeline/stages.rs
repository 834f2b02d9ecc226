//! Building blocks shared by the pipeline runner and the individual CLI
//! subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::EvalConfig;
use crate::blade::DatasetManifest;
use crate::geom::io::read_ply;
use crate::geom::{PointCloud, UnitCubeTransform};
use crate::mesh::{check_watertight, decode_mesh, TriangleMesh};
use crate::metrics::{distance_report, reference_points, DistanceReport};
use crate::neural::{infer_latent, DecoderModel, InferConfig, InferOutcome, LatentTable};
use crate::sdf::{label_cloud, read_sample_set, write_sample_set, LabelConfig, SdfSampleSet};
use crate::{seeds, Error, Result};

pub const TRANSFORMS_FILE: &str = "transforms.json";

/// Reads a design's cloud and maps it into the normalized cube.
pub fn normalized_cloud(dataset_dir: &Path, design_id: &str) -> Result<(PointCloud, UnitCubeTransform)> {
    read_ply(&DatasetManifest::cloud_path(dataset_dir, design_id))?.normalize_to_unit_cube()
}

/// Labels every design of a dataset directory into `out`, one sample set per
/// design, and records the per-design normalization in `transforms.json`.
pub fn label_dataset(dataset_dir: &Path, out: &Path, cfg: &LabelConfig, seed: u64) -> Result<Vec<String>> {
    cfg.validate()?;
    let manifest = DatasetManifest::load(dataset_dir)?;
    fs::create_dir_all(out)?;
    let transforms = manifest
        .designs
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let (cloud, t) = normalized_cloud(dataset_dir, &d.design_id)?;
            let set = label_cloud(&cloud, cfg, seeds::derive(seed, "label", i as u64))?;
            write_sample_set(out, &set)?;
            Ok((d.design_id.clone(), t))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    fs::write(out.join(TRANSFORMS_FILE), serde_json::to_string_pretty(&transforms)?)?;
    Ok(transforms.into_keys().collect())
}

pub fn read_transforms(sdf_dir: &Path) -> Result<BTreeMap<String, UnitCubeTransform>> {
    let path = sdf_dir.join(TRANSFORMS_FILE);
    serde_json::from_str(&fs::read_to_string(&path)?).map_err(|e| Error::parse(&path, e.to_string()))
}

pub fn load_sets(sdf_dir: &Path, ids: &[String]) -> Result<Vec<SdfSampleSet>> {
    ids.iter().map(|id| read_sample_set(sdf_dir, id)).collect()
}

/// Fits one code per sample set with the decoder frozen. Each design gets
/// its own seed stream.
pub fn infer_codes(model: &DecoderModel<f32>, sets: &[SdfSampleSet], cfg: &InferConfig) -> Result<(LatentTable, Vec<InferOutcome>)> {
    if sets.is_empty() {
        return Err(Error::Empty("inference sample sets"));
    }
    let outcomes = sets
        .par_iter()
        .enumerate()
        .map(|(i, set)| {
            let cfg = InferConfig { seed: seeds::derive(cfg.seed, "infer-design", i as u64), ..cfg.clone() };
            let out = infer_latent(model, set, &cfg)?;
            if out.diverged {
                log::warn!("latent inference for {} stopped early after {} steps", set.design_id, out.steps);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let k = model.latent_dim();
    let mut codes = Array2::zeros((sets.len(), k));
    for (i, o) in outcomes.iter().enumerate() {
        codes.row_mut(i).assign(&o.code);
    }
    let ids = sets.iter().map(|s| s.design_id.clone()).collect();
    Ok((LatentTable::new(ids, codes)?, outcomes))
}

pub fn write_infer_report(path: &Path, ids: &[String], outcomes: &[InferOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["design_id", "best_loss", "steps", "diverged"])?;
    for (id, o) in ids.iter().zip(outcomes) {
        w.write_record([id.clone(), format!("{:e}", o.best_loss), o.steps.to_string(), o.diverged.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_mesh(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("stl") => mesh.write_stl(path),
        _ => mesh.write_obj(path),
    }
}

pub fn mesh_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.obj"))
}

/// Quality figures for one decoded mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSummary {
    pub name: String,
    pub vertices: usize,
    pub triangles: usize,
    pub watertight: bool,
    pub max_aspect: f64,
}

impl MeshSummary {
    pub fn of(name: &str, mesh: &TriangleMesh) -> Self {
        Self {
            name: name.to_string(),
            vertices: mesh.vertices.len(),
            triangles: mesh.triangles.len(),
            watertight: !mesh.is_empty() && check_watertight(mesh).watertight,
            max_aspect: if mesh.is_empty() { 0.0 } else { mesh.max_aspect_ratio() },
        }
    }
}

pub fn write_mesh_summaries(path: &Path, rows: &[MeshSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Decodes `z` and writes the mesh as `<dir>/<name>.obj`.
pub fn decode_to_file(
    model: &DecoderModel<f32>,
    z: &[f64],
    name: &str,
    dir: &Path,
    res: usize,
    half_width: f64,
) -> Result<MeshSummary> {
    let mesh = decode_mesh(model, z, res, half_width)?;
    if mesh.is_empty() {
        log::warn!("code `{name}` decodes to an empty mesh");
    }
    fs::create_dir_all(dir)?;
    mesh.write_obj(&mesh_path(dir, name))?;
    Ok(MeshSummary::of(name, &mesh))
}

/// Decodes every code of `table` into `dir`, named by design id.
pub fn extract_table(
    model: &DecoderModel<f32>,
    table: &LatentTable,
    dir: &Path,
    res: usize,
    half_width: f64,
) -> Result<Vec<MeshSummary>> {
    (0..table.len())
        .map(|i| {
            let z = table.code(i).to_vec();
            decode_to_file(model, &z, &table.design_ids[i], dir, res, half_width)
        })
        .collect()
}

/// Surface distance from each design's normalized reference cloud to its
/// mesh in `mesh_dir`.
pub fn evaluate_meshes(
    dataset_dir: &Path,
    mesh_dir: &Path,
    ids: &[String],
    eval: &EvalConfig,
) -> Result<Vec<DistanceReport>> {
    ids.iter()
        .map(|id| {
            let (cloud, _) = normalized_cloud(dataset_dir, id)?;
            let reference = reference_points(&cloud, eval.reference)?;
            let mesh = TriangleMesh::read_obj(&mesh_path(mesh_dir, id))?;
            distance_report(id, &reference, &mesh, eval.surface)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blade::{write_dataset, DatasetSpec};

    #[test]
    fn labels_every_design_with_transforms() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let sdf = dir.path().join("sdf");
        write_dataset(&DatasetSpec { n_train: 2, n_test: 1, n_surface: 2000, n_interior: 500, seed: 3 }, &data).unwrap();
        let cfg = LabelConfig { n: 500, ..Default::default() };
        let ids = label_dataset(&data, &sdf, &cfg, 9).unwrap();
        assert_eq!(ids, ["0000", "0001", "0002"]);
        let sets = load_sets(&sdf, &ids).unwrap();
        assert!(sets.iter().all(|s| s.len() == 500));
        let t = read_transforms(&sdf).unwrap();
        let (norm, t0) = normalized_cloud(&data, "0000").unwrap();
        assert_eq!(t["0000"], t0);
        let raw = read_ply(&DatasetManifest::cloud_path(&data, "0000")).unwrap();
        let back = t0.invert(norm.points[7]);
        assert!(back.distance(raw.points[7]) < 1e-9);
        // Relabelling is reproducible byte for byte.
        let sdf2 = dir.path().join("sdf2");
        label_dataset(&data, &sdf2, &cfg, 9).unwrap();
        for id in &ids {
            let a = fs::read(sdf.join(format!("design_{id}.sdf"))).unwrap();
            let b = fs::read(sdf2.join(format!("design_{id}.sdf"))).unwrap();
            assert_eq!(a, b);
        }
    }
}
