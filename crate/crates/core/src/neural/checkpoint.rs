//! On-disk decoder checkpoints: a flat little-endian `f32` blob holding the
//! parameters followed by every running mean/variance pair, plus a JSON
//! manifest describing the layout.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::{DecoderConfig, DecoderModel, LatentTable, LayerSlots, Mlp, Mode, TrainConfig};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: u32 = 1;
const BLOB: &str = "decoder.bin";
const MANIFEST: &str = "decoder.json";
const CURVE: &str = "loss_curve.csv";
const LATENTS: &str = "latents.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format: u32,
    pub decoder: DecoderConfig,
    pub layers: Vec<LayerSlots>,
    pub num_params: usize,
    /// Float offset of the first running-statistics vector in the blob.
    pub running_offset: usize,
    pub running_widths: Vec<usize>,
    pub epoch: usize,
    pub train: Option<TrainConfig>,
    pub weights_sha256: String,
    pub blob: String,
    pub loss_curve: String,
    pub latents: Option<String>,
}

/// Writes `model` (and optionally the trained latent table) into `dir`.
pub fn save_checkpoint(
    dir: &Path,
    model: &DecoderModel<f32>,
    latents: Option<&LatentTable>,
    train: Option<&TrainConfig>,
    epoch: usize,
    loss_curve: &[f64],
) -> Result<CheckpointManifest> {
    fs::create_dir_all(dir)?;
    let net = &model.net;
    let mut bytes = Vec::with_capacity(4 * (net.params.len() + 2 * net.running.iter().map(|r| r.0.len()).sum::<usize>()));
    let mut push = |a: &Array1<f32>| bytes.extend(a.iter().flat_map(|v| v.to_le_bytes()));
    push(&net.params);
    for (m, v) in &net.running {
        push(m);
        push(v);
    }
    fs::write(dir.join(BLOB), &bytes)?;

    let mut w = csv::Writer::from_path(dir.join(CURVE))?;
    w.write_record(["epoch", "loss"])?;
    for (e, l) in loss_curve.iter().enumerate() {
        w.write_record([e.to_string(), format!("{l:e}")])?;
    }
    w.flush()?;
    if let Some(t) = latents {
        t.write_csv(&dir.join(LATENTS))?;
    }

    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT,
        decoder: model.config.clone(),
        layers: net.layers.clone(),
        num_params: net.params.len(),
        running_offset: net.params.len(),
        running_widths: net.running.iter().map(|r| r.0.len()).collect(),
        epoch,
        train: train.cloned(),
        weights_sha256: model.weights_hash(),
        blob: BLOB.into(),
        loss_curve: CURVE.into(),
        latents: latents.map(|_| LATENTS.into()),
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub struct LoadedCheckpoint {
    pub manifest: CheckpointManifest,
    pub model: DecoderModel<f32>,
    pub latents: Option<LatentTable>,
    pub loss_curve: Vec<f64>,
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST)
}

/// Reads a checkpoint written by [`save_checkpoint`], verifying the blob
/// size and weight hash. The model comes back in eval mode.
pub fn load_checkpoint(dir: &Path) -> Result<LoadedCheckpoint> {
    let mpath = manifest_path(dir);
    let manifest: CheckpointManifest = serde_json::from_str(&fs::read_to_string(&mpath)?)
        .map_err(|e| Error::parse(&mpath, e.to_string()))?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(Error::parse(&mpath, format!("unsupported checkpoint format {}", manifest.format)));
    }
    let spec = manifest.decoder.spec();
    spec.validate()?;
    let bpath = dir.join(&manifest.blob);
    let bytes = fs::read(&bpath)?;
    let expected = manifest.num_params + 2 * manifest.running_widths.iter().sum::<usize>();
    if bytes.len() != 4 * expected {
        return Err(Error::parse(&bpath, format!("expected {} floats, found {} bytes", expected, bytes.len())));
    }
    let floats: Vec<f32> = bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    let params = Array1::from(floats[..manifest.num_params].to_vec());
    let mut running = Vec::new();
    let mut at = manifest.running_offset;
    for &w in &manifest.running_widths {
        let m = Array1::from(floats[at..at + w].to_vec());
        let v = Array1::from(floats[at + w..at + 2 * w].to_vec());
        if v.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::parse(&bpath, "running variance must be positive"));
        }
        running.push((m, v));
        at += 2 * w;
    }
    let model = DecoderModel {
        config: manifest.decoder.clone(),
        net: Mlp { spec, layers: manifest.layers.clone(), params, running },
        mode: Mode::Eval,
    };
    if model.weights_hash() != manifest.weights_sha256 {
        return Err(Error::parse(&bpath, "weight hash does not match manifest"));
    }
    let latents = match &manifest.latents {
        Some(name) => Some(LatentTable::read_csv(&dir.join(name))?),
        None => None,
    };
    let mut loss_curve = Vec::new();
    let cpath = dir.join(&manifest.loss_curve);
    if cpath.exists() {
        let mut r = csv::Reader::from_path(&cpath)?;
        for rec in r.records() {
            let rec = rec?;
            let v = rec
                .get(1)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::parse(&cpath, "bad loss value"))?;
            loss_curve.push(v);
        }
    }
    Ok(LoadedCheckpoint { manifest, model, latents, loss_curve })
}
