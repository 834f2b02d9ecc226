use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{StrainRecord, StrainTriplet};
use crate::mesh::{decode_mesh, TriangleMesh};
use crate::neural::{Adam, DecoderModel, LatentTable, LayerSlots, Mlp, MlpSpec, StepSchedule};
use crate::{seeds, Error, Result};

const BLOB: &str = "cond.bin";
const MANIFEST: &str = "cond.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CondConfig {
    pub epochs: usize,
    pub lr0: f64,
    /// Optimizer steps between rate halvings; 0 keeps the rate constant.
    pub halve_every: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for CondConfig {
    fn default() -> Self {
        Self { epochs: 40_000, lr0: 1e-3, halve_every: 0, hidden: 128, seed: 0 }
    }
}

/// Regressor from a strain triplet to a latent code: two ReLU hidden layers
/// on standardized inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CondModel {
    pub net: Mlp<f64>,
    pub input_mean: [f64; 3],
    pub input_std: [f64; 3],
    pub input_min: [f64; 3],
    pub input_max: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct CondOutcome {
    pub model: CondModel,
    /// Mean range-normalized RMSE over latent dimensions, in percent, before
    /// each epoch's update.
    pub nrmse_curve: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CondManifest {
    spec: MlpSpec,
    layers: Vec<LayerSlots>,
    num_params: usize,
    input_mean: [f64; 3],
    input_std: [f64; 3],
    input_min: [f64; 3],
    input_max: [f64; 3],
    blob: String,
}

impl CondModel {
    fn new(latent_dim: usize, hidden: usize, inputs: &[StrainTriplet], seed: u64) -> Result<Self> {
        let spec = MlpSpec { input: 3, hidden: vec![hidden; 2], output: latent_dim, batch_norm: false, dropout: 0.0 };
        let net = Mlp::new(spec, &mut seeds::rng(seeds::derive(seed, "cond-init", 0)))?;
        let n = inputs.len() as f64;
        let mut m = Self { net, input_mean: [0.0; 3], input_std: [1.0; 3], input_min: [0.0; 3], input_max: [0.0; 3] };
        for d in 0..3 {
            let col: Vec<f64> = inputs.iter().map(|s| s.to_array()[d]).collect();
            let mean = col.iter().sum::<f64>() / n;
            let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            m.input_mean[d] = mean;
            m.input_std[d] = if std > 0.0 { std } else { 1.0 };
            m.input_min[d] = col.iter().cloned().fold(f64::INFINITY, f64::min);
            m.input_max[d] = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
        Ok(m)
    }

    pub fn latent_dim(&self) -> usize {
        self.net.spec.output
    }

    pub fn standardize(&self, inputs: &[StrainTriplet]) -> Array2<f64> {
        Array2::from_shape_fn((inputs.len(), 3), |(i, d)| {
            (inputs[i].to_array()[d] - self.input_mean[d]) / self.input_std[d]
        })
    }

    pub fn in_training_range(&self, s: StrainTriplet) -> bool {
        s.to_array().iter().enumerate().all(|(d, v)| (self.input_min[d]..=self.input_max[d]).contains(v))
    }

    /// Latent code predicted for `target`.
    pub fn predict_code(&self, target: StrainTriplet) -> Array1<f64> {
        if !self.in_training_range(target) {
            log::warn!("strain target {target:?} lies outside the training range");
        }
        let x = self.standardize(&[target]);
        self.net.forward_eval(x.view()).expect("input width is fixed").row(0).to_owned()
    }

    pub fn predict_codes(&self, targets: &[StrainTriplet]) -> Array2<f64> {
        self.net.forward_eval(self.standardize(targets).view()).expect("input width is fixed")
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let bytes: Vec<u8> = self.net.params.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(dir.join(BLOB), bytes)?;
        let man = CondManifest {
            spec: self.net.spec.clone(),
            layers: self.net.layers.clone(),
            num_params: self.net.num_params(),
            input_mean: self.input_mean,
            input_std: self.input_std,
            input_min: self.input_min,
            input_max: self.input_max,
            blob: BLOB.into(),
        };
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&man)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST);
        let man: CondManifest =
            serde_json::from_str(&fs::read_to_string(&mpath)?).map_err(|e| Error::parse(&mpath, e.to_string()))?;
        let bpath = dir.join(&man.blob);
        let bytes = fs::read(&bpath)?;
        if bytes.len() != 8 * man.num_params {
            return Err(Error::parse(&bpath, format!("expected {} parameters", man.num_params)));
        }
        let params: Array1<f64> = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        man.spec.validate()?;
        Ok(Self {
            net: Mlp { spec: man.spec, layers: man.layers, params, running: Vec::new() },
            input_mean: man.input_mean,
            input_std: man.input_std,
            input_min: man.input_min,
            input_max: man.input_max,
        })
    }
}

/// Mean over rows of the squared error norm, and its parameter gradient.
pub fn cond_loss_and_grad(net: &Mlp<f64>, x: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<(f64, Array1<f64>, Array2<f64>)> {
    let (out, cache) = net.forward_train(x, &[])?;
    if out.dim() != targets.dim() {
        return Err(Error::DimensionMismatch { expected: out.ncols(), got: targets.ncols() });
    }
    let resid = &out - &targets;
    let n = x.nrows() as f64;
    let loss = resid.iter().map(|r| r * r).sum::<f64>() / n;
    let d_out = resid.mapv(|r| 2.0 * r / n);
    let (grad, _) = net.backward(&cache, d_out.view());
    Ok((loss, grad, out))
}

fn mean_nrmse(pred: &Array2<f64>, truth: ArrayView2<f64>, range: &Array1<f64>) -> f64 {
    let n = truth.nrows() as f64;
    let mut sum = 0.0;
    let mut count = 0;
    for d in 0..truth.ncols() {
        if range[d] > 0.0 {
            let mse = pred.column(d).iter().zip(truth.column(d)).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n;
            sum += 100.0 * mse.sqrt() / range[d];
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Fits the regressor by full-batch Adam on the squared code error.
pub fn train_cond(inputs: &[StrainTriplet], targets: ArrayView2<f64>, cfg: &CondConfig) -> Result<CondOutcome> {
    if inputs.is_empty() {
        return Err(Error::Empty("conditioning pairs"));
    }
    if inputs.len() != targets.nrows() {
        return Err(Error::DimensionMismatch { expected: inputs.len(), got: targets.nrows() });
    }
    if !(cfg.lr0 > 0.0) || cfg.hidden == 0 {
        return Err(Error::Invalid("cond learning rate and width must be positive".into()));
    }
    for i in 0..inputs.len() {
        for j in 0..i {
            if inputs[i] == inputs[j] && targets.row(i) != targets.row(j) {
                log::warn!("pairs {j} and {i} share a strain triplet but have different codes");
            }
        }
    }
    let mut model = CondModel::new(targets.ncols(), cfg.hidden, inputs, cfg.seed)?;
    let x = model.standardize(inputs);
    let max = targets.fold_axis(Axis(0), f64::NEG_INFINITY, |a, &b| a.max(b));
    let min = targets.fold_axis(Axis(0), f64::INFINITY, |a, &b| a.min(b));
    let range = &max - &min;
    let mut opt = Adam::new(model.net.num_params(), StepSchedule { lr0: cfg.lr0, halve_every: cfg.halve_every });
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (loss, grad, out) = cond_loss_and_grad(&model.net, x.view(), targets)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { loss, epoch, step: epoch });
        }
        curve.push(mean_nrmse(&out, targets, &range));
        opt.step(model.net.params.view_mut(), grad.view());
    }
    Ok(CondOutcome { model, nrmse_curve: curve })
}

/// Strain triplets and codes of the designs present in both inputs, in
/// latent-table order.
pub fn pair_by_design(strains: &[StrainRecord], latents: &LatentTable) -> Result<(Vec<String>, Vec<StrainTriplet>, Array2<f64>)> {
    let mut ids = Vec::new();
    let mut inputs = Vec::new();
    for id in &latents.design_ids {
        if let Some(r) = strains.iter().find(|r| &r.design_id == id) {
            ids.push(id.clone());
            inputs.push(r.triplet()?);
        }
    }
    if ids.is_empty() {
        return Err(Error::Invalid("no design appears in both the strain file and the latent table".into()));
    }
    let codes = latents.select(&ids)?.codes;
    Ok((ids, inputs, codes))
}

/// Predicts a code for `target` and meshes its zero level set.
pub fn conditional_generate(
    model: &CondModel,
    decoder: &DecoderModel<f32>,
    target: StrainTriplet,
    res: usize,
    half_width: f64,
) -> Result<TriangleMesh> {
    let z = model.predict_code(target);
    let mesh = decode_mesh(decoder, z.as_slice().unwrap(), res, half_width)?;
    if mesh.is_empty() {
        return Err(Error::ConditioningLeftManifold);
    }
    Ok(mesh)
}
