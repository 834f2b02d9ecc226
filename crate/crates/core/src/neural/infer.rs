use ndarray::{s, Array1, Array2, NdFloat};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Adam, DecoderModel, EvalTrace, Mode, StepSchedule};
use crate::geom::Vec3;
use crate::sdf::SdfSampleSet;
use crate::{seeds, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    pub steps: usize,
    pub lr0: f64,
    pub halve_every: usize,
    pub lambda_z: f64,
    pub delta: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Consecutive loss increases tolerated before giving up.
    pub patience: usize,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            lr0: 1e-3,
            halve_every: 500,
            lambda_z: 1e-4,
            delta: 0.1,
            batch_size: 4096,
            seed: 0,
            patience: 10,
        }
    }
}

impl InferConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.delta > 0.0 && self.lambda_z >= 0.0) {
            return Err(Error::Invalid("lr0 and delta must be positive, lambda_z non-negative".into()));
        }
        if self.halve_every == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Invalid("halve_every, batch_size and patience must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferOutcome {
    /// Code with the lowest loss seen.
    pub code: Array1<f64>,
    pub best_loss: f64,
    pub steps: usize,
    /// Set when the run stopped early because the loss kept rising.
    pub diverged: bool,
    pub loss_curve: Vec<f64>,
}

/// Fits a fresh latent code to `samples` with every decoder weight held
/// fixed. Starts from the zero code.
pub fn infer_latent<F: NdFloat>(model: &DecoderModel<F>, samples: &SdfSampleSet, cfg: &InferConfig) -> Result<InferOutcome> {
    cfg.validate()?;
    if model.mode != Mode::Eval {
        return Err(Error::Invalid("latent inference needs a decoder in eval mode".into()));
    }
    if samples.is_empty() {
        return Err(Error::Empty("inference samples"));
    }
    let k = model.latent_dim();
    let lambda = F::from(cfg.lambda_z).unwrap();
    let w0k = model.net.weight(0).slice(s![.., ..k]).to_owned();
    let full = samples.len() <= cfg.batch_size;
    let mut rng = seeds::rng(seeds::derive(cfg.seed, "infer", 0));
    let mut opt = Adam::<F>::new(k, StepSchedule { lr0: cfg.lr0, halve_every: cfg.halve_every });
    let mut z = Array1::<F>::zeros(k);
    let mut trace = EvalTrace::default();

    let mut best = (f64::INFINITY, z.clone());
    let mut curve = Vec::with_capacity(cfg.steps);
    let mut rising = 0;
    let mut diverged = false;
    let mut points: Vec<Vec3> = Vec::with_capacity(cfg.batch_size.min(samples.len()));
    let mut targets: Vec<f64> = Vec::with_capacity(points.capacity());

    for step in 0..cfg.steps {
        points.clear();
        targets.clear();
        if full {
            points.extend(samples.samples.iter().map(|p| p.x));
            targets.extend(samples.samples.iter().map(|p| p.s));
        } else {
            for _ in 0..cfg.batch_size {
                let p = samples.samples[rng.random_range(0..samples.len())];
                points.push(p.x);
                targets.push(p.s);
            }
        }
        let zs = z.as_slice().unwrap();
        let out = model.net.forward_eval_from(model.first_layer(zs, &points), Some(&mut trace));
        let b = points.len() as f64;
        let mut data = 0.0;
        let d_out = Array2::from_shape_fn((points.len(), 1), |(i, _)| {
            let p = out[[i, 0]].to_f64().unwrap();
            let r = p.clamp(-cfg.delta, cfg.delta) - targets[i];
            data += r.abs();
            if p <= -cfg.delta || p >= cfg.delta || r == 0.0 {
                F::zero()
            } else {
                F::from(r.signum() / b).unwrap()
            }
        });
        let loss = data / b + cfg.lambda_z * z.iter().map(|v| v.to_f64().unwrap().powi(2)).sum::<f64>();
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { loss, epoch: 0, step });
        }
        curve.push(loss);
        if loss < best.0 {
            best = (loss, z.clone());
        }
        if step > 0 && loss > curve[step - 1] {
            rising += 1;
            if rising >= cfg.patience {
                log::warn!("latent inference for {} stopped at step {step}: loss rose {rising} times in a row", samples.design_id);
                diverged = true;
                break;
            }
        } else {
            rising = 0;
        }

        let da0 = model.net.backward_eval_to_first(&trace, d_out.view());
        let mut gz = w0k.t().dot(&da0.sum_axis(ndarray::Axis(0)));
        gz.scaled_add(lambda + lambda, &z);
        opt.step(z.view_mut(), gz.view());
    }
    Ok(InferOutcome {
        code: best.1.mapv(|v| v.to_f64().unwrap()),
        best_loss: best.0,
        steps: curve.len(),
        diverged,
        loss_curve: curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{fibonacci_sphere, PointCloud};
    use crate::neural::{train, DecoderConfig, TrainConfig};
    use crate::sdf::{label_cloud, LabelConfig};

    fn sphere(r: f64, n: usize, seed: u64) -> SdfSampleSet {
        let cloud = PointCloud::new(format!("r{r}"), fibonacci_sphere(3000, r)).unwrap();
        label_cloud(&cloud, &LabelConfig { n, ..LabelConfig::default() }, seed).unwrap()
    }

    fn small_model() -> DecoderModel<f32> {
        let d = DecoderConfig { latent_dim: 4, hidden_layers: 2, width: 16, dropout: 0.0, batch_norm: true };
        DecoderModel::new(d, 5).unwrap()
    }

    #[test]
    fn decoder_is_untouched() {
        let m = small_model();
        let before = m.weights_hash();
        let out = infer_latent(&m, &sphere(0.5, 600, 1), &InferConfig { steps: 50, ..InferConfig::default() }).unwrap();
        assert_eq!(m.weights_hash(), before);
        assert_eq!(out.code.len(), 4);
        assert!(out.steps > 0);
    }

    #[test]
    fn overwhelming_prior_keeps_the_zero_code() {
        let m = small_model();
        let cfg = InferConfig { steps: 100, lambda_z: 1e6, ..InferConfig::default() };
        let out = infer_latent(&m, &sphere(0.5, 600, 2), &cfg).unwrap();
        assert!(out.code.iter().all(|&v| v == 0.0), "{:?}", out.code);
    }

    #[test]
    fn repeated_runs_agree() {
        let m = small_model();
        let set = sphere(0.5, 3000, 3);
        let cfg = InferConfig { steps: 40, batch_size: 512, seed: 8, ..InferConfig::default() };
        let a = infer_latent(&m, &set, &cfg).unwrap();
        let b = infer_latent(&m, &set, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn training_mode_model_is_rejected() {
        let mut m = small_model();
        m.mode = Mode::Train;
        assert!(infer_latent(&m, &sphere(0.5, 100, 1), &InferConfig::default()).is_err());
    }

    /// Inference on fresh samples of a training shape should reach the
    /// reconstruction quality of the code learned during training.
    #[test]
    fn recovers_a_training_shape_code() {
        let sets = [sphere(0.4, 2000, 1), sphere(0.7, 2000, 2)];
        let d = DecoderConfig { latent_dim: 4, hidden_layers: 3, width: 32, dropout: 0.0, batch_norm: true };
        let cfg = TrainConfig { epochs: 100, batch_size: 1000, seed: 4, ..TrainConfig::default() };
        let trained = train(&sets, &d, &cfg).unwrap();
        let probe = sphere(0.4, 2000, 9);
        let loss_of = |z: &[f32]| {
            let pts: Vec<Vec3> = probe.samples.iter().map(|p| p.x).collect();
            let f = trained.model.eval_points(z, &pts).unwrap();
            f.iter().zip(&probe.samples).map(|(f, p)| (f.clamp(-0.1, 0.1) - p.s).abs()).sum::<f64>() / pts.len() as f64
        };
        let z_train: Vec<f32> = trained.latents.code(0).iter().map(|&v| v as f32).collect();
        let icfg = InferConfig { steps: 400, lr0: 1e-2, ..InferConfig::default() };
        let out = infer_latent(&trained.model, &probe, &icfg).unwrap();
        let z_inf: Vec<f32> = out.code.iter().map(|&v| v as f32).collect();
        let (l_train, l_inf, l_zero) = (loss_of(&z_train), loss_of(&z_inf), out.loss_curve[0]);
        assert!(l_inf <= 1.5 * l_train + 1e-3, "inferred {l_inf}, trained {l_train}");
        assert!(l_inf < 0.5 * l_zero, "inferred {l_inf}, zero code {l_zero}");
    }
}
