use ndarray::{s, Array1, Array2, ArrayView1, NdFloat};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{assemble_inputs, Adam, Cache, DecoderConfig, DecoderModel, LatentTable, Mode, StepSchedule};
use crate::geom::Vec3;
use crate::sdf::SdfSampleSet;
use crate::{seeds, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub halve_every: usize,
    pub lambda_z: f64,
    pub delta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub latent_init_std: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-3,
            halve_every: 500,
            lambda_z: 1e-4,
            delta: 0.1,
            epochs: 200,
            batch_size: 4096,
            latent_init_std: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr0", self.lr0),
            ("delta", self.delta),
            ("latent_init_std", self.latent_init_std),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.lambda_z >= 0.0) {
            return Err(Error::Invalid("lambda_z must be non-negative".into()));
        }
        if self.batch_size == 0 || self.halve_every == 0 {
            return Err(Error::Invalid("batch size and halving interval must be positive".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> StepSchedule {
        StepSchedule { lr0: self.lr0, halve_every: self.halve_every }
    }
}

/// Queries of one optimizer step; `design[i]` indexes the latent table.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub design: Vec<usize>,
    pub points: Vec<Vec3>,
    pub targets: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub data: f64,
    pub prior: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.data + self.prior
    }
}

/// Clamped L1 data term plus `lambda_z` times the mean squared code norm over
/// the distinct designs present.
pub fn joint_loss(predictions: &[f64], targets: &[f64], codes: &[ArrayView1<f64>], lambda_z: f64, delta: f64) -> LossParts {
    let n = predictions.len().max(1) as f64;
    let data = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p.clamp(-delta, delta) - t).abs())
        .sum::<f64>()
        / n;
    let prior = if codes.is_empty() {
        0.0
    } else {
        lambda_z * codes.iter().map(|z| z.dot(z)).sum::<f64>() / codes.len() as f64
    };
    LossParts { data, prior }
}

fn designs_in(batch: &Batch) -> Vec<usize> {
    let mut d = batch.design.clone();
    d.sort_unstable();
    d.dedup();
    d
}

/// Loss of one training-mode pass and its exact gradients with respect to
/// the network parameters and every latent code (rows of designs absent
/// from the batch are zero). The returned cache carries the batch
/// normalization statistics for a running-stat update.
pub fn loss_and_grad<F: NdFloat>(
    model: &DecoderModel<F>,
    codes: &Array2<F>,
    batch: &Batch,
    masks: &[Option<Array2<F>>],
    lambda_z: f64,
    delta: f64,
) -> Result<(LossParts, Array1<F>, Array2<F>, Cache<F>)> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    let k = model.latent_dim();
    let rows: Vec<&[F]> = batch
        .design
        .iter()
        .map(|&d| codes.row(d).to_slice().expect("latent table must be contiguous"))
        .collect();
    let x = assemble_inputs(&rows, &batch.points);
    let (out, cache) = model.net.forward_train(x.view(), masks)?;

    let b = batch.len() as f64;
    let preds: Vec<f64> = out.column(0).iter().map(|v| v.to_f64().unwrap()).collect();
    let present = designs_in(batch);
    let codes64: Vec<Array1<f64>> = present
        .iter()
        .map(|&d| codes.row(d).mapv(|v| v.to_f64().unwrap()))
        .collect();
    let views: Vec<ArrayView1<f64>> = codes64.iter().map(|z| z.view()).collect();
    let parts = joint_loss(&preds, &batch.targets, &views, lambda_z, delta);

    let d_out = Array2::from_shape_fn((batch.len(), 1), |(i, _)| {
        let p = preds[i];
        if p <= -delta || p >= delta {
            return F::zero();
        }
        let r = p - batch.targets[i];
        let g = if r > 0.0 {
            1.0
        } else if r < 0.0 {
            -1.0
        } else {
            0.0
        };
        F::from(g / b).unwrap()
    });
    let (grad, dx) = model.net.backward(&cache, d_out.view());

    let mut gz = Array2::zeros(codes.raw_dim());
    for (i, &d) in batch.design.iter().enumerate() {
        let mut row = gz.row_mut(d);
        row += &dx.slice(s![i, ..k]);
    }
    let scale = F::from(2.0 * lambda_z / present.len() as f64).unwrap();
    for &d in &present {
        let z = codes.row(d).to_owned();
        let mut row = gz.row_mut(d);
        row.scaled_add(scale, &z);
    }
    Ok((parts, grad, gz, cache))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DecoderModel<f32>,
    pub latents: LatentTable,
    /// Mean training loss of each epoch.
    pub loss_curve: Vec<f64>,
    pub steps: usize,
}

/// Jointly fits the decoder and one latent code per sample set.
pub fn train(sets: &[SdfSampleSet], decoder: &DecoderConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_observed(sets, decoder, cfg, |_, _| {})
}

/// As [`train`], calling `observer(epoch, loss)` after every epoch.
pub fn train_observed(
    sets: &[SdfSampleSet],
    decoder: &DecoderConfig,
    cfg: &TrainConfig,
    mut observer: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if sets.is_empty() {
        return Err(Error::Empty("training designs"));
    }
    if let Some(s) = sets.iter().find(|s| s.is_empty()) {
        return Err(Error::Invalid(format!("design {} has no samples", s.design_id)));
    }
    let mut model = DecoderModel::<f32>::new(decoder.clone(), cfg.seed)?;
    let k = decoder.latent_dim;
    let init = Normal::new(0.0, cfg.latent_init_std).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut rng = seeds::rng(seeds::derive(cfg.seed, "latent-init", 0));
    let mut codes: Array2<f32> = Array2::from_shape_fn((sets.len(), k), |_| init.sample(&mut rng) as f32);

    let pool: Vec<(u32, u32)> = sets
        .iter()
        .enumerate()
        .flat_map(|(d, s)| (0..s.len() as u32).map(move |i| (d as u32, i)))
        .collect();
    let mut order = pool;
    let mut opt_net = Adam::<f32>::new(model.net.num_params(), cfg.schedule());
    let mut opt_codes = Adam::<f32>::new(codes.len(), cfg.schedule());
    let mut curve = Vec::with_capacity(cfg.epochs);
    model.mode = Mode::Train;

    for epoch in 0..cfg.epochs {
        let mut shuffle = seeds::rng(seeds::derive(cfg.seed, "shuffle", epoch as u64));
        order.shuffle(&mut shuffle);
        let mut drop_rng = seeds::rng(seeds::derive(cfg.seed, "dropout", epoch as u64));
        let (mut sum, mut count) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 && decoder.batch_norm {
                continue;
            }
            let mut batch = Batch::default();
            for &(d, i) in chunk {
                let sample = sets[d as usize].samples[i as usize];
                batch.design.push(d as usize);
                batch.points.push(sample.x);
                batch.targets.push(sample.s);
            }
            let masks = model.net.sample_masks(batch.len(), &mut drop_rng);
            let (parts, grad, gz, cache) = loss_and_grad(&model, &codes, &batch, &masks, cfg.lambda_z, cfg.delta)?;
            let loss = parts.total();
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { loss, epoch, step: opt_net.steps() });
            }
            model.net.update_running(&cache);
            opt_net.step(model.net.params.view_mut(), grad.view());
            let flat = codes.as_slice_mut().expect("latent table must be contiguous");
            opt_codes.step(ndarray::ArrayViewMut1::from(flat), ndarray::ArrayView1::from(gz.as_slice().unwrap()));
            sum += loss * batch.len() as f64;
            count += batch.len();
        }
        let epoch_loss = sum / count as f64;
        log::debug!("epoch {epoch}: loss {epoch_loss:.6}, lr {:.2e}", opt_net.current_rate());
        curve.push(epoch_loss);
        observer(epoch, epoch_loss);
    }
    if cfg.epochs > 0 && decoder.batch_norm {
        let inputs = order
            .chunks(cfg.batch_size)
            .map(|chunk| {
                let rows: Vec<&[f32]> = chunk.iter().map(|&(d, _)| codes.row(d as usize).to_slice().unwrap()).collect();
                let pts: Vec<Vec3> = chunk.iter().map(|&(d, i)| sets[d as usize].samples[i as usize].x).collect();
                assemble_inputs(&rows, &pts)
            });
        model.net.recalibrate_norm(inputs)?;
    }
    model.mode = Mode::Eval;
    let latents = LatentTable::new(
        sets.iter().map(|s| s.design_id.clone()).collect(),
        codes.mapv(|v| v as f64),
    )?;
    Ok(TrainOutcome { model, latents, loss_curve: curve, steps: opt_net.steps() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::PointCloud;
    use crate::neural::Mlp;
    use crate::sdf::{label_cloud, LabelConfig, SdfSample};
    use ndarray::arr1;
    use rand::Rng;

    fn tiny(latent: usize, layers: usize, width: usize) -> DecoderConfig {
        DecoderConfig { latent_dim: latent, hidden_layers: layers, width, dropout: 0.2, batch_norm: true }
    }

    #[test]
    fn loss_examples() {
        let z1 = arr1(&[1.0, 0.0]);
        let z2 = arr1(&[0.6, 0.8]);
        let zero = arr1(&[0.0, 0.0]);
        let t = [0.05, -0.02, 0.0];
        let perfect = joint_loss(&t, &t, &[zero.view()], 1e-4, 0.1);
        assert_eq!(perfect.total(), 0.0);
        let unit = joint_loss(&t, &t, &[z1.view(), z2.view()], 1e-4, 0.1);
        assert!((unit.total() - 1e-4).abs() < 1e-15);
        let wrong = joint_loss(&[0.1, 0.3, 5.0], &[-0.1, -0.1, -0.1], &[], 1e-4, 0.1);
        assert!((wrong.data - 0.2).abs() < 1e-15);
    }

    fn random_batch(n_designs: usize, len: usize, rng: &mut impl Rng) -> Batch {
        let mut b = Batch::default();
        for i in 0..len {
            b.design.push(i % n_designs);
            b.points.push(Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            b.targets.push(rng.random_range(-0.1..0.1));
        }
        b
    }

    #[test]
    fn saturated_predictions_have_no_data_gradient() {
        let mut m = DecoderModel::<f64>::new(tiny(3, 2, 8), 1).unwrap();
        m.zero_output_layer();
        let last = m.net.layers.len() - 1;
        m.net.bias_mut(last).fill(0.5);
        let mut rng = seeds::rng(2);
        let mut batch = random_batch(2, 32, &mut rng);
        batch.targets.iter_mut().for_each(|t| *t = 0.1);
        let codes = Array2::from_elem((2, 3), 0.3);
        let masks = m.net.sample_masks(batch.len(), &mut rng);
        let (parts, grad, gz, _) = loss_and_grad(&m, &codes, &batch, &masks, 0.0, 0.1).unwrap();
        assert_eq!(parts.data, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
        assert!(gz.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn prior_gradient_is_analytic() {
        let mut m = DecoderModel::<f64>::new(tiny(4, 2, 8), 1).unwrap();
        m.zero_output_layer();
        let mut rng = seeds::rng(3);
        // Designs 0 and 2 appear; design 1 does not.
        let mut batch = random_batch(3, 30, &mut rng);
        batch.design.iter_mut().for_each(|d| *d = if *d == 1 { 2 } else { *d });
        let codes = Array2::from_shape_fn((3, 4), |(i, j)| (i as f64 + 1.0) * 0.1 - j as f64 * 0.05);
        let lambda = 0.3;
        let (_, _, gz, _) = loss_and_grad(&m, &codes, &batch, &[], lambda, 0.1).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let want = if i == 1 { 0.0 } else { 2.0 * lambda * codes[[i, j]] / 2.0 };
                assert!((gz[[i, j]] - want).abs() < 1e-15);
            }
        }
    }

    /// Central differences on every parameter and code entry of a two-layer,
    /// width-8 network, with dropout masks held fixed and labels placed
    /// outside the clamp so the L1 term has no kink.
    #[test]
    fn gradients_match_finite_differences() {
        let h = 1e-4;
        let mut rng = seeds::rng(10);
        let mut checked = 0;
        let mut worst: f64 = 0.0;
        for trial in 0..20 {
            let m = DecoderModel::<f64>::new(tiny(3, 2, 8), 100 + trial).unwrap();
            let mut batch = random_batch(2, 16, &mut rng);
            batch.targets.iter_mut().enumerate().for_each(|(i, t)| *t = if i % 2 == 0 { 50.0 } else { -50.0 });
            let codes = Array2::from_shape_fn((2, 3), |_| rng.random_range(-0.5..0.5));
            let masks = m.net.sample_masks(batch.len(), &mut rng);
            let delta = 100.0;
            let lambda = 0.05;
            let (_, grad, gz, cache) = loss_and_grad(&m, &codes, &batch, &masks, lambda, delta).unwrap();
            if Mlp::<f64>::min_abs_preactivation(&cache) < 1e-6 {
                continue;
            }
            let loss_at = |mm: &DecoderModel<f64>, cc: &Array2<f64>| {
                loss_and_grad(mm, cc, &batch, &masks, lambda, delta).unwrap().0.total()
            };
            let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
            for p in 0..m.net.num_params() {
                let mut plus = m.clone();
                plus.net.params[p] += h;
                let mut minus = m.clone();
                minus.net.params[p] -= h;
                let fd = (loss_at(&plus, &codes) - loss_at(&minus, &codes)) / (2.0 * h);
                worst = worst.max(rel(grad[p], fd));
                checked += 1;
            }
            for idx in 0..codes.len() {
                let (i, j) = (idx / 3, idx % 3);
                let mut plus = codes.clone();
                plus[[i, j]] += h;
                let mut minus = codes.clone();
                minus[[i, j]] -= h;
                let fd = (loss_at(&m, &plus) - loss_at(&m, &minus)) / (2.0 * h);
                worst = worst.max(rel(gz[[i, j]], fd));
                checked += 1;
            }
            if checked >= 100 {
                break;
            }
        }
        assert!(checked >= 100);
        assert!(worst <= 1e-4, "max relative error {worst:e}");
    }

    #[test]
    fn prior_alone_shrinks_codes_monotonically() {
        let mut m = DecoderModel::<f64>::new(tiny(6, 2, 8), 4).unwrap();
        m.zero_output_layer();
        let mut rng = seeds::rng(5);
        let batch = random_batch(1, 8, &mut rng);
        let mut codes = Array2::from_shape_fn((1, 6), |_| rng.random_range(-1.0..1.0));
        let mut opt = Adam::<f64>::new(6, StepSchedule { lr0: 1e-3, halve_every: 500 });
        let mut prev = codes.iter().map(|v| v * v).sum::<f64>();
        for _ in 0..300 {
            let (_, _, gz, _) = loss_and_grad(&m, &codes, &batch, &[], 1e-4, 0.1).unwrap();
            opt.step(codes.as_slice_mut().map(ndarray::ArrayViewMut1::from).unwrap(), gz.as_slice().map(ndarray::ArrayView1::from).unwrap());
            let norm = codes.iter().map(|v| v * v).sum::<f64>();
            assert!(norm < prev);
            prev = norm;
        }
    }

    fn sphere_set(n: usize, seed: u64) -> SdfSampleSet {
        let pts = crate::geom::fibonacci_sphere(4000, 0.6);
        let cloud = PointCloud::new("sphere", pts).unwrap();
        label_cloud(&cloud, &LabelConfig { n, ..LabelConfig::default() }, seed).unwrap()
    }

    #[test]
    fn zero_epochs_returns_the_initial_model() {
        let set = sphere_set(500, 1);
        let dcfg = tiny(8, 2, 16);
        let cfg = TrainConfig { epochs: 0, seed: 9, ..TrainConfig::default() };
        let out = train(&[set], &dcfg, &cfg).unwrap();
        let fresh = DecoderModel::<f32>::new(dcfg, 9).unwrap();
        assert_eq!(out.model.weights_hash(), fresh.weights_hash());
        assert!(out.loss_curve.is_empty());
        assert_eq!(out.steps, 0);
        assert_eq!(out.latents.len(), 1);
    }

    #[test]
    fn training_is_deterministic() {
        let set = sphere_set(800, 2);
        let dcfg = tiny(4, 2, 16);
        let cfg = TrainConfig { epochs: 3, batch_size: 256, seed: 3, ..TrainConfig::default() };
        let a = train(std::slice::from_ref(&set), &dcfg, &cfg).unwrap();
        let b = train(&[set], &dcfg, &cfg).unwrap();
        assert_eq!(a.model.weights_hash(), b.model.weights_hash());
        assert_eq!(a.latents, b.latents);
        assert_eq!(a.loss_curve, b.loss_curve);
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let set = SdfSampleSet { samples: Vec::<SdfSample>::new(), ..sphere_set(10, 1) };
        assert!(train(&[set], &tiny(4, 2, 8), &TrainConfig::default()).is_err());
        assert!(train(&[], &tiny(4, 2, 8), &TrainConfig::default()).is_err());
    }

    #[test]
    fn sphere_loss_drops_by_ninety_percent() {
        let set = sphere_set(4096, 3);
        let dcfg = DecoderConfig { latent_dim: 16, hidden_layers: 4, width: 64, dropout: 0.0, batch_norm: true };
        let cfg = TrainConfig { epochs: 200, seed: 11, ..TrainConfig::default() };
        let out = train(&[set], &dcfg, &cfg).unwrap();
        let first = out.loss_curve[0];
        let last = *out.loss_curve.last().unwrap();
        assert!(last <= 0.1 * first, "epoch 1 loss {first:.5}, final {last:.5}");
    }
}
