use ndarray::{s, Array1, Array2, ArrayView2, NdFloat};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Mlp, MlpSpec};
use crate::geom::Vec3;
use crate::{seeds, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    pub latent_dim: usize,
    pub hidden_layers: usize,
    pub width: usize,
    pub dropout: f64,
    #[serde(default = "yes")]
    pub batch_norm: bool,
}

fn yes() -> bool {
    true
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            latent_dim: 256,
            hidden_layers: 8,
            width: 512,
            dropout: 0.2,
            batch_norm: true,
        }
    }
}

impl DecoderConfig {
    pub fn spec(&self) -> MlpSpec {
        MlpSpec {
            input: self.latent_dim + 3,
            hidden: vec![self.width; self.hidden_layers],
            output: 1,
            batch_norm: self.batch_norm,
            dropout: self.dropout,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Shared SDF network `f(z, x)` over latent code and query point.
///
/// Queries always run the inference path (running normalization statistics,
/// no dropout); training-mode passes go through [`Mlp::forward_train`]. The
/// `mode` flag records which regime the weights are currently in: training
/// sets it to `Train` and hands the model back in `Eval`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderModel<F = f32> {
    pub config: DecoderConfig,
    pub net: Mlp<F>,
    pub mode: Mode,
}

const EVAL_CHUNK: usize = 16_384;

impl<F: NdFloat> DecoderModel<F> {
    pub fn new(config: DecoderConfig, seed: u64) -> Result<Self> {
        let mut rng = seeds::rng(seeds::derive(seed, "decoder-init", 0));
        let net = Mlp::new(config.spec(), &mut rng)?;
        Ok(Self { config, net, mode: Mode::Eval })
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    /// Sets every weight and bias of the output layer to zero.
    pub fn zero_output_layer(&mut self) {
        let last = self.net.layers.len() - 1;
        self.net.weight_mut(last).fill(F::zero());
        self.net.bias_mut(last).fill(F::zero());
    }

    fn check_code(&self, z: &[F]) -> Result<()> {
        if z.len() != self.config.latent_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.latent_dim,
                got: z.len(),
            });
        }
        Ok(())
    }

    /// `f(z, x)` for one query.
    pub fn forward(&self, z: &[F], x: Vec3) -> Result<F> {
        self.check_code(z)?;
        let mut row = Array2::zeros((1, z.len() + 3));
        row.slice_mut(s![0, ..z.len()]).assign(&ndarray::ArrayView1::from(z));
        for d in 0..3 {
            row[[0, z.len() + d]] = F::from(x[d]).unwrap();
        }
        Ok(self.net.forward_eval(row.view())?[[0, 0]])
    }

    /// Inference over concatenated `[z | x]` rows.
    pub fn predict(&self, inputs: ArrayView2<F>) -> Result<Array1<F>> {
        Ok(self.net.forward_eval(inputs)?.column(0).to_owned())
    }

    /// First-layer output for many points of one shape. The code's share of
    /// the first layer is folded into its bias once, so the per-point cost
    /// does not depend on the latent size.
    pub fn first_layer(&self, z: &[F], points: &[Vec3]) -> Array2<F> {
        let k = z.len();
        let w0 = self.net.weight(0);
        let bias = &self.net.bias(0) + &w0.slice(s![.., ..k]).dot(&ndarray::ArrayView1::from(z));
        let x = Array2::from_shape_fn((points.len(), 3), |(i, d)| F::from(points[i][d]).unwrap());
        let mut a = Array2::from_shape_fn((points.len(), bias.len()), |(_, j)| bias[j]);
        ndarray::linalg::general_mat_mul(F::one(), &x, &w0.slice(s![.., k..]).t(), F::one(), &mut a);
        a
    }

    /// `f(z, x)` for many points of one shape.
    pub fn eval_points(&self, z: &[F], points: &[Vec3]) -> Result<Vec<f64>> {
        self.check_code(z)?;
        let mut out = Vec::with_capacity(points.len());
        for chunk in points.chunks(EVAL_CHUNK) {
            let y = self.net.forward_eval_from(self.first_layer(z, chunk), None);
            out.extend(y.column(0).iter().map(|v| v.to_f64().unwrap()));
        }
        Ok(out)
    }

    /// SHA-256 over every parameter and normalization statistic.
    pub fn weights_hash(&self) -> String {
        let mut h = Sha256::new();
        let mut feed = |a: &Array1<F>| {
            for v in a.iter() {
                h.update(v.to_f64().unwrap().to_le_bytes());
            }
        };
        feed(&self.net.params);
        for (m, v) in &self.net.running {
            feed(m);
            feed(v);
        }
        hex::encode(h.finalize())
    }

    pub fn cast<G: NdFloat>(&self) -> DecoderModel<G> {
        DecoderModel {
            config: self.config.clone(),
            net: self.net.cast(),
            mode: self.mode,
        }
    }
}

/// Row-stacks `[z_i | x_i]` inputs.
pub fn assemble_inputs<F: NdFloat>(codes: &[&[F]], points: &[Vec3]) -> Array2<F> {
    let k = codes.first().map_or(0, |z| z.len());
    let mut x = Array2::zeros((points.len(), k + 3));
    for (i, (z, p)) in codes.iter().zip(points).enumerate() {
        let mut row = x.row_mut(i);
        row.slice_mut(s![..k]).assign(&ndarray::ArrayView1::from(*z));
        for d in 0..3 {
            row[k + d] = F::from(p[d]).unwrap();
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small(latent: usize) -> DecoderConfig {
        DecoderConfig { latent_dim: latent, hidden_layers: 3, width: 24, dropout: 0.2, batch_norm: true }
    }

    #[test]
    fn zero_output_layer_gives_zero() {
        let mut m = DecoderModel::<f64>::new(small(5), 1).unwrap();
        m.zero_output_layer();
        let z = [0.3, -0.1, 0.2, 0.0, 1.0];
        for p in [Vec3::ZERO, Vec3::new(0.5, -0.9, 0.1)] {
            assert_eq!(m.forward(&z, p).unwrap(), 0.0);
        }
    }

    #[test]
    fn eval_is_bitwise_repeatable() {
        let m = DecoderModel::<f32>::new(small(4), 2).unwrap();
        let z = [0.1f32, 0.2, -0.3, 0.05];
        let a = m.forward(&z, Vec3::new(0.1, 0.2, 0.3)).unwrap();
        let b = m.forward(&z, Vec3::new(0.1, 0.2, 0.3)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn wrong_code_length_is_rejected() {
        let m = DecoderModel::<f32>::new(small(4), 2).unwrap();
        assert!(matches!(m.forward(&[0.0; 3], Vec3::ZERO), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn folded_evaluation_matches_direct() {
        let m = DecoderModel::<f64>::new(small(6), 3).unwrap();
        let mut rng = seeds::rng(4);
        let z: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pts: Vec<Vec3> = (0..50)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let fast = m.eval_points(&z, &pts).unwrap();
        for (p, f) in pts.iter().zip(fast) {
            assert!((m.forward(&z, *p).unwrap() - f).abs() < 1e-12);
        }
    }

    /// Lipschitz bound from the layer operator norms (batch norm in eval
    /// mode is a diagonal scaling, ReLU is 1-Lipschitz).
    #[test]
    fn input_perturbation_is_bounded_by_operator_norms() {
        let m = DecoderModel::<f64>::new(small(3), 5).unwrap();
        let spectral = |w: ndarray::ArrayView2<f64>| {
            let mut v = Array1::from_elem(w.ncols(), 1.0);
            for _ in 0..200 {
                let u = w.t().dot(&w.dot(&v));
                v = &u / u.dot(&u).sqrt();
            }
            w.dot(&v).dot(&w.dot(&v)).sqrt()
        };
        let mut lip = 1.0;
        let mut norm_idx = 0;
        for l in 0..m.net.layers.len() {
            lip *= spectral(m.net.weight(l));
            if let Some(at) = m.net.layers[l].norm {
                let n = m.net.layers[l].fan_out;
                let (_, var) = &m.net.running[norm_idx];
                norm_idx += 1;
                let scale = (0..n)
                    .map(|j| (m.net.params[at + j] / (var[j] + super::super::mlp::BN_EPS).sqrt()).abs())
                    .fold(0.0, f64::max);
                lip *= scale;
            }
        }
        let z = [0.2, -0.4, 0.1];
        let mut rng = seeds::rng(6);
        for _ in 0..100 {
            let x = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let dir = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                .normalized()
                .unwrap();
            let d = (m.forward(&z, x + dir * 1e-6).unwrap() - m.forward(&z, x).unwrap()).abs();
            assert!(d <= lip * 1e-6 * (1.0 + 1e-6), "{d} > {}", lip * 1e-6);
        }
    }
}
