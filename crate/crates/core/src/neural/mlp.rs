//! Fully connected network with optional batch normalization and dropout on
//! every hidden layer, and hand-written reverse-mode gradients.
//!
//! All trainable parameters live in one flat vector so that optimizers and
//! checkpoints can treat them uniformly. Hidden layer `l` computes
//! `dropout(relu(bn(h W^T + b)))`; the final layer is affine only.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, NdFloat};
use rand::Rng;
use rand_distr::{Bernoulli, Distribution};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub batch_norm: bool,
    pub dropout: f64,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.output == 0 || self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::Invalid("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input];
        dims.extend(&self.hidden);
        dims.push(self.output);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Offsets of one affine layer (and its normalization) in the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSlots {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight: usize,
    pub bias: usize,
    /// `gamma` then `beta`, each `fan_out` long.
    pub norm: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    pub spec: MlpSpec,
    pub layers: Vec<LayerSlots>,
    pub params: Array1<F>,
    /// Per normalized layer: running mean then running variance.
    pub running: Vec<(Array1<F>, Array1<F>)>,
}

/// Pre-ReLU values of an inference pass.
#[derive(Debug, Clone)]
pub struct EvalTrace<F> {
    pre_relu: Vec<Array2<F>>,
}

impl<F> Default for EvalTrace<F> {
    fn default() -> Self {
        Self { pre_relu: Vec::new() }
    }
}

/// Intermediate values of a training-mode pass, needed by `backward`.
#[derive(Debug, Clone)]
pub struct Cache<F> {
    inputs: Vec<Array2<F>>,
    xhat: Vec<Array2<F>>,
    inv_std: Vec<Array1<F>>,
    pre_relu: Vec<Array2<F>>,
    masks: Vec<Option<Array2<F>>>,
    batch_mean: Vec<Array1<F>>,
    batch_var: Vec<Array1<F>>,
}

#[inline]
fn c<F: NdFloat>(v: f64) -> F {
    F::from(v).unwrap()
}

impl<F: NdFloat> Mlp<F> {
    /// Weights and biases uniform in `+-1/sqrt(fan_in)`, unit scale, zero shift.
    pub fn new(spec: MlpSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::new();
        let mut n = 0;
        let widths = spec.widths();
        let last = widths.len() - 1;
        for (l, &(fan_in, fan_out)) in widths.iter().enumerate() {
            let weight = n;
            let bias = weight + fan_in * fan_out;
            n = bias + fan_out;
            let norm = (spec.batch_norm && l < last).then(|| {
                let at = n;
                n += 2 * fan_out;
                at
            });
            layers.push(LayerSlots { fan_in, fan_out, weight, bias, norm });
        }
        let mut params = Array1::zeros(n);
        let mut running = Vec::new();
        for ls in &layers {
            let bound = 1.0 / (ls.fan_in as f64).sqrt();
            for v in params.slice_mut(s![ls.weight..ls.bias + ls.fan_out]).iter_mut() {
                *v = c(rng.random_range(-bound..bound));
            }
            if let Some(at) = ls.norm {
                params.slice_mut(s![at..at + ls.fan_out]).fill(F::one());
                running.push((Array1::zeros(ls.fan_out), Array1::ones(ls.fan_out)));
            }
        }
        Ok(Self { spec, layers, params, running })
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn weight(&self, l: usize) -> ArrayView2<'_, F> {
        let ls = self.layers[l];
        self.params
            .slice(s![ls.weight..ls.bias])
            .into_shape_with_order((ls.fan_out, ls.fan_in))
            .unwrap()
    }

    pub fn weight_mut(&mut self, l: usize) -> ArrayViewMut2<'_, F> {
        let ls = self.layers[l];
        self.params
            .slice_mut(s![ls.weight..ls.bias])
            .into_shape_with_order((ls.fan_out, ls.fan_in))
            .unwrap()
    }

    pub fn bias(&self, l: usize) -> ArrayView1<'_, F> {
        let ls = self.layers[l];
        self.params.slice(s![ls.bias..ls.bias + ls.fan_out])
    }

    pub fn bias_mut(&mut self, l: usize) -> ArrayViewMut1<'_, F> {
        let ls = self.layers[l];
        self.params.slice_mut(s![ls.bias..ls.bias + ls.fan_out])
    }

    fn gamma_beta(&self, l: usize) -> Option<(ArrayView1<'_, F>, ArrayView1<'_, F>)> {
        let ls = self.layers[l];
        ls.norm.map(|at| {
            (
                self.params.slice(s![at..at + ls.fan_out]),
                self.params.slice(s![at + ls.fan_out..at + 2 * ls.fan_out]),
            )
        })
    }

    pub fn affine(&self, l: usize, h: &ArrayView2<F>) -> Array2<F> {
        let bias = self.bias(l);
        let mut a = bias.broadcast((h.nrows(), bias.len())).unwrap().to_owned();
        general_mat_mul(F::one(), h, &self.weight(l).t(), F::one(), &mut a);
        a
    }

    fn check_input(&self, x: &ArrayView2<F>) -> Result<()> {
        if x.ncols() != self.spec.input {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input,
                got: x.ncols(),
            });
        }
        Ok(())
    }

    /// Inference pass: normalization uses running statistics, no dropout.
    pub fn forward_eval(&self, x: ArrayView2<F>) -> Result<Array2<F>> {
        self.check_input(&x)?;
        Ok(self.forward_eval_from(self.affine(0, &x), None))
    }

    /// Eval-mode scale and shift that batch normalization reduces to.
    fn eval_norm(&self, l: usize, norm_idx: usize) -> Option<(Array1<F>, Array1<F>)> {
        self.gamma_beta(l).map(|(gamma, beta)| {
            let (mean, var) = &self.running[norm_idx];
            let scale = Array1::from_shape_fn(gamma.len(), |j| gamma[j] / (var[j] + c(BN_EPS)).sqrt());
            let shift = Array1::from_shape_fn(gamma.len(), |j| beta[j] - mean[j] * scale[j]);
            (scale, shift)
        })
    }

    /// Continues an inference pass from the output `a0` of the first affine
    /// layer, which callers may have computed more cheaply themselves. When
    /// `trace` is given it receives what [`Self::backward_eval_to_first`] needs.
    pub fn forward_eval_from(&self, a0: Array2<F>, mut trace: Option<&mut EvalTrace<F>>) -> Array2<F> {
        let last = self.layers.len() - 1;
        let mut a = a0;
        let mut norm_idx = 0;
        if let Some(t) = trace.as_deref_mut() {
            t.pre_relu.clear();
        }
        for l in 0..last {
            if let Some((scale, shift)) = self.eval_norm(l, norm_idx) {
                norm_idx += 1;
                a *= &scale;
                a += &shift;
            }
            if let Some(t) = trace.as_deref_mut() {
                t.pre_relu.push(a.clone());
            }
            a.mapv_inplace(|v| v.max(F::zero()));
            a = self.affine(l + 1, &a.view());
        }
        a
    }

    /// `dL/da0` for an inference pass, where `a0` is the first affine
    /// layer's output. Normalization statistics are constants here.
    pub fn backward_eval_to_first(&self, trace: &EvalTrace<F>, d_out: ArrayView2<F>) -> Array2<F> {
        let last = self.layers.len() - 1;
        let mut norm_idx = self.running.len();
        let mut dh = d_out.to_owned();
        for l in (0..last).rev() {
            let mut da = Array2::zeros((dh.nrows(), self.layers[l + 1].fan_in));
            general_mat_mul(F::one(), &dh, &self.weight(l + 1), F::zero(), &mut da);
            da.zip_mut_with(&trace.pre_relu[l], |d, &y| {
                if y <= F::zero() {
                    *d = F::zero();
                }
            });
            if self.layers[l].norm.is_some() {
                norm_idx -= 1;
                let (scale, _) = self.eval_norm(l, norm_idx).unwrap();
                da *= &scale;
            }
            dh = da;
        }
        dh
    }

    /// Training pass with batch statistics. `masks[l]`, when present, holds
    /// the already rescaled dropout multipliers for hidden layer `l`.
    pub fn forward_train(&self, x: ArrayView2<F>, masks: &[Option<Array2<F>>]) -> Result<(Array2<F>, Cache<F>)> {
        self.check_input(&x)?;
        let last = self.layers.len() - 1;
        let b = x.nrows();
        let mut cache = Cache {
            inputs: Vec::with_capacity(last + 1),
            xhat: Vec::new(),
            inv_std: Vec::new(),
            pre_relu: Vec::new(),
            masks: Vec::new(),
            batch_mean: Vec::new(),
            batch_var: Vec::new(),
        };
        let mut h = x.to_owned();
        for l in 0..=last {
            let mut a = self.affine(l, &h.view());
            cache.inputs.push(h);
            if l == last {
                return Ok((a, cache));
            }
            if let Some((gamma, beta)) = self.gamma_beta(l) {
                let inv_b: F = c(1.0 / b as f64);
                let mean = a.sum_axis(Axis(0)) * inv_b;
                a -= &mean;
                let var = a.map(|v| *v * *v).sum_axis(Axis(0)) * inv_b;
                let inv_std = var.mapv(|v| F::one() / (v + c(BN_EPS)).sqrt());
                a *= &inv_std;
                let bessel = if b > 1 { c::<F>(b as f64 / (b - 1) as f64) } else { F::one() };
                cache.batch_mean.push(mean);
                cache.batch_var.push(var.mapv(|v| v * bessel));
                cache.inv_std.push(inv_std);
                cache.xhat.push(a.clone());
                a *= &gamma;
                a += &beta;
            }
            cache.pre_relu.push(a.clone());
            a.mapv_inplace(|v| v.max(F::zero()));
            let mask = masks.get(l).cloned().flatten();
            if let Some(m) = &mask {
                a *= m;
            }
            cache.masks.push(mask);
            h = a;
        }
        unreachable!()
    }

    /// Replaces the running statistics by the average batch statistics of
    /// dropout-free training passes over `batches`. Dropout inflates the
    /// variance seen by later normalization layers, so statistics gathered
    /// while it was active do not match inference.
    pub fn recalibrate_norm(&mut self, batches: impl IntoIterator<Item = Array2<F>>) -> Result<()> {
        let mut sums: Vec<(Array1<F>, Array1<F>)> =
            self.running.iter().map(|(m, v)| (Array1::zeros(m.len()), Array1::zeros(v.len()))).collect();
        let mut n = 0usize;
        for x in batches {
            if x.nrows() < 2 {
                continue;
            }
            let (_, cache) = self.forward_train(x.view(), &[])?;
            for ((sm, sv), (bm, bv)) in sums.iter_mut().zip(cache.batch_mean.iter().zip(&cache.batch_var)) {
                *sm += bm;
                *sv += bv;
            }
            n += 1;
        }
        if n > 0 {
            let inv: F = c(1.0 / n as f64);
            for ((m, v), (sm, sv)) in self.running.iter_mut().zip(sums) {
                *m = sm * inv;
                *v = sv * inv;
            }
        }
        Ok(())
    }

    /// Folds the batch statistics of a training pass into the running ones.
    pub fn update_running(&mut self, cache: &Cache<F>) {
        let m: F = c(BN_MOMENTUM);
        for ((mean, var), (bm, bv)) in self.running.iter_mut().zip(cache.batch_mean.iter().zip(&cache.batch_var)) {
            mean.zip_mut_with(bm, |r, &v| *r = (F::one() - m) * *r + m * v);
            var.zip_mut_with(bv, |r, &v| *r = (F::one() - m) * *r + m * v);
        }
    }

    /// Gradients of a scalar loss given `d_out = dL/d(output)`. Returns the
    /// parameter gradient (flat, same layout as `params`) and `dL/dx`.
    pub fn backward(&self, cache: &Cache<F>, d_out: ArrayView2<F>) -> (Array1<F>, Array2<F>) {
        let mut grad = Array1::zeros(self.params.len());
        let last = self.layers.len() - 1;
        let mut dh = d_out.to_owned();
        let mut norm_idx = cache.xhat.len();
        for l in (0..=last).rev() {
            let ls = self.layers[l];
            let mut da = dh;
            if l < last {
                if let Some(m) = &cache.masks[l] {
                    da *= m;
                }
                da.zip_mut_with(&cache.pre_relu[l], |d, &y| {
                    if y <= F::zero() {
                        *d = F::zero();
                    }
                });
                if let Some((gamma, _)) = self.gamma_beta(l) {
                    norm_idx -= 1;
                    let xhat = &cache.xhat[norm_idx];
                    let at = ls.norm.unwrap();
                    let dgamma = (&da * xhat).sum_axis(Axis(0));
                    let dbeta = da.sum_axis(Axis(0));
                    grad.slice_mut(s![at..at + ls.fan_out]).assign(&dgamma);
                    grad.slice_mut(s![at + ls.fan_out..at + 2 * ls.fan_out]).assign(&dbeta);
                    // d a = inv_std / B * (B dxhat - sum dxhat - xhat sum(dxhat xhat))
                    let nb: F = c(da.nrows() as f64);
                    let inv_std = &cache.inv_std[norm_idx];
                    let k1 = Array1::from_shape_fn(ls.fan_out, |j| dbeta[j] * gamma[j] / nb);
                    let k2 = Array1::from_shape_fn(ls.fan_out, |j| dgamma[j] * gamma[j] / nb);
                    ndarray::Zip::from(da.rows_mut()).and(xhat.rows()).for_each(|mut row, xr| {
                        for j in 0..row.len() {
                            row[j] = inv_std[j] * (row[j] * gamma[j] - k1[j] - xr[j] * k2[j]);
                        }
                    });
                }
            }
            let input = &cache.inputs[l];
            let mut gw = grad
                .slice_mut(s![ls.weight..ls.bias])
                .into_shape_with_order((ls.fan_out, ls.fan_in))
                .unwrap();
            general_mat_mul(F::one(), &da.t(), input, F::zero(), &mut gw);
            grad.slice_mut(s![ls.bias..ls.bias + ls.fan_out]).assign(&da.sum_axis(Axis(0)));
            let mut next = Array2::zeros((da.nrows(), ls.fan_in));
            general_mat_mul(F::one(), &da, &self.weight(l), F::zero(), &mut next);
            dh = next;
        }
        (grad, dh)
    }

    /// Rescaled Bernoulli keep-masks for every hidden layer, or all `None`
    /// when dropout is off.
    pub fn sample_masks(&self, batch: usize, rng: &mut impl Rng) -> Vec<Option<Array2<F>>> {
        let p = self.spec.dropout;
        self.spec
            .hidden
            .iter()
            .map(|&w| {
                (p > 0.0).then(|| {
                    let keep = Bernoulli::new(1.0 - p).unwrap();
                    let scale: F = c(1.0 / (1.0 - p));
                    Array2::from_shape_fn((batch, w), |_| if keep.sample(rng) { scale } else { F::zero() })
                })
            })
            .collect()
    }

    /// Smallest `|pre-activation|` seen by any ReLU in a training pass.
    pub fn min_abs_preactivation(cache: &Cache<F>) -> F {
        cache
            .pre_relu
            .iter()
            .flat_map(|a| a.iter())
            .fold(F::infinity(), |m, v| m.min(v.abs()))
    }

    /// Converts every parameter and statistic to another float type.
    pub fn cast<G: NdFloat>(&self) -> Mlp<G> {
        let conv = |a: &Array1<F>| a.mapv(|v| G::from(v).unwrap());
        Mlp {
            spec: self.spec.clone(),
            layers: self.layers.clone(),
            params: conv(&self.params),
            running: self.running.iter().map(|(m, v)| (conv(m), conv(v))).collect(),
        }
    }
}
