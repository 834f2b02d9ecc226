use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::metrics::Histogram;
use crate::neural::LatentTable;
use crate::{seeds, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalStats {
    pub dim: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Sample skewness `m3 / m2^1.5`; zero for a constant column.
    pub skewness: f64,
    pub histogram: Histogram,
}

pub fn column_stats(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let var = if values.len() > 1 { m2 * n / (n - 1.0) } else { 0.0 };
    let skew = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    (mean, var, skew)
}

/// Mean, variance, skewness and histogram of each requested dimension.
pub fn marginal_stats(codes: &LatentTable, dims: &[usize], bins: usize) -> Result<Vec<MarginalStats>> {
    if codes.is_empty() {
        return Err(Error::Empty("latent table"));
    }
    dims.iter()
        .map(|&d| {
            if d >= codes.dim() {
                return Err(Error::Invalid(format!("dimension {d} out of range for {}", codes.dim())));
            }
            let col = codes.codes.column(d).to_vec();
            let (mean, variance, skewness) = column_stats(&col);
            Ok(MarginalStats { dim: d, mean, variance, skewness, histogram: Histogram::new(&col, bins)? })
        })
        .collect()
}

/// Independent normal per latent dimension, widened by `temperature`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagonalGaussian {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub temperature: f64,
}

impl DiagonalGaussian {
    /// Per-dimension mean and unbiased standard deviation of `codes`.
    pub fn fit(codes: &LatentTable, temperature: f64) -> Result<Self> {
        if codes.is_empty() {
            return Err(Error::Empty("latent table"));
        }
        let (mut mu, mut sigma) = (Vec::new(), Vec::new());
        for d in 0..codes.dim() {
            let (m, v, _) = column_stats(&codes.codes.column(d).to_vec());
            mu.push(m);
            sigma.push(v.sqrt());
        }
        let g = Self { mu, sigma, temperature };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu.len() != self.sigma.len() {
            return Err(Error::DimensionMismatch { expected: self.mu.len(), got: self.sigma.len() });
        }
        if !(self.temperature > 0.0) || self.sigma.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Invalid("temperature must be positive and every sigma non-negative".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `n` codes, one per row: `mu_d + temperature * sigma_d * eps_d`.
    pub fn sample_codes(&self, n: usize, seed: u64) -> Result<Array2<f64>> {
        self.validate()?;
        if n == 0 {
            return Err(Error::Invalid("sample count must be positive".into()));
        }
        let mut rng = seeds::rng(seeds::derive(seed, "latent-sample", 0));
        Ok(Array2::from_shape_fn((n, self.dim()), |(_, d)| {
            let eps: f64 = StandardNormal.sample(&mut rng);
            self.mu[d] + self.temperature * self.sigma[d] * eps
        }))
    }
}

/// Ranks starting at 1, with tied values sharing their average rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Spearman rank correlation; zero when either input is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "rank correlation needs paired samples");
    pearson(&ranks(a), &ranks(b))
}
