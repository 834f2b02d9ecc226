use serde::{Deserialize, Serialize};

use crate::neural::LatentTable;
use crate::{Error, Result};

/// Per-dimension normalizer of the root-mean-squared error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NrmseScale {
    /// max - min of the truth column.
    #[default]
    Range,
    /// Population standard deviation of the truth column.
    Std,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NrmseReport {
    pub scale: NrmseScale,
    /// Percent error per dimension; `None` where the truth column is constant.
    pub per_dim: Vec<Option<f64>>,
    /// Mean over the defined dimensions.
    pub mean: f64,
}

impl NrmseReport {
    pub fn undefined_dims(&self) -> Vec<usize> {
        self.per_dim.iter().enumerate().filter(|(_, v)| v.is_none()).map(|(d, _)| d).collect()
    }
}

/// Normalized RMSE of `pred` against `truth`, matched by design id.
pub fn nrmse_per_dim(truth: &LatentTable, pred: &LatentTable, scale: NrmseScale) -> Result<NrmseReport> {
    if truth.is_empty() {
        return Err(Error::Empty("truth table"));
    }
    if truth.len() != pred.len() {
        return Err(Error::Invalid(format!(
            "truth has {} designs, prediction has {}",
            truth.len(),
            pred.len()
        )));
    }
    if truth.dim() != pred.dim() {
        return Err(Error::DimensionMismatch { expected: truth.dim(), got: pred.dim() });
    }
    let pred = pred.select(&truth.design_ids)?;
    let n = truth.len() as f64;
    let per_dim: Vec<Option<f64>> = (0..truth.dim())
        .map(|d| {
            let t = truth.codes.column(d);
            let p = pred.codes.column(d);
            let rmse = (t.iter().zip(p.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n).sqrt();
            let norm = match scale {
                NrmseScale::Range => {
                    t.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - t.iter().cloned().fold(f64::INFINITY, f64::min)
                }
                NrmseScale::Std => {
                    let m = t.sum() / n;
                    (t.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
                }
            };
            (norm > 0.0).then(|| 100.0 * rmse / norm)
        })
        .collect();
    let defined: Vec<f64> = per_dim.iter().flatten().copied().collect();
    if defined.len() < per_dim.len() {
        log::warn!("{} latent dimensions have zero spread and are left out of the mean", per_dim.len() - defined.len());
    }
    let mean = if defined.is_empty() { f64::NAN } else { defined.iter().sum::<f64>() / defined.len() as f64 };
    Ok(NrmseReport { scale, per_dim, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    fn table(codes: Array2<f64>) -> LatentTable {
        LatentTable::new((0..codes.nrows()).map(|i| format!("d{i}")).collect(), codes).unwrap()
    }

    #[test]
    fn identical_tables_give_zero() {
        let t = table(Array2::from_shape_fn((5, 3), |(i, j)| (i * 3 + j) as f64));
        let r = nrmse_per_dim(&t, &t, NrmseScale::Range).unwrap();
        assert!(r.per_dim.iter().all(|v| *v == Some(0.0)));
    }

    #[test]
    fn constant_offset_is_ten_percent() {
        let t = table(Array2::from_shape_fn((6, 4), |(i, j)| (i as f64) * (j as f64 + 1.0)));
        let mut p = t.clone();
        for j in 0..4 {
            let range = 5.0 * (j as f64 + 1.0);
            p.codes.column_mut(j).mapv_inplace(|v| v + 0.1 * range);
        }
        let r = nrmse_per_dim(&t, &p, NrmseScale::Range).unwrap();
        for v in &r.per_dim {
            assert!((v.unwrap() - 10.0).abs() < 1e-9);
        }
        assert!((r.mean - 10.0).abs() < 1e-9);
    }

    #[test]
    fn matches_a_hand_loop() {
        let mut rng = crate::seeds::rng(1);
        let t = table(Array2::from_shape_fn((10, 4), |_| rng.random_range(-1.0..1.0)));
        let p = table(Array2::from_shape_fn((10, 4), |_| rng.random_range(-1.0..1.0)));
        let r = nrmse_per_dim(&t, &p, NrmseScale::Std).unwrap();
        for d in 0..4 {
            let mut se = 0.0;
            let mut mean = 0.0;
            for i in 0..10 {
                se += (t.codes[[i, d]] - p.codes[[i, d]]).powi(2);
                mean += t.codes[[i, d]];
            }
            mean /= 10.0;
            let mut var = 0.0;
            for i in 0..10 {
                var += (t.codes[[i, d]] - mean).powi(2);
            }
            let want = 100.0 * (se / 10.0).sqrt() / (var / 10.0).sqrt();
            assert!((r.per_dim[d].unwrap() - want).abs() < 1e-10);
        }
    }

    #[test]
    fn rows_are_matched_by_id_and_flat_dims_are_undefined() {
        let t = LatentTable::new(vec!["a".into(), "b".into()], Array2::from_shape_vec((2, 2), vec![0.0, 1.0, 1.0, 1.0]).unwrap()).unwrap();
        let p = LatentTable::new(vec!["b".into(), "a".into()], Array2::from_shape_vec((2, 2), vec![1.0, 1.0, 0.0, 1.0]).unwrap()).unwrap();
        let r = nrmse_per_dim(&t, &p, NrmseScale::Range).unwrap();
        assert_eq!(r.per_dim, vec![Some(0.0), None]);
        assert_eq!(r.undefined_dims(), vec![1]);
        assert_eq!(r.mean, 0.0);
    }
}
