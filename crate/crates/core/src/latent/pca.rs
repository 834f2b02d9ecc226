use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use super::spearman;
use crate::neural::LatentTable;
use crate::{Error, Result};

const META: &str = "pca.json";
const BLOB: &str = "pca_components.bin";

/// Principal axes of a set of latent codes.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub mean: Array1<f64>,
    /// One orthonormal component per row, by decreasing variance.
    pub components: Array2<f64>,
    pub explained_variance: Vec<f64>,
    /// Total variance of the fitted codes, the denominator of the shares.
    pub total_variance: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PcaMeta {
    dim: usize,
    n_components: usize,
    mean: Vec<f64>,
    explained_variance: Vec<f64>,
    total_variance: f64,
    blob: String,
}

impl PcaBasis {
    /// Fits on the rows of `codes`. At most `min(dim, n - 1)` components are
    /// kept; `max_components` lowers that further.
    pub fn fit(codes: &LatentTable, max_components: Option<usize>) -> Result<Self> {
        let n = codes.len();
        if n < 2 {
            return Err(Error::Invalid(format!("principal components need at least 2 designs, got {n}")));
        }
        let dim = codes.dim();
        let mean = codes.codes.mean_axis(Axis(0)).unwrap();
        let centered = &codes.codes - &mean;
        let cov = centered.t().dot(&centered) / (n - 1) as f64;
        let eig = SymmetricEigen::new(DMatrix::from_fn(dim, dim, |i, j| cov[[i, j]]));
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let keep = max_components.unwrap_or(dim).min(dim).min(n - 1);
        let mut components = Array2::zeros((keep, dim));
        let mut explained = Vec::with_capacity(keep);
        for (r, &c) in order.iter().take(keep).enumerate() {
            let v = eig.eigenvectors.column(c);
            let pivot = (0..dim).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap();
            let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
            for d in 0..dim {
                components[[r, d]] = sign * v[d];
            }
            explained.push(eig.eigenvalues[c].max(0.0));
        }
        Ok(Self { mean, components, explained_variance: explained, total_variance: cov.diag().sum() })
    }

    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn explained_ratio(&self) -> Vec<f64> {
        self.explained_variance.iter().map(|v| v / self.total_variance).collect()
    }

    /// Coordinates of every code along each component.
    pub fn project(&self, codes: &Array2<f64>) -> Array2<f64> {
        (codes - &self.mean).dot(&self.components.t())
    }

    pub fn reconstruct(&self, scores: &Array2<f64>) -> Array2<f64> {
        scores.dot(&self.components) + &self.mean
    }

    /// `mean + c * component[axis]` for each `c`.
    pub fn traverse(&self, axis: usize, coords: &[f64]) -> Result<Vec<Array1<f64>>> {
        if axis >= self.n_components() {
            return Err(Error::Invalid(format!(
                "axis {axis} out of range for {} components",
                self.n_components()
            )));
        }
        let dir = self.components.row(axis);
        Ok(coords.iter().map(|&c| &self.mean + &(&dir * c)).collect())
    }

    /// Component whose scores have the largest absolute rank correlation
    /// with `property` (one value per row of `codes`), with that correlation.
    pub fn best_aligned_axis(&self, codes: &Array2<f64>, property: &[f64]) -> Result<(usize, f64)> {
        if codes.nrows() != property.len() {
            return Err(Error::DimensionMismatch { expected: codes.nrows(), got: property.len() });
        }
        let scores = self.project(codes);
        let mut best = (0, 0.0f64);
        for a in 0..self.n_components() {
            let rho = spearman(&scores.column(a).to_vec(), property);
            if rho.abs() > best.1.abs() {
                best = (a, rho);
            }
        }
        Ok(best)
    }

    /// Writes `pca.json` and the component matrix as a little-endian `f32` blob.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let bytes: Vec<u8> = self.components.iter().flat_map(|v| (*v as f32).to_le_bytes()).collect();
        fs::write(dir.join(BLOB), bytes)?;
        let meta = PcaMeta {
            dim: self.dim(),
            n_components: self.n_components(),
            mean: self.mean.to_vec(),
            explained_variance: self.explained_variance.clone(),
            total_variance: self.total_variance,
            blob: BLOB.into(),
        };
        fs::write(dir.join(META), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join(META);
        let meta: PcaMeta =
            serde_json::from_str(&fs::read_to_string(&mpath)?).map_err(|e| Error::parse(&mpath, e.to_string()))?;
        let bpath = dir.join(&meta.blob);
        let bytes = fs::read(&bpath)?;
        if bytes.len() != 4 * meta.dim * meta.n_components || meta.mean.len() != meta.dim {
            return Err(Error::parse(&bpath, "component blob does not match the declared shape"));
        }
        let vals: Vec<f64> = bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect();
        Ok(Self {
            mean: Array1::from(meta.mean),
            components: Array2::from_shape_vec((meta.n_components, meta.dim), vals).unwrap(),
            explained_variance: meta.explained_variance,
            total_variance: meta.total_variance,
        })
    }
}

/// Component-wise `(1 - a) za + a zb` for each `a`.
pub fn interpolate(za: ArrayView1<f64>, zb: ArrayView1<f64>, alphas: &[f64]) -> Result<Vec<Array1<f64>>> {
    if za.len() != zb.len() {
        return Err(Error::DimensionMismatch { expected: za.len(), got: zb.len() });
    }
    Ok(alphas.iter().map(|&a| &za * (1.0 - a) + &zb * a).collect())
}

/// Convex combination of several anchor codes.
pub fn blend(anchors: &[ArrayView1<f64>], weights: &[f64]) -> Result<Array1<f64>> {
    if anchors.is_empty() || anchors.len() != weights.len() {
        return Err(Error::Invalid("need one weight per anchor and at least one anchor".into()));
    }
    if weights.iter().any(|&w| !(w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("blend weights {weights:?} must be non-negative and sum to 1")));
    }
    let dim = anchors[0].len();
    let mut z = Array1::zeros(dim);
    for (a, &w) in anchors.iter().zip(weights) {
        if a.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: a.len() });
        }
        z.scaled_add(w, a);
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, Array2};
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn table(codes: Array2<f64>) -> LatentTable {
        LatentTable::new((0..codes.nrows()).map(|i| format!("d{i}")).collect(), codes).unwrap()
    }

    fn gaussian(n: usize, dim: usize, seed: u64) -> Array2<f64> {
        let mut rng = crate::seeds::rng(seed);
        Array2::from_shape_fn((n, dim), |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn collinear_codes_have_one_axis() {
        let t = table(Array2::from_shape_fn((6, 2), |(i, j)| i as f64 * (j as f64 + 1.0)));
        let b = PcaBasis::fit(&t, None).unwrap();
        let s = 5f64.sqrt();
        assert!((b.components[[0, 0]] - 1.0 / s).abs() < 1e-12);
        assert!((b.components[[0, 1]] - 2.0 / s).abs() < 1e-12);
        assert!((b.explained_ratio()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn isotropic_cloud_has_even_shares() {
        let t = table(gaussian(10_000, 4, 1));
        let b = PcaBasis::fit(&t, None).unwrap();
        for r in b.explained_ratio() {
            assert!((r - 0.25).abs() < 0.02, "{r}");
        }
    }

    #[test]
    fn full_basis_reconstructs_and_decorrelates() {
        let mut codes = gaussian(50, 6, 2);
        codes.column_mut(1).mapv_inplace(|v| 3.0 * v);
        let t = table(codes.clone());
        let b = PcaBasis::fit(&t, None).unwrap();
        assert_eq!(b.n_components(), 6);
        let g = b.components.dot(&b.components.t());
        for i in 0..6 {
            for j in 0..6 {
                assert!((g[[i, j]] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8);
            }
        }
        let scores = b.project(&codes);
        let back = b.reconstruct(&scores);
        assert!(back.iter().zip(codes.iter()).all(|(a, c)| (a - c).abs() < 1e-8));
        let cov = scores.t().dot(&scores) / 49.0;
        let vmax = b.explained_variance[0];
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    assert!(cov[[i, j]].abs() <= 1e-6 * vmax);
                }
            }
        }
        assert!(b.explained_variance.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn few_designs_truncate() {
        let b = PcaBasis::fit(&table(gaussian(3, 8, 3)), Some(5)).unwrap();
        assert_eq!(b.n_components(), 2);
        assert!(PcaBasis::fit(&table(gaussian(1, 8, 3)), None).is_err());
    }

    #[test]
    fn signs_follow_the_largest_entry() {
        let b = PcaBasis::fit(&table(gaussian(40, 5, 4)), None).unwrap();
        for row in b.components.rows() {
            let big = row.iter().cloned().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap();
            assert!(big > 0.0);
        }
    }

    #[test]
    fn traversal_is_symmetric_about_the_mean() {
        let b = PcaBasis::fit(&table(gaussian(20, 3, 5)), None).unwrap();
        let z = b.traverse(1, &[-2.0, 0.0, 2.0]).unwrap();
        assert_eq!(z[1], b.mean);
        let mid = (&z[0] + &z[2]) / 2.0;
        assert!(mid.iter().zip(b.mean.iter()).all(|(a, m)| (a - m).abs() < 1e-12));
        assert!(b.traverse(3, &[0.0]).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let b = PcaBasis::fit(&table(gaussian(20, 3, 6)), None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        b.save(dir.path()).unwrap();
        let back = PcaBasis::load(dir.path()).unwrap();
        assert_eq!(back.mean, b.mean);
        assert!(back.components.iter().zip(b.components.iter()).all(|(x, y)| (x - y).abs() < 1e-6));
    }

    #[test]
    fn interpolation_endpoints_and_blend() {
        let za = arr1(&[0.0, 1.0, 2.0]);
        let zb = arr1(&[2.0, 3.0, -2.0]);
        let z = interpolate(za.view(), zb.view(), &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(z[0], za);
        assert_eq!(z[1], arr1(&[1.0, 2.0, 0.0]));
        assert_eq!(z[2], zb);
        let zc = arr1(&[1.0, -1.0, 3.0]);
        let third = 1.0 / 3.0;
        let c = blend(&[za.view(), zb.view(), zc.view()], &[third, third, third]).unwrap();
        let centroid = (&za + &zb + &zc) / 3.0;
        assert!(c.iter().zip(centroid.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(blend(&[za.view(), zb.view()], &[0.7, 0.4]).is_err());
        assert!(blend(&[za.view(), zb.view()], &[1.5, -0.5]).is_err());
    }

    proptest! {
        #[test]
        fn interpolation_commutes_with_affine_maps(
            a in prop::collection::vec(-5.0..5.0f64, 3),
            b in prop::collection::vec(-5.0..5.0f64, 3),
            m in prop::collection::vec(-2.0..2.0f64, 9),
            t in prop::collection::vec(-1.0..1.0f64, 3),
            alpha in -0.5..1.5f64,
        ) {
            let m = Array2::from_shape_vec((3, 3), m).unwrap();
            let t = Array1::from(t);
            let map = |z: &Array1<f64>| m.dot(z) + &t;
            let (za, zb) = (Array1::from(a), Array1::from(b));
            let lhs = map(&interpolate(za.view(), zb.view(), &[alpha]).unwrap()[0]);
            let rhs = interpolate(map(&za).view(), map(&zb).view(), &[alpha]).unwrap().remove(0);
            for (x, y) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
