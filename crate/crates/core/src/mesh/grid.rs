use rayon::prelude::*;

use crate::geom::Vec3;
use crate::{Error, Result};

/// Samples of a scalar field on the lattice `R x R x R` spanning the cube
/// `[-h, h]^3`, endpoints included. `x` varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    pub res: usize,
    pub half_width: f64,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(res: usize, half_width: f64, values: Vec<f64>) -> Result<Self> {
        if res < 2 {
            return Err(Error::Invalid(format!("grid resolution must be at least 2, got {res}")));
        }
        if !(half_width > 0.0) {
            return Err(Error::Invalid("grid half width must be positive".into()));
        }
        if values.len() != res * res * res {
            return Err(Error::DimensionMismatch {
                expected: res * res * res,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("grid holds non-finite values".into()));
        }
        Ok(Self { res, half_width, values })
    }

    /// Evaluates `f` at every lattice point.
    pub fn from_fn(res: usize, half_width: f64, f: impl Fn(Vec3) -> f64 + Sync) -> Result<Self> {
        Self::from_slab_fn(res, half_width, |pts| pts.iter().map(|&p| f(p)).collect())
    }

    /// Evaluates `f` one `z` slab at a time, for fields that prefer batches.
    pub fn from_slab_fn(res: usize, half_width: f64, f: impl Fn(&[Vec3]) -> Vec<f64> + Sync) -> Result<Self> {
        if res < 2 {
            return Err(Error::Invalid(format!("grid resolution must be at least 2, got {res}")));
        }
        let probe = Self { res, half_width, values: Vec::new() };
        let slabs: Vec<Vec<f64>> = (0..res)
            .into_par_iter()
            .map(|k| {
                let pts: Vec<Vec3> = (0..res * res).map(|ij| probe.point(ij % res, ij / res, k)).collect();
                f(&pts)
            })
            .collect();
        Self::new(res, half_width, slabs.concat())
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.res - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(self.coord(i), self.coord(j), self.coord(k))
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.res * (j + self.res * k)
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    /// Raises every value on the outer faces of the lattice to at least
    /// `floor`, returning how many changed. With `floor > 0` this clips the
    /// enclosed region to the grid, so the extracted isosurface is closed.
    pub fn close_boundary(&mut self, floor: f64) -> usize {
        let n = self.res - 1;
        let mut changed = 0;
        for k in 0..self.res {
            for j in 0..self.res {
                for i in 0..self.res {
                    if i == 0 || j == 0 || k == 0 || i == n || j == n || k == n {
                        let idx = self.index(i, j, k);
                        if self.values[idx] < floor {
                            self.values[idx] = floor;
                            changed += 1;
                        }
                    }
                }
            }
        }
        changed
    }

    pub fn value_range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Trilinear interpolation, clamped to the lattice.
    pub fn trilinear(&self, p: Vec3) -> f64 {
        let h = self.spacing();
        let n = self.res - 1;
        let split = |c: f64| {
            let u = ((c + self.half_width) / h).clamp(0.0, n as f64);
            let i = (u.floor() as usize).min(n - 1);
            (i, u - i as f64)
        };
        let (i, fx) = split(p.x);
        let (j, fy) = split(p.y);
        let (k, fz) = split(p.z);
        let mut acc = 0.0;
        for c in 0..8 {
            let (dx, dy, dz) = (c & 1, (c >> 1) & 1, c >> 2);
            let w = (if dx == 1 { fx } else { 1.0 - fx })
                * (if dy == 1 { fy } else { 1.0 - fy })
                * (if dz == 1 { fz } else { 1.0 - fz });
            acc += w * self.value(i + dx, j + dy, k + dz);
        }
        acc
    }

    /// Raw little-endian `f32` dump of the values, `x` fastest.
    pub fn to_f32_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_sphere_center() {
        let g = ScalarGrid::from_fn(65, 1.0, |p| p.norm() - 0.5).unwrap();
        assert_eq!(g.value(32, 32, 32), -0.5);
        assert_eq!(g.point(0, 0, 0), Vec3::splat(-1.0));
        assert_eq!(g.point(64, 64, 64), Vec3::splat(1.0));
    }

    #[test]
    fn two_point_grid_has_eight_corners() {
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let g = ScalarGrid::from_fn(2, 1.0, |p| {
            calls.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            p.x + p.y + p.z
        })
        .unwrap();
        assert_eq!(calls.into_inner(), 8);
        assert_eq!(g.value(1, 1, 1), 3.0);
    }

    #[test]
    fn trilinear_reproduces_affine_fields() {
        let g = ScalarGrid::from_fn(9, 1.3, |p| 2.0 * p.x - p.y + 0.5 * p.z + 0.1).unwrap();
        for p in [Vec3::new(0.13, -0.71, 0.4), Vec3::new(1.3, 1.3, -1.3), Vec3::ZERO] {
            assert!((g.trilinear(p) - (2.0 * p.x - p.y + 0.5 * p.z + 0.1)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ScalarGrid::new(1, 1.0, vec![0.0]).is_err());
        assert!(ScalarGrid::new(2, 1.0, vec![0.0; 7]).is_err());
        assert!(ScalarGrid::new(2, 1.0, vec![f64::NAN; 8]).is_err());
    }
}
