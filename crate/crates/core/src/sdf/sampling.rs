use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SignedField;
use crate::geom::{Aabb, PointCloud, Vec3};
use crate::{seeds, Error, Result};

/// Half-width of the cube every training query must stay inside.
pub const GUARD_HALF_WIDTH: f64 = 1.05;

const CHUNK: usize = 2048;
const MAX_ATTEMPTS_PER_SAMPLE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdfSample {
    pub x: Vec3,
    pub s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelConfig {
    pub n: usize,
    pub delta: f64,
    pub band_fraction: f64,
    pub tol_sign: f64,
    pub tol_surf: f64,
    /// Standard deviation of the Gaussian band perturbation; `delta / 2` when absent.
    #[serde(default)]
    pub noise_sigma: Option<f64>,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            n: 20_000,
            delta: 0.1,
            band_fraction: 0.5,
            tol_sign: 0.0,
            tol_surf: 1e-3,
            noise_sigma: None,
        }
    }
}

impl LabelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Invalid("sample count must be positive".into()));
        }
        if !(self.delta > 0.0) {
            return Err(Error::Invalid(format!("delta must be positive, got {}", self.delta)));
        }
        if !(0.0..=1.0).contains(&self.band_fraction) {
            return Err(Error::Invalid(format!("band fraction {} outside [0, 1]", self.band_fraction)));
        }
        if !(self.tol_surf >= 0.0) {
            return Err(Error::Invalid("tol_surf must be non-negative".into()));
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        self.noise_sigma.unwrap_or(self.delta / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdfSampleSet {
    pub design_id: String,
    pub samples: Vec<SdfSample>,
    pub delta: f64,
    pub band_fraction: f64,
    pub tol_sign: f64,
    pub tol_surf: f64,
    pub seed: u64,
}

impl SdfSampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn band_count(&self) -> usize {
        self.samples.iter().filter(|s| s.s.abs() < self.delta).count()
    }
}

fn chunk_sizes(total: usize) -> Vec<usize> {
    (0..total.div_ceil(CHUNK)).map(|c| CHUNK.min(total - c * CHUNK)).collect()
}

/// Draws `cfg.n` labelled queries: a `band_fraction` share perturbed off the
/// surface subset and kept only when inside the clamp band, the rest uniform
/// in the cloud box inflated by `delta` (clipped to the guard cube).
pub fn generate_samples(design_id: &str, field: &SignedField, cfg: &LabelConfig, seed: u64) -> Result<SdfSampleSet> {
    cfg.validate()?;
    let delta = cfg.delta;
    let n_band = (cfg.band_fraction * cfg.n as f64).round() as usize;
    let n_uniform = cfg.n - n_band;
    let guard = Aabb::cube(GUARD_HALF_WIDTH);
    let noise = Normal::new(0.0, cfg.sigma()).map_err(|e| Error::Invalid(e.to_string()))?;
    let surf = field.surface_points();

    let band: Vec<Vec<SdfSample>> = chunk_sizes(n_band)
        .into_par_iter()
        .enumerate()
        .map(|(c, want)| {
            let mut rng = seeds::rng(seeds::derive(seed, "band", c as u64));
            let mut out = Vec::with_capacity(want);
            let budget = MAX_ATTEMPTS_PER_SAMPLE * want;
            let mut attempts = 0;
            while out.len() < want {
                if attempts >= budget {
                    return Err(Error::BandSamplingStalled {
                        attempts,
                        accepted: out.len(),
                        wanted: want,
                    });
                }
                attempts += 1;
                let q = surf[rng.random_range(0..surf.len())];
                let x = q + Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
                if !guard.contains(x) {
                    continue;
                }
                let s = field.signed_distance(x);
                if s.abs() < delta {
                    out.push(SdfSample { x, s });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let domain = field
        .bounds
        .inflate(delta)
        .intersect(&guard)
        .ok_or_else(|| Error::Invalid("cloud box lies outside the guard cube".into()))?;
    let uniform: Vec<Vec<SdfSample>> = chunk_sizes(n_uniform)
        .into_par_iter()
        .enumerate()
        .map(|(c, want)| {
            let mut rng = seeds::rng(seeds::derive(seed, "uniform", c as u64));
            (0..want)
                .map(|_| {
                    let x = Vec3::new(
                        rng.random_range(domain.min.x..=domain.max.x),
                        rng.random_range(domain.min.y..=domain.max.y),
                        rng.random_range(domain.min.z..=domain.max.z),
                    );
                    SdfSample { x, s: field.evaluate(x, delta) }
                })
                .collect()
        })
        .collect();

    let samples: Vec<SdfSample> = band.into_iter().chain(uniform).flatten().collect();
    Ok(SdfSampleSet {
        design_id: design_id.to_string(),
        samples,
        delta,
        band_fraction: cfg.band_fraction,
        tol_sign: cfg.tol_sign,
        tol_surf: cfg.tol_surf,
        seed,
    })
}

/// Builds the field for an already normalized cloud and samples it.
pub fn label_cloud(cloud: &PointCloud, cfg: &LabelConfig, seed: u64) -> Result<SdfSampleSet> {
    cfg.validate()?;
    let field = SignedField::build(cloud, cfg.tol_sign, cfg.tol_surf)?;
    generate_samples(&cloud.design_id, &field, cfg, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blade::{synthesize_cloud, BladeParams};
    use crate::sdf::field::tests::sphere_points;

    fn blade_field() -> (PointCloud, SignedField) {
        let raw = synthesize_cloud("b", &BladeParams::sample(21), 5000, 5000).unwrap();
        let (cloud, _) = raw.normalize_to_unit_cube().unwrap();
        let field = SignedField::build(&cloud, 0.0, 1e-3).unwrap();
        (cloud, field)
    }

    #[test]
    fn band_share_and_clamp() {
        let (_, field) = blade_field();
        let cfg = LabelConfig::default();
        let set = generate_samples("b", &field, &cfg, 1).unwrap();
        assert_eq!(set.len(), 20_000);
        assert!(set.band_count() >= 9500, "{}", set.band_count());
        assert!(set.samples.iter().all(|s| s.s.abs() <= cfg.delta));
        assert!(set.samples.iter().all(|s| s.x.abs().max_element() <= GUARD_HALF_WIDTH));
        let band = &set.samples[..10_000];
        let neg = band.iter().filter(|s| s.s < 0.0).count() as f64 / band.len() as f64;
        assert!((0.3..=0.7).contains(&neg), "negative share {neg}");
    }

    #[test]
    fn zero_band_is_all_uniform() {
        let (cloud, field) = blade_field();
        let cfg = LabelConfig { n: 3000, band_fraction: 0.0, ..LabelConfig::default() };
        let set = generate_samples("b", &field, &cfg, 2).unwrap();
        let bb = cloud.aabb().unwrap().inflate(0.1);
        assert!(set.samples.iter().all(|s| bb.contains(s.x)));
        // Uniform draws land mostly away from the surface of a slender blade.
        assert!(set.band_count() < 3000);
    }

    #[test]
    fn deterministic_per_seed() {
        let (_, field) = blade_field();
        let cfg = LabelConfig { n: 5000, ..LabelConfig::default() };
        let a = generate_samples("b", &field, &cfg, 9).unwrap();
        let b = generate_samples("b", &field, &cfg, 9).unwrap();
        let c = generate_samples("b", &field, &cfg, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn impossible_band_stalls() {
        let cloud = PointCloud::new("s", sphere_points(500, 1.0)).unwrap();
        let field = SignedField::build(&cloud, 0.0, 1e-3).unwrap();
        let cfg = LabelConfig { n: 100, band_fraction: 1.0, noise_sigma: Some(50.0), ..LabelConfig::default() };
        assert!(matches!(
            generate_samples("s", &field, &cfg, 0),
            Err(Error::BandSamplingStalled { .. })
        ));
    }

    #[test]
    fn bad_configs_rejected() {
        let (_, field) = blade_field();
        for cfg in [
            LabelConfig { n: 0, ..LabelConfig::default() },
            LabelConfig { delta: 0.0, ..LabelConfig::default() },
            LabelConfig { band_fraction: 1.5, ..LabelConfig::default() },
        ] {
            assert!(generate_samples("b", &field, &cfg, 0).is_err());
        }
    }
}
