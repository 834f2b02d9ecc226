use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seeds;

/// Blade height in model units before normalization.
pub const BLADE_HEIGHT: f64 = 7.0;

/// Inclusive sampling bounds for one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

pub const BLD_RANGE: Range = Range::new(0.5, 2.0);
pub const BSD_RANGE: Range = Range::new(0.2, 1.0);
pub const BCD_RANGE: Range = Range::new(2.0, 4.0);
pub const BOTTOM_BLEND_RANGE: Range = Range::new(5.0, 70.0);
pub const RATIO_RANGE: Range = Range::new(0.2, 0.8);
pub const TOP_BLEND_RANGE: Range = Range::new(2.0, 50.0);

/// Parametric description of one blade.
///
/// The bottom section is given directly (large diameter, small diameter,
/// centre distance); the top section scales those by `k1`, `k2`, `k3`.
/// Blend radii are carried as metadata only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BladeParams {
    pub bld: f64,
    pub bsd: f64,
    pub bcd: f64,
    pub bbr: f64,
    pub btr: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub lr: f64,
    pub tr: f64,
    pub height: f64,
    pub seed: u64,
}

impl BladeParams {
    /// Independent uniform draws over the dataset ranges.
    pub fn sample(seed: u64) -> Self {
        let mut rng = seeds::rng(seed);
        let mut draw = |r: Range| rng.random_range(r.lo..=r.hi);
        Self {
            bld: draw(BLD_RANGE),
            bsd: draw(BSD_RANGE),
            bcd: draw(BCD_RANGE),
            bbr: draw(BOTTOM_BLEND_RANGE),
            btr: draw(BOTTOM_BLEND_RANGE),
            k1: draw(RATIO_RANGE),
            k2: draw(RATIO_RANGE),
            k3: draw(RATIO_RANGE),
            lr: draw(TOP_BLEND_RANGE),
            tr: draw(TOP_BLEND_RANGE),
            height: BLADE_HEIGHT,
            seed,
        }
    }

    /// Top large diameter `k1 * bld`.
    pub fn ld(&self) -> f64 {
        self.k1 * self.bld
    }

    /// Top small diameter `k2 * bsd`.
    pub fn sd(&self) -> f64 {
        self.k2 * self.bsd
    }

    /// Top centre distance `k3 * bcd`.
    pub fn cd(&self) -> f64 {
        self.k3 * self.bcd
    }

    pub fn in_dataset_bounds(&self) -> bool {
        BLD_RANGE.contains(self.bld)
            && BSD_RANGE.contains(self.bsd)
            && BCD_RANGE.contains(self.bcd)
            && BOTTOM_BLEND_RANGE.contains(self.bbr)
            && BOTTOM_BLEND_RANGE.contains(self.btr)
            && RATIO_RANGE.contains(self.k1)
            && RATIO_RANGE.contains(self.k2)
            && RATIO_RANGE.contains(self.k3)
            && TOP_BLEND_RANGE.contains(self.lr)
            && TOP_BLEND_RANGE.contains(self.tr)
            && self.ld() > 0.0
            && self.sd() > 0.0
            && self.cd() > 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(BladeParams::sample(42), BladeParams::sample(42));
        assert_ne!(BladeParams::sample(42), BladeParams::sample(43));
    }

    #[test]
    fn k1_draws_cover_the_range() {
        let (lo, hi) = (0..10_000u64)
            .map(|s| BladeParams::sample(seeds::derive(0, "t", s)).k1)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), k| (a.min(k), b.max(k)));
        assert!(lo >= 0.2 && hi <= 0.8);
        assert!((hi - lo) / 0.6 >= 0.95, "covered [{lo}, {hi}]");
    }

    proptest! {
        #[test]
        fn every_seed_is_in_bounds(seed in any::<u64>()) {
            let p = BladeParams::sample(seed);
            prop_assert!(p.in_dataset_bounds());
            prop_assert_eq!(p.height, BLADE_HEIGHT);
        }
    }
}
