use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Equal-width histogram; `edges` has one more entry than `counts`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub median: f64,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Result<Self> {
        if values.is_empty() || bins == 0 {
            return Err(Error::Empty("histogram input"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("histogram values must be finite".into()));
        }
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            hi = lo + 1.0;
        }
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Ok(Self { edges, counts, mean: values.iter().sum::<f64>() / values.len() as f64, median: median(values) })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_cover_every_value() {
        let h = Histogram::new(&[0.0, 0.1, 0.2, 0.9, 1.0], 4).unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), 5);
        assert_eq!(h.counts, vec![3, 0, 0, 2]);
        assert_eq!(h.edges.len(), 5);
        assert_eq!(h.median, 0.2);
    }

    #[test]
    fn constant_input_is_one_bin() {
        let h = Histogram::new(&[2.0; 3], 3).unwrap();
        assert_eq!(h.counts[0], 3);
    }
}
