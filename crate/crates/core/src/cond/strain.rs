use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::blade::BladeParams;
use crate::{seeds, Error, Result};

/// Maximum directional strains of one design (dimensionless).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrainTriplet {
    pub eps_x: f64,
    pub eps_y: f64,
    pub eps_z: f64,
}

impl StrainTriplet {
    pub fn new(eps_x: f64, eps_y: f64, eps_z: f64) -> Result<Self> {
        let s = Self { eps_x, eps_y, eps_z };
        if !s.to_array().iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid(format!("strain triplet {s:?} is not finite")));
        }
        Ok(s)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.eps_x, self.eps_y, self.eps_z]
    }

    pub fn from_array(a: [f64; 3]) -> Result<Self> {
        Self::new(a[0], a[1], a[2])
    }

    /// Parses `"ex,ey,ez"`.
    pub fn parse(text: &str) -> Result<Self> {
        let vals: Vec<f64> = text
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Invalid(format!("bad strain triplet {text:?}: {e}")))?;
        match vals[..] {
            [x, y, z] => Self::new(x, y, z),
            _ => Err(Error::Invalid(format!("strain triplet needs 3 values, got {}", vals.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainRecord {
    pub design_id: String,
    pub eps_x: f64,
    pub eps_y: f64,
    pub eps_z: f64,
}

impl StrainRecord {
    pub fn triplet(&self) -> Result<StrainTriplet> {
        StrainTriplet::new(self.eps_x, self.eps_y, self.eps_z)
    }
}

/// Reads a `design_id,eps_x,eps_y,eps_z` CSV.
pub fn read_strains(path: &Path) -> Result<Vec<StrainRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        let rec: StrainRecord = rec?;
        rec.triplet().map_err(|e| Error::parse(path, e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_strains(path: &Path, records: &[StrainRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Synthetic stand-in for simulated strains, not a physical model. Every
/// component decreases smoothly with the taper ratio `k1` and the chord
/// ratio `k3`, and carries independent 5% multiplicative noise seeded from
/// the design.
pub fn surrogate_strains(params: &BladeParams) -> StrainTriplet {
    let mut rng = seeds::rng(seeds::derive(params.seed, "strain", 0));
    let mut noise = || -> f64 {
        let e: f64 = StandardNormal.sample(&mut rng);
        1.0 + 0.05 * e
    };
    let (k1, k3) = (params.k1, params.k3);
    StrainTriplet {
        eps_x: 2.0e-3 * (-1.5 * k1 - 0.5 * k3).exp() * noise(),
        eps_y: 1.5e-3 * (-0.5 * k1 - 1.5 * k3).exp() * noise(),
        eps_z: 1.0e-3 * (-(k1 + k3)).exp() * noise(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_csv_round_trip() {
        let s = StrainTriplet::parse("0.001, 0.002,0.0005").unwrap();
        assert_eq!(s.to_array(), [0.001, 0.002, 0.0005]);
        assert!(StrainTriplet::parse("1,2").is_err());
        assert!(StrainTriplet::parse("1,x,2").is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let recs = vec![StrainRecord { design_id: "0001".into(), eps_x: 1e-3, eps_y: 2e-3, eps_z: 3e-4 }];
        write_strains(&path, &recs).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("design_id,eps_x,eps_y,eps_z\n"));
        assert_eq!(read_strains(&path).unwrap(), recs);
    }

    #[test]
    fn surrogate_decreases_with_taper_and_chord_ratios() {
        let base = BladeParams::sample(5);
        let mut prev = f64::INFINITY;
        for k in [0.2, 0.4, 0.6, 0.8] {
            // Same seed, so identical noise factors.
            let s = surrogate_strains(&BladeParams { k1: k, k3: k, ..base });
            let total = s.eps_x + s.eps_y + s.eps_z;
            assert!(total < prev);
            prev = total;
        }
        assert_eq!(surrogate_strains(&base), surrogate_strains(&base));
    }
}
