use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};

use crate::{Error, Result};

/// One latent code per design, row `i` belonging to `design_ids[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTable {
    pub design_ids: Vec<String>,
    pub codes: Array2<f64>,
}

impl LatentTable {
    pub fn new(design_ids: Vec<String>, codes: Array2<f64>) -> Result<Self> {
        if design_ids.len() != codes.nrows() {
            return Err(Error::DimensionMismatch {
                expected: design_ids.len(),
                got: codes.nrows(),
            });
        }
        if codes.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("latent codes must be finite".into()));
        }
        Ok(Self { design_ids, codes })
    }

    pub fn len(&self) -> usize {
        self.design_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.design_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.codes.ncols()
    }

    pub fn code(&self, i: usize) -> ArrayView1<'_, f64> {
        self.codes.row(i)
    }

    pub fn index_of(&self, design_id: &str) -> Option<usize> {
        self.design_ids.iter().position(|d| d == design_id)
    }

    pub fn get(&self, design_id: &str) -> Option<Array1<f64>> {
        self.index_of(design_id).map(|i| self.codes.row(i).to_owned())
    }

    /// Rows of `self` reordered to follow `ids`.
    pub fn select(&self, ids: &[String]) -> Result<Self> {
        let mut codes = Array2::zeros((ids.len(), self.dim()));
        for (r, id) in ids.iter().enumerate() {
            let i = self
                .index_of(id)
                .ok_or_else(|| Error::Invalid(format!("design {id} missing from latent table")))?;
            codes.row_mut(r).assign(&self.codes.row(i));
        }
        Self::new(ids.to_vec(), codes)
    }

    /// CSV with header `design_id,z0,z1,...`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["design_id".to_string()];
        header.extend((0..self.dim()).map(|d| format!("z{d}")));
        w.write_record(&header)?;
        for (id, row) in self.design_ids.iter().zip(self.codes.rows()) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| format!("{v:e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let dim = r.headers()?.len().saturating_sub(1);
        let mut ids = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != dim + 1 {
                return Err(Error::parse(path, format!("row {} has {} fields, expected {}", line + 2, rec.len(), dim + 1)));
            }
            ids.push(rec[0].to_string());
            for f in rec.iter().skip(1) {
                values.push(
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::parse(path, format!("row {}: {e}", line + 2)))?,
                );
            }
        }
        let codes = Array2::from_shape_vec((ids.len(), dim), values).map_err(|e| Error::parse(path, e.to_string()))?;
        Self::new(ids, codes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn csv_round_trip_is_exact() {
        let t = LatentTable::new(
            vec!["0001".into(), "0002".into()],
            array![[0.1, -2.5e-7, 3.0], [1.0 / 3.0, 0.0, -1e10]],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.csv");
        t.write_csv(&p).unwrap();
        assert_eq!(LatentTable::read_csv(&p).unwrap(), t);
    }

    #[test]
    fn select_reorders() {
        let t = LatentTable::new(vec!["a".into(), "b".into()], array![[1.0], [2.0]]).unwrap();
        let s = t.select(&["b".into(), "a".into()]).unwrap();
        assert_eq!(s.codes, array![[2.0], [1.0]]);
        assert!(t.select(&["c".into()]).is_err());
    }
}
