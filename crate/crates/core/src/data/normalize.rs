use serde::{Deserialize, Serialize};

use super::UserRecord;
use crate::{Error, Result};

/// Per-feature z-scoring fitted on training records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Statistics over every timestep of every record. Constant features get
    /// unit scale.
    pub fn fit(records: &[UserRecord]) -> Result<Self> {
        let dim = records
            .first()
            .and_then(|r| r.dim())
            .ok_or_else(|| Error::Data("cannot fit a normalizer on no data".into()))?;
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        let mut n = 0usize;
        for row in records.iter().flat_map(|r| &r.covariates) {
            if row.len() != dim {
                return Err(Error::Shape(format!("row of dimension {}, expected {dim}", row.len())));
            }
            for j in 0..dim {
                sum[j] += row[j];
                sq[j] += row[j] * row[j];
            }
            n += 1;
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let var = (s / nf - m * m).max(0.0);
                if var.sqrt() > 1e-12 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, record: &UserRecord) -> UserRecord {
        let mut r = record.clone();
        for row in r.covariates.iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        r
    }

    pub fn apply_all(&self, records: &[UserRecord]) -> Vec<UserRecord> {
        records.iter().map(|r| self.apply(r)).collect()
    }
}
