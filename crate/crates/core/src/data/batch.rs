use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::UserRecord;
use crate::survival::CensorLabel;
use crate::{Error, Result};

/// Zero-padded `batch × max_len × dim` covariates with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Vec<f64>,
    pub dim: usize,
    pub max_len: usize,
    pub lengths: Vec<usize>,
    pub labels: Vec<CensorLabel>,
    /// `batch × max_len`, true inside each record's length.
    pub mask: Vec<bool>,
    pub user_ids: Vec<String>,
}

impl Batch {
    pub fn from_records(records: &[&UserRecord]) -> Result<Self> {
        let dim = records
            .first()
            .and_then(|r| r.dim())
            .ok_or_else(|| Error::Argument("cannot batch an empty record list".into()))?;
        let max_len = records.iter().map(|r| r.len()).max().unwrap_or(0);
        let mut inputs = vec![0.0; records.len() * max_len * dim];
        let mut mask = vec![false; records.len() * max_len];
        for (b, r) in records.iter().enumerate() {
            for (t, row) in r.covariates.iter().enumerate() {
                if row.len() != dim {
                    return Err(Error::Shape(format!(
                        "user `{}` has dimension {}, batch has {dim}",
                        r.user_id,
                        row.len()
                    )));
                }
                let at = (b * max_len + t) * dim;
                inputs[at..at + dim].copy_from_slice(row);
                mask[b * max_len + t] = true;
            }
        }
        Ok(Self {
            inputs,
            dim,
            max_len,
            lengths: records.iter().map(|r| r.len()).collect(),
            labels: records.iter().map(|r| r.label()).collect(),
            mask,
            user_ids: records.iter().map(|r| r.user_id.clone()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn mask_at(&self, b: usize, t: usize) -> bool {
        self.mask[b * self.max_len + t]
    }

    fn rows(&self, b: usize, len: usize) -> Vec<Vec<f64>> {
        (0..len)
            .map(|t| {
                let at = (b * self.max_len + t) * self.dim;
                self.inputs[at..at + self.dim].to_vec()
            })
            .collect()
    }

    /// Row `b` including padding.
    pub fn padded_row(&self, b: usize) -> Vec<Vec<f64>> {
        self.rows(b, self.max_len)
    }

    /// Row `b` up to its own length.
    pub fn row(&self, b: usize) -> Vec<Vec<f64>> {
        self.rows(b, self.lengths[b])
    }
}

/// Shuffles by `seed` and cuts into batches of at most `batch_size`.
pub fn make_batches(records: &[UserRecord], batch_size: usize, seed: u64) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::Argument("batch_size must be at least 1".into()));
    }
    let mut order: Vec<&UserRecord> = records.iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.chunks(batch_size).map(Batch::from_records).collect()
}
