use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::UserRecord;
use crate::{Error, Result};

/// Minimum class size for a stratified split.
const MIN_STRATUM: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<UserRecord>,
    pub validation: Vec<UserRecord>,
    pub test: Vec<UserRecord>,
    pub split_seed: u64,
}

/// Shuffles `idx` and cuts it 7:1:2.
fn cut(mut idx: Vec<usize>, rng: &mut ChaCha8Rng) -> [Vec<usize>; 3] {
    idx.shuffle(rng);
    let n = idx.len();
    let n_train = (n as f64 * 0.7).round() as usize;
    let n_val = ((n as f64 * 0.1).round() as usize).min(n - n_train);
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    [idx, val, test]
}

/// Stratified 7:1:2 split by censor indicator. A class with fewer than ten
/// members makes the split fall back to a single unstratified shuffle.
pub fn split_dataset(records: &[UserRecord], seed: u64) -> Result<DatasetSplit> {
    if records.len() < MIN_STRATUM {
        return Err(Error::Data(format!(
            "need at least {MIN_STRATUM} records to split, got {}",
            records.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (events, censored): (Vec<usize>, Vec<usize>) = (0..records.len()).partition(|&i| records[i].is_event());
    let small = [&events, &censored]
        .iter()
        .any(|c| !c.is_empty() && c.len() < MIN_STRATUM);

    let parts = if small {
        log::warn!(
            "class sizes {} / {} below {MIN_STRATUM}; splitting without stratification",
            events.len(),
            censored.len()
        );
        cut((0..records.len()).collect(), &mut rng)
    } else {
        let a = cut(events, &mut rng);
        let b = cut(censored, &mut rng);
        let mut merged: [Vec<usize>; 3] = Default::default();
        for (m, (x, y)) in merged.iter_mut().zip(a.into_iter().zip(b)) {
            m.extend(x);
            m.extend(y);
            m.shuffle(&mut rng);
        }
        merged
    };
    let [train, validation, test] = parts.map(|ix| ix.into_iter().map(|i| records[i].clone()).collect());
    Ok(DatasetSplit {
        train,
        validation,
        test,
        split_seed: seed,
    })
}
