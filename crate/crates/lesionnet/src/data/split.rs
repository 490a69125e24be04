//! Deterministic case-level train/validation split. Splitting at case
//! granularity keeps all four modalities (and all slices) of a case on the
//! same side, so nothing leaks between train and validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const TRAIN_FRACTION: f64 = 0.75;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndex {
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub seed: u64,
}

/// Shuffle the case ids with the seeded generator and cut at
/// `round(0.75 * n)`.
pub fn split(ids: &[String], seed: u64) -> Result<SplitIndex> {
    if ids.len() < 4 {
        return Err(Error::data(format!(
            "need >= 4 labeled cases to split, got {}",
            ids.len()
        )));
    }
    let mut seen = std::collections::HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::data(format!("duplicate case id {id:?} in split input")));
        }
    }
    let mut shuffled = ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let n_train = (TRAIN_FRACTION * ids.len() as f64).round() as usize;
    let val_ids = shuffled.split_off(n_train);
    Ok(SplitIndex {
        train_ids: shuffled,
        val_ids,
        seed,
    })
}
