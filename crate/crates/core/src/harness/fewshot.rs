use std::collections::HashSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::QaExample;
use crate::error::{Error, Result};
use crate::util::{fnv1a, Fnv1a};

/// Training-set sizes of the few-shot benchmark.
pub const FEW_SHOT_SIZES: [usize; 7] = [16, 32, 64, 128, 256, 512, 1024];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotSplit {
    pub size: usize,
    pub sample_index: usize,
    pub seed: u64,
    pub example_ids: Vec<String>,
}

fn split_seed(seed: u64, size: usize, sample: usize) -> u64 {
    Fnv1a::default()
        .write_u64(seed)
        .write_u64(size as u64)
        .write_u64(sample as u64)
        .finish()
}

/// Draws `num_samples` training sets of every size, each uniformly without
/// replacement under its own derived seed.
///
/// Examples whose passage appears in `validation` are never drawn, and the
/// result is checked for passage leakage before it is returned.
pub fn subsample(
    dataset: &[QaExample],
    sizes: &[usize],
    num_samples: usize,
    seed: u64,
    validation: Option<&[QaExample]>,
) -> Result<Vec<FewShotSplit>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let held_out: HashSet<u64> = validation
        .unwrap_or_default()
        .iter()
        .map(|e| fnv1a(e.context.as_bytes()))
        .collect();
    let pool: Vec<&QaExample> = dataset
        .iter()
        .filter(|e| !held_out.contains(&fnv1a(e.context.as_bytes())))
        .collect();

    let mut splits = Vec::with_capacity(sizes.len() * num_samples);
    for &size in sizes {
        if size > pool.len() || size == 0 {
            return Err(Error::DatasetTooSmall {
                available: pool.len(),
                requested: size,
            });
        }
        for k in 0..num_samples {
            let seed = split_seed(seed, size, k);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = index::sample(&mut rng, pool.len(), size).into_vec();
            picked.sort_unstable();
            splits.push(FewShotSplit {
                size,
                sample_index: k,
                seed,
                example_ids: picked.into_iter().map(|i| pool[i].id.clone()).collect(),
            });
        }
    }

    if let Some(validation) = validation {
        let chosen: HashSet<&str> = splits
            .iter()
            .flat_map(|s| s.example_ids.iter().map(String::as_str))
            .collect();
        let train: Vec<QaExample> = dataset
            .iter()
            .filter(|e| chosen.contains(e.id.as_str()))
            .cloned()
            .collect();
        check_leakage(&train, validation)?;
    }
    Ok(splits)
}

/// Fails if any training passage also occurs in the validation set.
pub fn check_leakage(train: &[QaExample], validation: &[QaExample]) -> Result<()> {
    let held_out: HashSet<u64> = validation.iter().map(|e| fnv1a(e.context.as_bytes())).collect();
    match train.iter().find(|e| held_out.contains(&fnv1a(e.context.as_bytes()))) {
        Some(e) => Err(Error::Leakage(e.id.clone())),
        None => Ok(()),
    }
}
