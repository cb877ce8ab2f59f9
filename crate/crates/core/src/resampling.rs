//! Monte Carlo cross-validation, majority-class undersampling and bootstrap
//! index draws. Replicate `i` always uses seed `base_seed + i`, so replicates
//! can be generated in any order or in parallel.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use thiserror::Error;

use crate::dataset::Dataset;
use crate::seed;

#[derive(Debug, Error, PartialEq)]
pub enum ResamplingError {
    #[error("{n} rows with fraction {fraction} leave an empty part")]
    DegenerateSplit { n: usize, fraction: f64 },
    #[error("need at least one iteration/replicate")]
    NoReplicates,
    #[error("class {0} is absent")]
    MissingClass(u8),
    #[error("cannot resample an empty set")]
    Empty,
}

pub type Result<T, E = ResamplingError> = std::result::Result<T, E>;

/// `floor(n * fraction)` guarded against representation error
/// (`0.7 * 10 = 7.000000000000001`, `0.29 * 100 = 28.999999999999996`).
pub fn part_size(n: usize, fraction: f64) -> usize {
    (n as f64 * fraction + 1e-9).floor() as usize
}

/// A seeded uniform permutation of `0..n`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed));
    idx
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub subtrain: Vec<usize>,
    pub validation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub iterations: usize,
    pub validation_fraction: f64,
    pub base_seed: u64,
    pub splits: Vec<Split>,
}

/// One sub-train/validation split without replacement;
/// validation size is `floor(n * validation_fraction)`.
pub fn holdout(n: usize, validation_fraction: f64, seed: u64) -> Result<Split> {
    let n_val = part_size(n, validation_fraction);
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) || n_val == 0 || n_val >= n {
        return Err(ResamplingError::DegenerateSplit {
            n,
            fraction: validation_fraction,
        });
    }
    let perm = permutation(n, seed);
    let (subtrain, validation) = perm.split_at(n - n_val);
    Ok(Split {
        subtrain: subtrain.to_vec(),
        validation: validation.to_vec(),
    })
}

pub fn mccv_splits(n: usize, iterations: usize, validation_fraction: f64, base_seed: u64) -> Result<SplitPlan> {
    if iterations == 0 {
        return Err(ResamplingError::NoReplicates);
    }
    let splits = (0..iterations)
        .map(|i| holdout(n, validation_fraction, base_seed.wrapping_add(i as u64)))
        .collect::<Result<_>>()?;
    Ok(SplitPlan {
        iterations,
        validation_fraction,
        base_seed,
        splits,
    })
}

/// Indices (ascending) of a balanced subsample: every minority row plus an
/// equally sized without-replacement draw from the majority class.
pub fn undersample_indices(labels: &[u8], seed: u64) -> Result<Vec<usize>> {
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    if pos.is_empty() {
        return Err(ResamplingError::MissingClass(1));
    }
    if neg.is_empty() {
        return Err(ResamplingError::MissingClass(0));
    }
    let (minority, majority) = if pos.len() <= neg.len() { (pos, neg) } else { (neg, pos) };
    let mut rng = seed::rng(seed);
    let mut out: Vec<usize> = majority.choose_multiple(&mut rng, minority.len()).copied().collect();
    out.extend(minority);
    out.sort_unstable();
    Ok(out)
}

pub fn undersample_majority(d: &Dataset, seed: u64) -> Result<Dataset> {
    Ok(d.subset(&undersample_indices(d.labels(), seed)?))
}

/// `replicates` draws of `n` indices with replacement.
pub fn bootstrap_indices(n: usize, replicates: usize, base_seed: u64) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(ResamplingError::Empty);
    }
    if replicates == 0 {
        return Err(ResamplingError::NoReplicates);
    }
    Ok((0..replicates)
        .map(|b| bootstrap_replicate(n, base_seed.wrapping_add(b as u64)))
        .collect())
}

pub fn bootstrap_replicate(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}
