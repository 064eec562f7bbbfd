use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::record::Dataset;
use crate::error::{Error, Result};

/// Seeded shuffle of `0..n` cut into a training prefix of
/// `floor(n · train_ratio)` indices and a validation suffix.
pub fn split_indices(n: usize, train_ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::config(format!("train ratio {train_ratio} outside (0, 1)")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (n as f64 * train_ratio).floor() as usize;
    let validation = order.split_off(cut);
    Ok((order, validation))
}

pub fn split(dataset: &Dataset, train_ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, val) = split_indices(dataset.len(), train_ratio, seed)?;
    Ok((dataset.subset(&train), dataset.subset(&val)))
}
