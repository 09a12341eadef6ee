// SPDX-License-Identifier: Apache-2.0

//! Softmax selection over node values.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

/// `exp(f_i - max f) / sum_j exp(f_j - max f)`. Empty input gives an empty
/// vector.
pub fn softmax(f: &[f64]) -> Vec<f64> {
    let Some(max) = f.iter().copied().reduce(f64::max) else {
        return Vec::new();
    };
    let e: Vec<f64> = f.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|x| x / sum).collect()
}

/// Index drawn with probability `softmax(f)`; `None` for empty input.
pub fn sample_index<R: Rng + ?Sized>(f: &[f64], rng: &mut R) -> Option<usize> {
    let p = softmax(f);
    if p.len() == 1 {
        return Some(0);
    }
    let dist = WeightedIndex::new(&p).ok()?;
    Some(dist.sample(rng))
}
