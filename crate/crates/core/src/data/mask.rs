//! Random observed / unobserved label masks.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Result};

/// Number of hidden positions for a given fraction: `round(fraction * n)`.
pub fn hidden_count(n: usize, fraction: f64) -> usize {
    (fraction * n as f64).round() as usize
}

/// `true` marks an unobserved position. Exactly `round(fraction * n)`
/// positions are hidden, drawn uniformly without replacement.
pub fn mask_labels(n: usize, fraction: f64, seed: u64) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(contract(format!("unobserved fraction {fraction} outside [0, 1]")));
    }
    let k = hidden_count(n, fraction).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hidden = vec![false; n];
    for i in sample(&mut rng, n, k) {
        hidden[i] = true;
    }
    Ok(hidden)
}
