use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Default number of cross-validation folds.
pub const DEFAULT_FOLDS: usize = 5;

/// Shuffle `0..n` and deal the shuffled positions round-robin into `folds`
/// near-equal groups.
pub fn assign_folds(n: usize, folds: usize, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::invalid("folds", format!("need at least 2, got {folds}")));
    }
    if n < folds {
        return Err(Error::TooFewSamples {
            needed: folds,
            found: n,
            folds,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut out = vec![Vec::with_capacity(n / folds + 1); folds];
    for (k, i) in order.into_iter().enumerate() {
        out[k % folds].push(i);
    }
    Ok(out)
}

/// Indices of `0..n` not in `fold`.
pub fn complement(n: usize, fold: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in fold {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}
