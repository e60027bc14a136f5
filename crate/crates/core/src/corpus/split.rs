use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dialogue;
use crate::error::{Error, Result};

/// Seeded shuffle followed by a contiguous train/dev/test partition.
///
/// Dev and test sizes are `round(n * ratio)`; train takes the remainder.
pub fn split_corpus(
    dialogues: &[Dialogue],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<Dialogue>, Vec<Dialogue>, Vec<Dialogue>)> {
    let n = dialogues.len();
    if n < 3 {
        return Err(Error::invalid(format!("need at least 3 dialogues to split, got {n}")));
    }
    let (a, b, c) = ratios;
    if !(a > 0.0 && b > 0.0 && c > 0.0) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split ratios must be positive and sum to 1, got {ratios:?}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_dev = ((n as f64 * b).round() as usize).max(1);
    let n_test = ((n as f64 * c).round() as usize).max(1);
    let n_train = n.checked_sub(n_dev + n_test).filter(|t| *t >= 1).ok_or_else(|| {
        Error::invalid(format!("ratios {ratios:?} leave no training dialogues out of {n}"))
    })?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| dialogues[i].clone()).collect::<Vec<_>>();
    Ok((
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_dev]),
        pick(&order[n_train + n_dev..]),
    ))
}
