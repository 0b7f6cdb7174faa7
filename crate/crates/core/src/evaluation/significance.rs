use rand::Rng as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{sentence_counts, Counts, EvalError, Result};
use crate::corpus::Sentence;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignificanceResult {
    /// F1(A) - F1(B) on the full corpus.
    pub delta_f1: f64,
    pub resamples: usize,
    /// Fraction of resamples with F1(A) - F1(B) <= 0.
    pub p_value: f64,
    pub seed: u64,
}

/// Seed of resample `i`; a splitmix64 step keeps neighbouring streams apart.
fn resample_seed(seed: u64, i: u64) -> u64 {
    let mut z = seed ^ i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One-sided paired bootstrap over sentences: does system A beat system B?
///
/// Each resample draws sentence indices with replacement from its own
/// derived seed and sums cached per-sentence counts, so the result does not
/// depend on how resamples are scheduled across threads.
pub fn bootstrap_significance(
    gold: &[Sentence],
    pred_a: &[Sentence],
    pred_b: &[Sentence],
    resamples: usize,
    seed: u64,
) -> Result<SignificanceResult> {
    if resamples == 0 {
        return Err(EvalError::NoResamples);
    }
    let a = sentence_counts(gold, pred_a)?;
    let b = sentence_counts(gold, pred_b)?;
    let total = |c: &[Counts]| {
        c.iter().fold(Counts::default(), |mut acc, &x| {
            acc += x;
            acc
        })
    };
    let delta_f1 = total(&a).f1() - total(&b).f1();
    let n = a.len();
    let not_better = (0..resamples as u64)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = ChaCha8Rng::seed_from_u64(resample_seed(seed, i));
            let (mut ca, mut cb) = (Counts::default(), Counts::default());
            for _ in 0..n {
                let k = rng.gen_range(0..n);
                ca += a[k];
                cb += b[k];
            }
            ca.f1() - cb.f1() <= 0.0
        })
        .count();
    Ok(SignificanceResult {
        delta_f1,
        resamples,
        p_value: not_better as f64 / resamples as f64,
        seed,
    })
}
