use std::hash::Hash;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{same_len, BleuSmoothing, BleuStats, EvalError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutationConfig {
    pub resamples: usize,
    pub seed: u64,
    /// Report `(c + 1) / (R + 1)` instead of `c / R`.
    pub conservative: bool,
    pub smoothing: BleuSmoothing,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        Self { resamples: 1000, seed: 0, conservative: false, smoothing: BleuSmoothing::None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    /// Metric(A) − metric(B) on the unshuffled outputs.
    pub observed: f64,
    /// Resamples whose difference is at least `observed`.
    pub count_ge: usize,
    pub p_value: f64,
    pub config: PermutationConfig,
}

fn finish(observed: f64, count_ge: usize, config: &PermutationConfig) -> PermutationResult {
    let r = config.resamples as f64;
    let p_value = if config.conservative { (count_ge as f64 + 1.0) / (r + 1.0) } else { count_ge as f64 / r };
    PermutationResult { observed, count_ge, p_value, config: config.clone() }
}

/// One-tailed paired test of BLEU(A) > BLEU(B): each resample swaps every
/// pair of outputs independently with probability 1/2.
pub fn permutation_test<T: Eq + Hash>(
    a: &[Vec<T>],
    b: &[Vec<T>],
    refs: &[Vec<T>],
    config: &PermutationConfig,
) -> Result<PermutationResult, EvalError> {
    same_len("system A vs system B", a.len(), b.len())?;
    same_len("outputs vs references", a.len(), refs.len())?;
    if config.resamples == 0 {
        return Err(EvalError::Invalid("resamples must be positive".into()));
    }
    let sa: Vec<BleuStats> = a.iter().zip(refs).map(|(h, r)| BleuStats::of(h, r)).collect();
    let sb: Vec<BleuStats> = b.iter().zip(refs).map(|(h, r)| BleuStats::of(h, r)).collect();
    let score = |stats: &mut dyn Iterator<Item = &BleuStats>| {
        let mut t = BleuStats::default();
        stats.for_each(|s| t.add(s));
        t.result(config.smoothing).score
    };
    let observed = score(&mut sa.iter()) - score(&mut sb.iter());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut count_ge = 0;
    for _ in 0..config.resamples {
        let (mut ta, mut tb) = (BleuStats::default(), BleuStats::default());
        for (x, y) in sa.iter().zip(&sb) {
            let (p, q) = if rng.gen_bool(0.5) { (y, x) } else { (x, y) };
            ta.add(p);
            tb.add(q);
        }
        let diff = ta.result(config.smoothing).score - tb.result(config.smoothing).score;
        if diff >= observed {
            count_ge += 1;
        }
    }
    Ok(finish(observed, count_ge, config))
}

/// The same test for a per-sentence additive metric (mean difference).
pub fn permutation_test_scores(
    a: &[f64],
    b: &[f64],
    config: &PermutationConfig,
) -> Result<PermutationResult, EvalError> {
    same_len("system A vs system B", a.len(), b.len())?;
    if config.resamples == 0 || a.is_empty() {
        return Err(EvalError::Invalid("need resamples and at least one pair".into()));
    }
    let n = a.len() as f64;
    let observed = a.iter().zip(b).map(|(x, y)| x - y).sum::<f64>() / n;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut count_ge = 0;
    for _ in 0..config.resamples {
        let diff = a.iter().zip(b).map(|(x, y)| if rng.gen_bool(0.5) { y - x } else { x - y }).sum::<f64>() / n;
        if diff >= observed {
            count_ge += 1;
        }
    }
    Ok(finish(observed, count_ge, config))
}
