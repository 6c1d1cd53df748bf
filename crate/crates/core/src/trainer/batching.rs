use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::TrainError;
use crate::synlang::SentencePair;

/// Padded footprint of one pair: the longer of the source and the target
/// with its BOS/EOS shift.
pub fn padded_size(pair: &SentencePair) -> usize {
    pair.src.len().max(pair.tgt.len() + 1)
}

/// Length-bucketed batches over `indices`: a seeded shuffle, a stable sort
/// by length, greedy packing under `max_tokens`, then a shuffled batch order.
/// Every batch satisfies `len × max padded_size ≤ max_tokens`.
pub fn make_batches(
    pairs: &[SentencePair],
    indices: &[usize],
    max_tokens: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<usize>>, TrainError> {
    let mut order = indices.to_vec();
    order.shuffle(rng);
    order.sort_by_key(|&i| (padded_size(&pairs[i]), pairs[i].src.len()));
    let mut batches: Vec<Vec<usize>> = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    let mut cur_max = 0;
    for i in order {
        let size = padded_size(&pairs[i]);
        if size > max_tokens {
            return Err(TrainError::Oversized { index: i, tokens: size, budget: max_tokens });
        }
        let width = cur_max.max(size);
        if !cur.is_empty() && (cur.len() + 1) * width > max_tokens {
            batches.push(std::mem::take(&mut cur));
            cur_max = 0;
        }
        cur_max = cur_max.max(size);
        cur.push(i);
    }
    if !cur.is_empty() {
        batches.push(cur);
    }
    batches.shuffle(rng);
    Ok(batches)
}
