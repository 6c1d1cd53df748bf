use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{batch_loss, make_batches, TrainError, UpweightConfig};
use crate::synlang::{SentencePair, Token};
use crate::transformer::{greedy_decode_batch, to_model_ids, to_raw_tokens, ModelParams};

const DECODE_CHUNK: usize = 256;

/// Exact-match accuracies grouped by membership. Accuracies are `None`
/// for empty groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub n_comp: usize,
    pub n_noncomp: usize,
    pub accuracy: Option<f64>,
    pub comp_acc: Option<f64>,
    pub noncomp_acc: Option<f64>,
    /// Mean label-smoothed cross-entropy per target token.
    pub loss: Option<f64>,
    pub hypotheses: Vec<Vec<Token>>,
}

fn ratio(hits: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| hits as f64 / n as f64)
}

pub fn score_outputs(
    hyps: &[Vec<Token>],
    pairs: &[SentencePair],
    membership: &dyn Fn(&[Token]) -> bool,
) -> SplitReport {
    assert_eq!(hyps.len(), pairs.len(), "one hypothesis per pair");
    let (mut n_comp, mut n_noncomp, mut hit_comp, mut hit_noncomp) = (0, 0, 0, 0);
    for (h, p) in hyps.iter().zip(pairs) {
        let hit = usize::from(*h == p.tgt);
        if membership(&p.src) {
            n_noncomp += 1;
            hit_noncomp += hit;
        } else {
            n_comp += 1;
            hit_comp += hit;
        }
    }
    SplitReport {
        n_comp,
        n_noncomp,
        accuracy: ratio(hit_comp + hit_noncomp, n_comp + n_noncomp),
        comp_acc: ratio(hit_comp, n_comp),
        noncomp_acc: ratio(hit_noncomp, n_noncomp),
        loss: None,
        hypotheses: hyps.to_vec(),
    }
}

/// Decoding length limit for a source of `src_len` tokens.
pub fn output_cap(params: &ModelParams, src_len: usize) -> usize {
    (2 * src_len + 10).min(params.config.max_positions)
}

pub fn decode_all(params: &ModelParams, pairs: &[SentencePair]) -> Result<Vec<Vec<Token>>, TrainError> {
    let srcs: Vec<Vec<usize>> = pairs.iter().map(|p| to_model_ids(&p.src)).collect();
    let out = greedy_decode_batch(params, &srcs, |s| output_cap(params, s.len()), DECODE_CHUNK)?;
    Ok(out.iter().map(|ids| to_raw_tokens(ids)).collect())
}

/// Greedy-decodes every source and scores exact matches plus the loss.
pub fn evaluate_split(
    params: &ModelParams,
    pairs: &[SentencePair],
    membership: &dyn Fn(&[Token]) -> bool,
    max_tokens: usize,
) -> Result<SplitReport, TrainError> {
    let hyps = decode_all(params, pairs)?;
    let mut report = score_outputs(&hyps, pairs, membership);
    if !pairs.is_empty() {
        report.loss = Some(mean_token_loss(params, pairs, max_tokens)?);
    }
    Ok(report)
}

pub(crate) fn mean_token_loss(
    params: &ModelParams,
    pairs: &[SentencePair],
    max_tokens: usize,
) -> Result<f64, TrainError> {
    let idx: Vec<usize> = (0..pairs.len()).collect();
    let batches = make_batches(pairs, &idx, max_tokens, &mut ChaCha8Rng::seed_from_u64(0))?;
    let none = UpweightConfig::none();
    let mut total = 0.0f64;
    let mut tokens = 0usize;
    for b in &batches {
        let members: Vec<&SentencePair> = b.iter().map(|&i| &pairs[i]).collect();
        total += batch_loss(params, &members, &none)? as f64;
        tokens += members.iter().map(|p| p.tgt.len() + 1).sum::<usize>();
    }
    Ok(total / tokens.max(1) as f64)
}
