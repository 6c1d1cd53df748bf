//! Greedy and beam decoding over any next-token distribution.

use std::cmp::Ordering;

use super::forward::{encode, next_token_step, Encoded};
use super::{ModelError, ModelParams, BOS, EOS, PAD};
use crate::numerics::Tensor;

/// Supplies next-token probabilities for prefixes (each starting with BOS)
/// of the source identified by `rows[i]`.
pub trait NextTokenScorer {
    fn next_probs(&mut self, rows: &[usize], prefixes: &[Vec<usize>]) -> Result<Vec<Vec<f32>>, ModelError>;
}

/// The plain model distribution `p_θ`, with PAD and BOS excluded.
pub struct ModelScorer<'a> {
    pub params: &'a ModelParams,
    pub encoded: Encoded,
}

impl<'a> ModelScorer<'a> {
    pub fn new(params: &'a ModelParams, srcs: &[Vec<usize>]) -> Result<Self, ModelError> {
        Ok(Self { params, encoded: encode(params, srcs)? })
    }

    /// Probabilities plus the decoder trace vector at the last position.
    pub fn step(&self, rows: &[usize], prefixes: &[Vec<usize>]) -> Result<(Vec<Vec<f32>>, Tensor), ModelError> {
        let enc = self.encoded.select(rows);
        let out = next_token_step(self.params, &enc, prefixes)?;
        let v = out.logits.last_dim();
        let probs = (0..prefixes.len()).map(|b| masked_softmax(out.logits.row(b), v)).collect();
        Ok((probs, out.hidden))
    }
}

fn masked_softmax(logits: &[f32], v: usize) -> Vec<f32> {
    let allowed = |i: usize| i != PAD && i != BOS;
    let max = (0..v).filter(|&i| allowed(i)).map(|i| logits[i]).fold(f32::NEG_INFINITY, f32::max);
    let mut p: Vec<f32> = (0..v).map(|i| if allowed(i) { (logits[i] - max).exp() } else { 0.0 }).collect();
    let sum: f32 = p.iter().sum();
    for x in &mut p {
        *x /= sum;
    }
    p
}

impl NextTokenScorer for ModelScorer<'_> {
    fn next_probs(&mut self, rows: &[usize], prefixes: &[Vec<usize>]) -> Result<Vec<Vec<f32>>, ModelError> {
        Ok(self.step(rows, prefixes)?.0)
    }
}

/// Index of the largest probability; ties go to the lowest token id.
fn argmax(p: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > p[best] {
            best = i;
        }
    }
    best
}

/// Greedy decoding of several sources in lockstep. Output excludes BOS/EOS.
pub fn greedy_search<S: NextTokenScorer>(
    scorer: &mut S,
    rows: &[usize],
    max_out_len: usize,
) -> Result<Vec<Vec<usize>>, ModelError> {
    let mut outputs: Vec<Vec<usize>> = vec![Vec::new(); rows.len()];
    let mut active: Vec<usize> = (0..rows.len()).collect();
    for _ in 0..max_out_len {
        if active.is_empty() {
            break;
        }
        let prefixes: Vec<Vec<usize>> =
            active.iter().map(|&i| std::iter::once(BOS).chain(outputs[i].iter().copied()).collect()).collect();
        let act_rows: Vec<usize> = active.iter().map(|&i| rows[i]).collect();
        let probs = scorer.next_probs(&act_rows, &prefixes)?;
        let mut still = Vec::with_capacity(active.len());
        for (&i, p) in active.iter().zip(&probs) {
            let tok = argmax(p);
            if tok != EOS {
                outputs[i].push(tok);
                still.push(i);
            }
        }
        active = still;
    }
    Ok(outputs)
}

pub fn greedy_decode(params: &ModelParams, src: &[usize], max_out_len: usize) -> Result<Vec<usize>, ModelError> {
    if max_out_len == 0 {
        return Ok(Vec::new());
    }
    let mut scorer = ModelScorer::new(params, &[src.to_vec()])?;
    Ok(greedy_search(&mut scorer, &[0], max_out_len)?.remove(0))
}

/// Greedy decoding for many sources, `chunk` sentences at a time.
pub fn greedy_decode_batch(
    params: &ModelParams,
    srcs: &[Vec<usize>],
    max_out_len: impl Fn(&[usize]) -> usize,
    chunk: usize,
) -> Result<Vec<Vec<usize>>, ModelError> {
    let mut out = Vec::with_capacity(srcs.len());
    for block in srcs.chunks(chunk.max(1)) {
        let mut scorer = ModelScorer::new(params, block)?;
        let limit = block.iter().map(|s| max_out_len(s)).max().unwrap_or(0);
        let rows: Vec<usize> = (0..block.len()).collect();
        let decoded = greedy_search(&mut scorer, &rows, limit)?;
        for (s, mut d) in block.iter().zip(decoded) {
            d.truncate(max_out_len(s));
            out.push(d);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamHypothesis {
    /// Generated tokens without BOS/EOS.
    pub tokens: Vec<usize>,
    /// Whether generation ended with EOS (rather than hitting the length cap).
    pub finished: bool,
    /// Cumulative log-probability divided by the number of generated tokens
    /// (EOS included when present).
    pub score: f64,
}

/// Length-normalized log-probability of a fixed output under `scorer`.
pub fn sequence_score<S: NextTokenScorer>(
    scorer: &mut S,
    row: usize,
    tokens: &[usize],
    with_eos: bool,
) -> Result<f64, ModelError> {
    let mut prefix = vec![BOS];
    let mut cum = 0.0f64;
    let steps: Vec<usize> = tokens.iter().copied().chain(with_eos.then_some(EOS)).collect();
    if steps.is_empty() {
        return Ok(0.0);
    }
    for &t in &steps {
        let p = scorer.next_probs(&[row], std::slice::from_ref(&prefix))?;
        cum += (p[0][t] as f64).ln();
        prefix.push(t);
    }
    Ok(cum / steps.len() as f64)
}

/// Beam search ranked by length-normalized log-probability.
///
/// At each step every live hypothesis is extended by every token; the
/// `beam_size` best extensions by cumulative log-probability survive, with
/// EOS extensions retired as finished. Hypotheses reaching `max_out_len`
/// are retired unfinished. `beam_size = 1` reproduces greedy decoding.
pub fn beam_search_with<S: NextTokenScorer>(
    scorer: &mut S,
    row: usize,
    beam_size: usize,
    max_out_len: usize,
) -> Result<BeamHypothesis, ModelError> {
    let beam_size = beam_size.max(1);
    let mut beams: Vec<(Vec<usize>, f64)> = vec![(vec![BOS], 0.0)];
    let mut done: Vec<BeamHypothesis> = Vec::new();
    for step in 0..max_out_len {
        if beams.is_empty() {
            break;
        }
        let prefixes: Vec<Vec<usize>> = beams.iter().map(|(p, _)| p.clone()).collect();
        let probs = scorer.next_probs(&vec![row; beams.len()], &prefixes)?;
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for (bi, ((_, cum), p)) in beams.iter().zip(&probs).enumerate() {
            for (tok, &pv) in p.iter().enumerate() {
                if pv > 0.0 {
                    cands.push((cum + (pv as f64).ln(), bi, tok));
                }
            }
        }
        cands.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut next = Vec::with_capacity(beam_size);
        for (cum, bi, tok) in cands.into_iter().take(beam_size) {
            let prefix = &beams[bi].0;
            let generated = prefix.len(); // tokens after BOS, plus this one
            if tok == EOS {
                done.push(BeamHypothesis {
                    tokens: prefix[1..].to_vec(),
                    finished: true,
                    score: cum / generated as f64,
                });
            } else if step + 1 == max_out_len {
                let mut tokens = prefix[1..].to_vec();
                tokens.push(tok);
                done.push(BeamHypothesis { tokens, finished: false, score: cum / generated as f64 });
            } else {
                let mut p = prefix.clone();
                p.push(tok);
                next.push((p, cum));
            }
        }
        beams = next;
    }
    let mut best: Option<BeamHypothesis> = None;
    for h in done {
        if best.as_ref().map_or(true, |b| h.score > b.score) {
            best = Some(h);
        }
    }
    Ok(best.unwrap_or(BeamHypothesis { tokens: Vec::new(), finished: false, score: 0.0 }))
}

pub fn beam_search(
    params: &ModelParams,
    src: &[usize],
    beam_size: usize,
    max_out_len: usize,
) -> Result<BeamHypothesis, ModelError> {
    let mut scorer = ModelScorer::new(params, &[src.to_vec()])?;
    beam_search_with(&mut scorer, 0, beam_size, max_out_len)
}
