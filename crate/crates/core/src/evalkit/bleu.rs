use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::{same_len, EvalError};

pub const MAX_ORDER: usize = 4;

/// Zero-match handling for n-gram precisions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "epsilon")]
pub enum BleuSmoothing {
    /// A zero precision makes the score 0.
    #[default]
    None,
    /// A zero match count is replaced by `epsilon` (over a total of at least 1).
    AddEpsilon(f64),
}

/// Sufficient statistics of one or more hypothesis/reference pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

fn ngram_counts<T: Eq + Hash>(toks: &[T], n: usize) -> HashMap<&[T], u64> {
    let mut m = HashMap::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

impl BleuStats {
    /// Clipped n-gram matches of `hyp` against a single reference.
    pub fn of<T: Eq + Hash>(hyp: &[T], reference: &[T]) -> Self {
        let mut s = Self { hyp_len: hyp.len() as u64, ref_len: reference.len() as u64, ..Self::default() };
        for n in 1..=MAX_ORDER {
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(reference, n);
            s.totals[n - 1] = hyp.len().saturating_sub(n - 1) as u64;
            s.matches[n - 1] = h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
        }
        s
    }

    pub fn add(&mut self, o: &Self) {
        for n in 0..MAX_ORDER {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.hyp_len += o.hyp_len;
        self.ref_len += o.ref_len;
    }

    pub fn result(&self, smoothing: BleuSmoothing) -> BleuResult {
        let mut precisions = [0.0; MAX_ORDER];
        for n in 0..MAX_ORDER {
            let (m, t) = (self.matches[n] as f64, self.totals[n] as f64);
            precisions[n] = match smoothing {
                _ if self.matches[n] > 0 => m / t,
                BleuSmoothing::None => 0.0,
                BleuSmoothing::AddEpsilon(eps) => eps / t.max(1.0),
            };
        }
        let (c, r) = (self.hyp_len as f64, self.ref_len as f64);
        let brevity_penalty = if self.hyp_len == 0 {
            0.0
        } else if c > r {
            1.0
        } else {
            (1.0 - r / c).exp()
        };
        let score = if precisions.iter().any(|&p| p == 0.0) {
            0.0
        } else {
            brevity_penalty * (precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64).exp()
        };
        BleuResult { score, precisions, brevity_penalty, hyp_len: self.hyp_len, ref_len: self.ref_len }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BleuResult {
    /// In `[0, 1]`.
    pub score: f64,
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: u64,
    pub ref_len: u64,
}

pub fn corpus_bleu_details<T: Eq + Hash>(
    hyps: &[Vec<T>],
    refs: &[Vec<T>],
    smoothing: BleuSmoothing,
) -> Result<BleuResult, EvalError> {
    same_len("hypotheses vs references", hyps.len(), refs.len())?;
    let mut total = BleuStats::default();
    for (h, r) in hyps.iter().zip(refs) {
        total.add(&BleuStats::of(h, r));
    }
    Ok(total.result(smoothing))
}

/// Corpus-level 4-gram BLEU with brevity penalty, single reference.
pub fn corpus_bleu<T: Eq + Hash>(hyps: &[Vec<T>], refs: &[Vec<T>], smoothing: BleuSmoothing) -> Result<f64, EvalError> {
    Ok(corpus_bleu_details(hyps, refs, smoothing)?.score)
}
