use super::search::distribution_from;
use super::{Datastore, KnnConfig, KnnError};
use crate::transformer::{beam_search_with, greedy_search, ModelError, ModelParams, ModelScorer, NextTokenScorer};

/// `λ·p_kNN + (1 − λ)·p_θ`, mixed in probability space at every step.
pub struct KnnScorer<'a> {
    pub model: ModelScorer<'a>,
    pub ds: &'a Datastore,
    pub cfg: KnnConfig,
}

impl<'a> KnnScorer<'a> {
    pub fn new(
        params: &'a ModelParams,
        srcs: &[Vec<usize>],
        ds: &'a Datastore,
        cfg: KnnConfig,
    ) -> Result<Self, KnnError> {
        cfg.validate()?;
        ds.check_model(params)?;
        if ds.is_empty() {
            return Err(KnnError::Empty);
        }
        Ok(Self { model: ModelScorer::new(params, srcs)?, ds, cfg })
    }
}

impl NextTokenScorer for KnnScorer<'_> {
    fn next_probs(&mut self, rows: &[usize], prefixes: &[Vec<usize>]) -> Result<Vec<Vec<f32>>, ModelError> {
        let (probs, hidden) = self.model.step(rows, prefixes)?;
        let vocab = self.model.params.config.tgt_vocab_size;
        let lambda = self.cfg.lambda;
        let mut out = Vec::with_capacity(probs.len());
        for (b, p_model) in probs.into_iter().enumerate() {
            let neighbors = self
                .ds
                .search(hidden.row(b), &self.cfg)
                .map_err(|e| ModelError::Config(format!("kNN retrieval: {e}")))?;
            let p_knn = distribution_from(&neighbors, self.ds, self.cfg.temperature, vocab);
            out.push(p_knn.iter().zip(&p_model).map(|(&k, &m)| lambda * k + (1.0 - lambda) * m).collect());
        }
        Ok(out)
    }
}

/// Greedy (`beam_size = 1`) or beam decoding of one source (model ids) on
/// the mixed distribution.
pub fn interpolated_decode(
    params: &ModelParams,
    src: &[usize],
    ds: &Datastore,
    cfg: &KnnConfig,
    beam_size: usize,
    max_out_len: usize,
) -> Result<Vec<usize>, KnnError> {
    let mut scorer = KnnScorer::new(params, &[src.to_vec()], ds, *cfg)?;
    if beam_size <= 1 {
        Ok(greedy_search(&mut scorer, &[0], max_out_len)?.remove(0))
    } else {
        Ok(beam_search_with(&mut scorer, 0, beam_size, max_out_len)?.tokens)
    }
}

/// Greedy decoding of many sources, `chunk` at a time, on the mixed distribution.
pub fn interpolated_decode_batch(
    params: &ModelParams,
    srcs: &[Vec<usize>],
    ds: &Datastore,
    cfg: &KnnConfig,
    max_out_len: impl Fn(&[usize]) -> usize,
    chunk: usize,
) -> Result<Vec<Vec<usize>>, KnnError> {
    let mut out = Vec::with_capacity(srcs.len());
    for block in srcs.chunks(chunk.max(1)) {
        let mut scorer = KnnScorer::new(params, block, ds, *cfg)?;
        let limit = block.iter().map(|s| max_out_len(s)).max().unwrap_or(0);
        let rows: Vec<usize> = (0..block.len()).collect();
        for (s, mut d) in block.iter().zip(greedy_search(&mut scorer, &rows, limit)?) {
            d.truncate(max_out_len(s));
            out.push(d);
        }
    }
    Ok(out)
}
