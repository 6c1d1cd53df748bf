use serde::{Deserialize, Serialize};

use super::{interpolated_decode_batch, Datastore, IndexKind, KnnConfig, KnnError};
use crate::evalkit::{corpus_bleu, BleuSmoothing};
use crate::synlang::SentencePair;
use crate::transformer::{to_model_ids, to_raw_tokens, ModelParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnGrid {
    pub lambdas: Vec<f32>,
    pub temperatures: Vec<f32>,
    pub ks: Vec<usize>,
}

impl Default for KnnGrid {
    fn default() -> Self {
        Self { lambdas: vec![0.2, 0.4, 0.6, 0.8], temperatures: vec![0.1, 1.0, 10.0], ks: vec![5, 10, 15, 20] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub lambda: f32,
    pub temperature: f32,
    pub k: usize,
    pub bleu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: KnnConfig,
    pub best_bleu: f64,
    pub rows: Vec<GridRow>,
}

fn sorted<T: Copy + PartialOrd>(v: &[T]) -> Vec<T> {
    let mut v = v.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("grid values are comparable"));
    v
}

impl KnnGrid {
    /// Exhaustive search in (λ, k, T) ascending order; a later cell must
    /// score strictly higher to win, so ties go to smaller λ, then k, then T.
    pub fn search_with(
        &self,
        index: IndexKind,
        mut score: impl FnMut(&KnnConfig) -> Result<f64, KnnError>,
    ) -> Result<GridResult, KnnError> {
        if self.lambdas.is_empty() || self.temperatures.is_empty() || self.ks.is_empty() {
            return Err(KnnError::Config("empty grid".into()));
        }
        let mut rows = Vec::new();
        let mut best: Option<(KnnConfig, f64)> = None;
        for &lambda in &sorted(&self.lambdas) {
            for &k in &sorted(&self.ks) {
                for &temperature in &sorted(&self.temperatures) {
                    let cfg = KnnConfig { lambda, temperature, k, index };
                    cfg.validate()?;
                    let bleu = score(&cfg)?;
                    rows.push(GridRow { lambda, temperature, k, bleu });
                    if best.as_ref().map_or(true, |(_, b)| bleu > *b) {
                        best = Some((cfg, bleu));
                    }
                }
            }
        }
        let (best, best_bleu) = best.expect("nonempty grid");
        Ok(GridResult { best, best_bleu, rows })
    }
}

/// Picks the configuration with the highest validation BLEU under greedy
/// interpolated decoding.
pub fn grid_search(
    params: &ModelParams,
    ds: &Datastore,
    validation: &[SentencePair],
    grid: &KnnGrid,
    index: IndexKind,
    smoothing: BleuSmoothing,
    max_out_len: impl Fn(&[usize]) -> usize,
) -> Result<GridResult, KnnError> {
    let srcs: Vec<Vec<usize>> = validation.iter().map(|p| to_model_ids(&p.src)).collect();
    let refs: Vec<Vec<u32>> = validation.iter().map(|p| p.tgt.clone()).collect();
    grid.search_with(index, |cfg| {
        let hyps: Vec<Vec<u32>> = interpolated_decode_batch(params, &srcs, ds, cfg, &max_out_len, 256)?
            .iter()
            .map(|h| to_raw_tokens(h))
            .collect();
        Ok(corpus_bleu(&hyps, &refs, smoothing)?)
    })
}
