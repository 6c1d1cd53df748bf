//! The tipping-point experiment: train one model per (corpus cell, seed) on
//! synthetic data and measure exact-match accuracy on held-out sentences
//! whose sources never occur in training.

mod svg;

use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::synlang::{generate_corpus, is_noncompositional, SentencePair, SynCorpusConfig, SynLangError, SynLangSpec};
use crate::trainer::{evaluate_split, train, Selection, StopRule, TrainConfig, TrainError, UpweightConfig};
use crate::transformer::ModelConfig;

pub use svg::{line_chart, ChartOptions, Point, Series};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Data(#[from] SynLangError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 2+2 layers, width 64.
    #[default]
    Desk,
    /// Width 512 with 3, 8 or 16 layers per side.
    Small,
    Medium,
    Large,
}

impl Preset {
    pub fn model(self, src_vocab: usize, tgt_vocab: usize) -> ModelConfig {
        match self {
            Preset::Desk => ModelConfig::desk(src_vocab, tgt_vocab),
            Preset::Small => ModelConfig::paper_size(3, src_vocab, tgt_vocab),
            Preset::Medium => ModelConfig::paper_size(8, src_vocab, tgt_vocab),
            Preset::Large => ModelConfig::paper_size(16, src_vocab, tgt_vocab),
        }
    }

    pub fn epochs(self) -> usize {
        match self {
            Preset::Desk => 15,
            Preset::Small => 10,
            Preset::Medium => 20,
            Preset::Large => 30,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub n_sentences: usize,
    pub n_noncomp: usize,
}

impl Cell {
    pub fn fraction(&self) -> f64 {
        self.n_noncomp as f64 / self.n_sentences as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub cells: Vec<Cell>,
    pub informative: bool,
    pub preset: Preset,
    /// Overrides the preset's epoch count.
    pub epochs: Option<usize>,
    /// Each seed drives corpus generation, initialization and batching.
    pub seeds: Vec<u64>,
    /// Size and seed of the generated test pool; half of it carries the pattern.
    pub test_sentences: usize,
    pub test_seed: u64,
    pub max_tokens: usize,
    /// Training-time dropout of every model in the sweep.
    pub dropout: f32,
    pub lang: SynLangSpec,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            cells: [100, 1_000, 10_000, 30_000].map(|k| Cell { n_sentences: 100_000, n_noncomp: k }).to_vec(),
            informative: false,
            preset: Preset::Desk,
            epochs: None,
            seeds: (0..5).collect(),
            test_sentences: 4000,
            test_seed: 9999,
            max_tokens: 1024,
            dropout: 0.0,
            lang: SynLangSpec::default(),
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), SweepError> {
        let bad = |m: String| Err(SweepError::Spec(m));
        if self.cells.is_empty() {
            return bad("no cells".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.epochs == Some(0) {
            return bad("epochs must be positive".into());
        }
        if self.test_sentences < 2 {
            return bad("test pool needs at least 2 sentences".into());
        }
        self.lang.validate()?;
        for c in &self.cells {
            if c.n_sentences == 0 || c.n_noncomp > c.n_sentences {
                return bad(format!("infeasible cell {} of {}", c.n_noncomp, c.n_sentences));
            }
        }
        Ok(())
    }

    pub fn epochs(&self) -> usize {
        self.epochs.unwrap_or_else(|| self.preset.epochs())
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            stop: StopRule::Epochs(self.epochs()),
            max_tokens: self.max_tokens,
            seed,
            selection: Selection::Final,
            val_general_only: true,
            ..TrainConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub cell: Cell,
    pub seed: u64,
    pub comp_acc: f64,
    pub noncomp_acc: f64,
    pub n_test_comp: usize,
    pub n_test_noncomp: usize,
    pub steps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub cell: Cell,
    pub seed: u64,
    pub result: Result<RunResult, String>,
}

/// Test pool sentences whose source is absent from `train`.
pub fn novel_test_set(spec: &SweepSpec, train: &[SentencePair]) -> Result<Vec<SentencePair>, SweepError> {
    let cfg = SynCorpusConfig::new(spec.test_sentences, spec.test_sentences / 2, spec.informative, spec.test_seed);
    let pool = generate_corpus(&cfg, &spec.lang)?;
    let seen: HashSet<&[u32]> = train.iter().map(|p| p.src.as_slice()).collect();
    Ok(pool.pairs.into_iter().filter(|p| !seen.contains(p.src.as_slice())).collect())
}

pub fn run_one(spec: &SweepSpec, cell: Cell, seed: u64) -> Result<RunResult, SweepError> {
    let lang = spec.lang.clone();
    let corpus =
        generate_corpus(&SynCorpusConfig::new(cell.n_sentences, cell.n_noncomp, spec.informative, seed), &lang)?;
    let test = novel_test_set(spec, &corpus.pairs)?;
    let max = lang.max_token();
    let (sv, tv) = ModelConfig::vocab_for(max, max);
    let model = ModelConfig { dropout: spec.dropout, ..spec.preset.model(sv, tv) };
    let pattern = lang.clone();
    // Weight 1 everywhere; the predicate only stratifies the split.
    let split_by = UpweightConfig::new(1.0, move |s| is_noncompositional(s, &pattern));
    let out = train(&corpus.pairs, &model, &spec.train_config(seed), &split_by)?;
    let member = |s: &[u32]| is_noncompositional(s, &lang);
    let report = evaluate_split(&out.params, &test, &member, spec.max_tokens)?;
    Ok(RunResult {
        cell,
        seed,
        comp_acc: report.comp_acc.unwrap_or(f64::NAN),
        noncomp_acc: report.noncomp_acc.unwrap_or(f64::NAN),
        n_test_comp: report.n_comp,
        n_test_noncomp: report.n_noncomp,
        steps: out.log.rows.last().map_or(0, |r| r.step),
    })
}

/// Runs every (cell, seed) on `workers` threads. Failures are recorded and
/// the sweep continues; results come back in (cell, seed) spec order
/// whatever the execution order.
pub fn run_sweep(
    spec: &SweepSpec,
    workers: usize,
    on_done: &(dyn Fn(&RunOutcome) + Sync),
) -> Result<Vec<RunOutcome>, SweepError> {
    spec.validate()?;
    let jobs: Vec<(Cell, u64)> = spec.cells.iter().flat_map(|&c| spec.seeds.iter().map(move |&s| (c, s))).collect();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<RunOutcome>>> = Mutex::new(vec![None; jobs.len()]);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(cell, seed)) = jobs.get(i) else { break };
                let result = run_one(spec, cell, seed).map_err(|e| e.to_string());
                let outcome = RunOutcome { cell, seed, result };
                on_done(&outcome);
                slots.lock().expect("result lock")[i] = Some(outcome);
            });
        }
    });
    Ok(slots.into_inner().expect("result lock").into_iter().map(|o| o.expect("every job ran")).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: Cell,
    pub n_runs: usize,
    pub n_failed: usize,
    pub comp_mean: f64,
    pub comp_std: f64,
    pub noncomp_mean: f64,
    pub noncomp_std: f64,
}

/// Mean and population standard deviation (divisor n); NaN for no values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-cell statistics over successful runs, in first-seen cell order.
pub fn summarize(outcomes: &[RunOutcome]) -> Vec<CellSummary> {
    let mut cells: Vec<Cell> = Vec::new();
    for o in outcomes {
        if !cells.contains(&o.cell) {
            cells.push(o.cell);
        }
    }
    cells
        .into_iter()
        .map(|cell| {
            let runs: Vec<&RunOutcome> = outcomes.iter().filter(|o| o.cell == cell).collect();
            let ok: Vec<&RunResult> = runs.iter().filter_map(|o| o.result.as_ref().ok()).collect();
            let (comp_mean, comp_std) = mean_std(&ok.iter().map(|r| r.comp_acc).collect::<Vec<_>>());
            let (noncomp_mean, noncomp_std) = mean_std(&ok.iter().map(|r| r.noncomp_acc).collect::<Vec<_>>());
            CellSummary {
                cell,
                n_runs: runs.len(),
                n_failed: runs.len() - ok.len(),
                comp_mean,
                comp_std,
                noncomp_mean,
                noncomp_std,
            }
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    n_sentences: usize,
    n_noncomp: usize,
    seed: u64,
    comp_acc: Option<f64>,
    noncomp_acc: Option<f64>,
    error: String,
}

/// One row per run: `n_sentences,n_noncomp,seed,comp_acc,noncomp_acc,error`.
pub fn runs_csv(outcomes: &[RunOutcome]) -> Result<Vec<u8>, SweepError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for o in outcomes {
        let (comp_acc, noncomp_acc, error) = match &o.result {
            Ok(r) => (Some(r.comp_acc), Some(r.noncomp_acc), String::new()),
            Err(e) => (None, None, e.clone()),
        };
        w.serialize(CsvRow {
            n_sentences: o.cell.n_sentences,
            n_noncomp: o.cell.n_noncomp,
            seed: o.seed,
            comp_acc,
            noncomp_acc,
            error,
        })?;
    }
    w.into_inner().map_err(|e| SweepError::Io(e.into_error()))
}

pub fn summary_csv(summary: &[CellSummary]) -> Result<Vec<u8>, SweepError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "n_sentences",
        "n_noncomp",
        "fraction",
        "runs",
        "failed",
        "comp_mean",
        "comp_std",
        "noncomp_mean",
        "noncomp_std",
    ])?;
    for s in summary {
        w.write_record([
            s.cell.n_sentences.to_string(),
            s.cell.n_noncomp.to_string(),
            s.cell.fraction().to_string(),
            s.n_runs.to_string(),
            s.n_failed.to_string(),
            s.comp_mean.to_string(),
            s.comp_std.to_string(),
            s.noncomp_mean.to_string(),
            s.noncomp_std.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| SweepError::Io(e.into_error()))
}

/// Accuracy against pattern fraction, one series per corpus size, with
/// standard-deviation error bars.
pub fn summary_chart(summary: &[CellSummary], title: &str) -> String {
    let mut sizes: Vec<usize> = summary.iter().map(|s| s.cell.n_sentences).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let series: Vec<Series> = sizes
        .iter()
        .map(|&n| {
            let mut points: Vec<Point> = summary
                .iter()
                .filter(|s| s.cell.n_sentences == n && s.noncomp_mean.is_finite() && s.cell.n_noncomp > 0)
                .map(|s| Point { x: s.cell.fraction(), y: s.noncomp_mean, err: s.noncomp_std })
                .collect();
            points.sort_by(|a, b| a.x.total_cmp(&b.x));
            Series { label: format!("{n} sentences"), points }
        })
        .collect();
    let opts = ChartOptions {
        title: title.into(),
        x_label: "pattern fraction of training data".into(),
        y_label: "pattern accuracy".into(),
        log_x: true,
        y_range: Some((0.0, 1.0)),
        ..ChartOptions::default()
    };
    line_chart(&series, &opts)
}

#[cfg(test)]
mod tests;
