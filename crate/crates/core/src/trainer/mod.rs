//! Training with sentence-level loss upweighting, validation-based or
//! fixed-epoch checkpoint selection, and exact-match evaluation.

mod batching;
mod eval;
mod log;
mod loss;

use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{AdamConfig, OptimizerState};
use crate::synlang::{SentencePair, Token};
use crate::transformer::{ModelConfig, ModelError, ModelParams};

pub use batching::{make_batches, padded_size};
pub use eval::{decode_all, evaluate_split, output_cap, score_outputs, SplitReport};
pub use log::{LogRow, TrainLog};
pub use loss::{batch_loss, batch_loss_and_grads, loss_and_grads_in, loss_graph, LossAndGrads};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at step {step}: loss {loss}")]
    Divergence { step: u64, loss: f32 },
    #[error("sentence {index} needs {tokens} padded tokens, over the batch budget of {budget}")]
    Oversized { index: usize, tokens: usize, budget: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("log: {0}")]
    Csv(#[from] csv::Error),
}

pub type Membership = Arc<dyn Fn(&[Token]) -> bool + Send + Sync>;

/// Loss weight `alpha` for sentences whose source satisfies `membership`.
#[derive(Clone)]
pub struct UpweightConfig {
    pub alpha: f32,
    pub membership: Membership,
}

impl UpweightConfig {
    pub fn new(alpha: f32, membership: impl Fn(&[Token]) -> bool + Send + Sync + 'static) -> Self {
        Self { alpha, membership: Arc::new(membership) }
    }

    /// `alpha = 1` over the empty set: the unweighted loss.
    pub fn none() -> Self {
        Self::new(1.0, |_| false)
    }

    pub fn is_member(&self, src: &[Token]) -> bool {
        (self.membership)(src)
    }

    pub fn weight(&self, src: &[Token]) -> f32 {
        if self.is_member(src) {
            self.alpha
        } else {
            1.0
        }
    }
}

impl fmt::Debug for UpweightConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UpweightConfig").field("alpha", &self.alpha).finish_non_exhaustive()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    Epochs(usize),
    MaxSteps(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Keep the evaluated checkpoint with the lowest validation loss.
    BestValidation,
    /// Keep the parameters at the end of training.
    Final,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stop: StopRule,
    /// Padded tokens per batch, counted as `batch × max(src_len, tgt_len + 1)`.
    pub max_tokens: usize,
    /// Evaluate every this many updates; 0 means once per epoch.
    pub eval_every: u64,
    pub seed: u64,
    pub selection: Selection,
    pub val_fraction: f64,
    /// Drop member sentences from the validation split.
    pub val_general_only: bool,
    /// Validation sentences decoded for the logged accuracies; 0 disables.
    pub eval_accuracy_sentences: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stop: StopRule::Epochs(15),
            max_tokens: 1024,
            eval_every: 0,
            seed: 0,
            selection: Selection::BestValidation,
            val_fraction: 0.1,
            val_general_only: false,
            eval_accuracy_sentences: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        match self.stop {
            StopRule::Epochs(0) | StopRule::MaxSteps(0) => return bad("stopping rule must allow at least one update"),
            _ => {}
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must lie in [0, 1)");
        }
        if self.selection == Selection::BestValidation && self.val_fraction == 0.0 {
            return bad("validation selection needs a validation split");
        }
        Ok(())
    }
}

/// Deterministic stratified split: members and non-members are shuffled
/// separately and `val_fraction` of each (rounded) goes to validation.
pub fn split_train_val(
    pairs: &[SentencePair],
    upweight: &UpweightConfig,
    val_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5151_7a7a);
    let (mut members, mut others): (Vec<usize>, Vec<usize>) =
        (0..pairs.len()).partition(|&i| upweight.is_member(&pairs[i].src));
    let mut train = Vec::new();
    let mut val = Vec::new();
    for group in [&mut members, &mut others] {
        group.shuffle(&mut rng);
        let n_val = (group.len() as f64 * val_fraction).round() as usize;
        val.extend_from_slice(&group[..n_val]);
        train.extend_from_slice(&group[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: TrainLog,
    /// Update count at the selected checkpoint.
    pub selected_step: u64,
    pub selected_val_loss: Option<f64>,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

/// Trains a fresh model initialized from `config.seed`. The split stratifies by `upweight.membership`, which for
/// synthetic data should be the pattern predicate even when `alpha = 1`.
pub fn train(
    pairs: &[SentencePair],
    model: &ModelConfig,
    config: &TrainConfig,
    upweight: &UpweightConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let params = ModelParams::init(model.clone(), config.seed)?;
    train_from(params, pairs, config, upweight)
}

pub fn train_from(
    mut params: ModelParams,
    pairs: &[SentencePair],
    config: &TrainConfig,
    upweight: &UpweightConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let (train_idx, mut val_idx) = split_train_val(pairs, upweight, config.val_fraction, config.seed);
    if config.val_general_only {
        val_idx.retain(|&i| !upweight.is_member(&pairs[i].src));
    }
    if train_idx.is_empty() {
        return Err(TrainError::Config("empty training split".into()));
    }
    let val: Vec<SentencePair> = val_idx.iter().map(|&i| pairs[i].clone()).collect();
    let acc_val: Vec<SentencePair> = val.iter().take(config.eval_accuracy_sentences).cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut opt = OptimizerState::new(config.adam.clone(), &params.tensors);
    let mut log = TrainLog::default();
    let mut best: Option<(f64, u64, ModelParams)> = None;

    let evaluate = |params: &ModelParams,
                    step: u64,
                    lr: f64,
                    train_loss: f64,
                    log: &mut TrainLog|
     -> Result<Option<f64>, TrainError> {
        if val.is_empty() {
            log.rows.push(LogRow { step, lr, train_loss, val_loss: None, comp_acc: None, noncomp_acc: None });
            return Ok(None);
        }
        let val_loss = eval::mean_token_loss(params, &val, config.max_tokens)?;
        let (comp_acc, noncomp_acc) = if acc_val.is_empty() {
            (None, None)
        } else {
            let r = evaluate_split(params, &acc_val, &*upweight.membership, config.max_tokens)?;
            (r.comp_acc, r.noncomp_acc)
        };
        log.rows.push(LogRow { step, lr, train_loss, val_loss: Some(val_loss), comp_acc, noncomp_acc });
        Ok(Some(val_loss))
    };

    let mut consider = |params: &ModelParams, step: u64, val_loss: Option<f64>| {
        if let (Selection::BestValidation, Some(v)) = (config.selection, val_loss) {
            if best.as_ref().map_or(true, |(b, _, _)| v < *b) {
                best = Some((v, step, params.clone()));
            }
        }
    };

    let v0 = evaluate(&params, 0, 0.0, f64::NAN, &mut log)?;
    consider(&params, 0, v0);

    let max_steps = match config.stop {
        StopRule::MaxSteps(n) => n,
        StopRule::Epochs(_) => u64::MAX,
    };
    let epochs = match config.stop {
        StopRule::Epochs(n) => n,
        StopRule::MaxSteps(_) => usize::MAX,
    };
    let mut step = 0u64;
    let mut last_loss = f64::NAN;
    'outer: for _epoch in 0..epochs {
        let batches = make_batches(pairs, &train_idx, config.max_tokens, &mut rng)?;
        for b in &batches {
            let members: Vec<&SentencePair> = b.iter().map(|&i| &pairs[i]).collect();
            let out = batch_loss_and_grads(&params, &members, upweight)?;
            let mean = out.loss / out.target_tokens as f32;
            if !mean.is_finite() {
                return Err(TrainError::Divergence { step: step + 1, loss: mean });
            }
            let scale = 1.0 / out.target_tokens as f32;
            let grads: Vec<Vec<f32>> =
                out.grads.into_iter().map(|g| g.into_iter().map(|v| v * scale).collect()).collect();
            let refs: Vec<&[f32]> = grads.iter().map(Vec::as_slice).collect();
            let lr = opt.adam_step(&mut params.tensors, &refs).map_err(ModelError::from)?;
            step += 1;
            last_loss = mean as f64;
            let eval_now = config.eval_every > 0 && step % config.eval_every == 0;
            if eval_now {
                let v = evaluate(&params, step, lr, last_loss, &mut log)?;
                consider(&params, step, v);
            } else {
                log.rows.push(LogRow {
                    step,
                    lr,
                    train_loss: last_loss,
                    val_loss: None,
                    comp_acc: None,
                    noncomp_acc: None,
                });
            }
            if step >= max_steps {
                break 'outer;
            }
        }
        if config.eval_every == 0 {
            let lr = opt.current_lr();
            let v = evaluate(&params, step, lr, last_loss, &mut log)?;
            consider(&params, step, v);
        }
    }
    if !params.is_finite() {
        return Err(TrainError::Divergence { step, loss: f32::NAN });
    }
    let final_val = log.rows.iter().rev().find(|r| r.step == step).and_then(|r| r.val_loss);
    let (selected_val_loss, selected_step, params) = match best {
        Some((v, s, p)) => (Some(v), s, p),
        None => (final_val, step, params),
    };
    Ok(TrainOutcome { params, log, selected_step, selected_val_loss, train_indices: train_idx, val_indices: val_idx })
}
