//! Pre-norm encoder-decoder transformer with sinusoidal positions.

mod decode;
mod forward;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{config_hash, Checkpoint, NumericsError, Scalar, Tensor};

pub use decode::{
    beam_search, beam_search_with, greedy_decode, greedy_decode_batch, greedy_search, sequence_score, BeamHypothesis,
    ModelScorer, NextTokenScorer,
};
pub use forward::{
    encode, forward, forward_graph, next_token_step, Batch, DecoderTrace, Encoded, ForwardOutput, StepOutput,
};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
/// Raw corpus token `t` has model id `t + SPECIALS`.
pub const SPECIALS: usize = 3;

pub fn to_model_ids(raw: &[u32]) -> Vec<usize> {
    raw.iter().map(|&t| t as usize + SPECIALS).collect()
}

/// Inverse of [`to_model_ids`]; special ids are dropped.
pub fn to_raw_tokens(ids: &[usize]) -> Vec<u32> {
    ids.iter().filter(|&&i| i >= SPECIALS).map(|&i| (i - SPECIALS) as u32).collect()
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("sequence of length {len} exceeds max_positions {max}")]
    Overlength { len: usize, max: usize },
    #[error("token id {id} outside vocabulary of {vocab}")]
    UnknownToken { id: usize, vocab: usize },
    #[error("checkpoint does not match model: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ffn: usize,
    pub max_positions: usize,
    pub src_vocab_size: usize,
    pub tgt_vocab_size: usize,
    pub dropout: f32,
    pub label_smoothing: f32,
}

impl ModelConfig {
    /// 2+2 layers, width 64, 4 heads, FFN 256.
    pub fn desk(src_vocab_size: usize, tgt_vocab_size: usize) -> Self {
        Self {
            n_enc_layers: 2,
            n_dec_layers: 2,
            d_model: 64,
            n_heads: 4,
            d_ffn: 256,
            max_positions: 64,
            src_vocab_size,
            tgt_vocab_size,
            dropout: 0.0,
            label_smoothing: 0.1,
        }
    }

    /// Width 512 with 16 heads and the given number of layers on each side.
    pub fn paper_size(layers: usize, src_vocab_size: usize, tgt_vocab_size: usize) -> Self {
        Self {
            n_enc_layers: layers,
            n_dec_layers: layers,
            d_model: 512,
            n_heads: 16,
            d_ffn: 2048,
            max_positions: 64,
            src_vocab_size,
            tgt_vocab_size,
            dropout: 0.0,
            label_smoothing: 0.1,
        }
    }

    /// Smallest vocabularies covering raw tokens `0..=max_src` / `0..=max_tgt`.
    pub fn vocab_for(max_src: u32, max_tgt: u32) -> (usize, usize) {
        (max_src as usize + 1 + SPECIALS, max_tgt as usize + 1 + SPECIALS)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad("d_model must be a positive multiple of n_heads");
        }
        if self.d_ffn == 0 || self.max_positions == 0 {
            return bad("d_ffn and max_positions must be positive");
        }
        if self.src_vocab_size <= SPECIALS || self.tgt_vocab_size <= SPECIALS {
            return bad("vocabularies must include the special tokens plus at least one real token");
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.label_smoothing) {
            return bad("dropout and label_smoothing must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        config_hash(&serde_json::to_value(self).expect("config serializes"))
    }
}

/// Index of every parameter tensor in [`ModelParams::tensors`].
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub src_emb: usize,
    pub tgt_emb: usize,
    pub enc: Vec<EncLayer>,
    pub dec: Vec<DecLayer>,
    pub enc_norm: Norm,
    pub dec_norm: Norm,
    pub out_w: usize,
    pub out_b: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Norm {
    pub gamma: usize,
    pub beta: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Attn {
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Ffn {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct EncLayer {
    pub norm1: Norm,
    pub attn: Attn,
    pub norm2: Norm,
    pub ffn: Ffn,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct DecLayer {
    pub norm1: Norm,
    pub self_attn: Attn,
    pub norm2: Norm,
    pub cross_attn: Attn,
    pub norm3: Norm,
    pub ffn: Ffn,
}

enum Init {
    Glorot,
    Zeros,
    Ones,
}

struct LayoutBuilder {
    specs: Vec<(String, Vec<usize>, Init)>,
}

impl LayoutBuilder {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.specs.push((name, shape, init));
        self.specs.len() - 1
    }

    fn norm(&mut self, prefix: &str, d: usize) -> Norm {
        Norm {
            gamma: self.add(format!("{prefix}.gamma"), vec![d], Init::Ones),
            beta: self.add(format!("{prefix}.beta"), vec![d], Init::Zeros),
        }
    }

    fn linear(&mut self, prefix: &str, d_in: usize, d_out: usize) -> (usize, usize) {
        (
            self.add(format!("{prefix}.weight"), vec![d_in, d_out], Init::Glorot),
            self.add(format!("{prefix}.bias"), vec![d_out], Init::Zeros),
        )
    }

    fn attn(&mut self, prefix: &str, d: usize) -> Attn {
        let (wq, bq) = self.linear(&format!("{prefix}.q"), d, d);
        let (wk, bk) = self.linear(&format!("{prefix}.k"), d, d);
        let (wv, bv) = self.linear(&format!("{prefix}.v"), d, d);
        let (wo, bo) = self.linear(&format!("{prefix}.out"), d, d);
        Attn { wq, bq, wk, bk, wv, bv, wo, bo }
    }

    fn ffn(&mut self, prefix: &str, d: usize, f: usize) -> Ffn {
        let (w1, b1) = self.linear(&format!("{prefix}.fc1"), d, f);
        let (w2, b2) = self.linear(&format!("{prefix}.fc2"), f, d);
        Ffn { w1, b1, w2, b2 }
    }
}

fn build_layout(cfg: &ModelConfig) -> (Layout, Vec<(String, Vec<usize>, Init)>) {
    let d = cfg.d_model;
    let mut b = LayoutBuilder { specs: Vec::new() };
    let src_emb = b.add("encoder.embed".into(), vec![cfg.src_vocab_size, d], Init::Glorot);
    let tgt_emb = b.add("decoder.embed".into(), vec![cfg.tgt_vocab_size, d], Init::Glorot);
    let enc = (0..cfg.n_enc_layers)
        .map(|i| {
            let p = format!("encoder.layers.{i}");
            EncLayer {
                norm1: b.norm(&format!("{p}.attn_norm"), d),
                attn: b.attn(&format!("{p}.self_attn"), d),
                norm2: b.norm(&format!("{p}.ffn_norm"), d),
                ffn: b.ffn(&format!("{p}.ffn"), d, cfg.d_ffn),
            }
        })
        .collect();
    let dec = (0..cfg.n_dec_layers)
        .map(|i| {
            let p = format!("decoder.layers.{i}");
            DecLayer {
                norm1: b.norm(&format!("{p}.self_attn_norm"), d),
                self_attn: b.attn(&format!("{p}.self_attn"), d),
                norm2: b.norm(&format!("{p}.cross_attn_norm"), d),
                cross_attn: b.attn(&format!("{p}.cross_attn"), d),
                norm3: b.norm(&format!("{p}.ffn_norm"), d),
                ffn: b.ffn(&format!("{p}.ffn"), d, cfg.d_ffn),
            }
        })
        .collect();
    let enc_norm = b.norm("encoder.final_norm", d);
    let dec_norm = b.norm("decoder.final_norm", d);
    let (out_w, out_b) = b.linear("decoder.output", d, cfg.tgt_vocab_size);
    (Layout { src_emb, tgt_emb, enc, dec, enc_norm, dec_norm, out_w, out_b }, b.specs)
}

/// All trainable weights of one model, in a fixed layout order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, unit norms; fully determined by `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let (_, specs) = build_layout(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::with_capacity(specs.len());
        let mut tensors = Vec::with_capacity(specs.len());
        for (name, shape, init) in specs {
            let t = match init {
                Init::Zeros => Tensor::zeros(&shape),
                Init::Ones => Tensor::full(&shape, 1.0),
                Init::Glorot => {
                    let limit = (6.0 / (shape[0] + shape[1]) as f64).sqrt() as f32;
                    Tensor::from_fn(&shape, |_| rng.gen_range(-limit..limit))
                }
            };
            names.push(name);
            tensors.push(t);
        }
        Ok(Self { config, names, tensors })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub(crate) fn layout(&self) -> Layout {
        build_layout(&self.config).0
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// Copies of the weights in another precision, in layout order.
    pub fn tensors_as<T: Scalar>(&self) -> Vec<Tensor<T>> {
        self.tensors
            .iter()
            .map(|t| Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| T::lit(v as f64)).collect()).unwrap())
            .collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: serde_json::to_value(&self.config).expect("config serializes"),
            tensors: self.names.iter().cloned().zip(self.tensors.iter().cloned()).collect(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self, ModelError> {
        let config: ModelConfig =
            serde_json::from_value(ck.config).map_err(|e| ModelError::Checkpoint(format!("config: {e}")))?;
        config.validate()?;
        let (_, specs) = build_layout(&config);
        if specs.len() != ck.tensors.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} tensors, found {}",
                specs.len(),
                ck.tensors.len()
            )));
        }
        let mut names = Vec::with_capacity(specs.len());
        let mut tensors = Vec::with_capacity(specs.len());
        for ((name, shape, _), (got_name, t)) in specs.into_iter().zip(ck.tensors) {
            if name != got_name || shape != t.shape() {
                return Err(ModelError::Checkpoint(format!(
                    "tensor {got_name} {:?} where {name} {shape:?} was expected",
                    t.shape()
                )));
            }
            names.push(name);
            tensors.push(t);
        }
        Ok(Self { config, names, tensors })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), ModelError> {
        Ok(self.to_checkpoint().save(path)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ModelError> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }
}

#[cfg(test)]
mod tests;
