use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Attn, Ffn, Layout, ModelConfig, ModelError, ModelParams, Norm, BOS, EOS, PAD};
use crate::numerics::{AttentionSpec, Graph, NodeId, Scalar, Tensor};

/// A padded teacher-forcing batch in model token ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub batch: usize,
    pub src_len: usize,
    pub tgt_len: usize,
    /// `batch * src_len`, right-padded with `PAD`.
    pub src: Vec<usize>,
    /// `BOS y₁ … yₙ`, right-padded.
    pub tgt_in: Vec<usize>,
    /// `y₁ … yₙ EOS`, right-padded.
    pub tgt_out: Vec<usize>,
}

impl Batch {
    /// Builds a batch from `(source, target)` pairs without BOS/EOS.
    pub fn new<S: AsRef<[usize]>, U: AsRef<[usize]>>(pairs: &[(S, U)]) -> Self {
        let batch = pairs.len();
        let src_len = pairs.iter().map(|(s, _)| s.as_ref().len()).max().unwrap_or(0);
        let tgt_len = pairs.iter().map(|(_, t)| t.as_ref().len() + 1).max().unwrap_or(0);
        let mut src = vec![PAD; batch * src_len];
        let mut tgt_in = vec![PAD; batch * tgt_len];
        let mut tgt_out = vec![PAD; batch * tgt_len];
        for (b, (s, t)) in pairs.iter().enumerate() {
            let (s, t) = (s.as_ref(), t.as_ref());
            src[b * src_len..b * src_len + s.len()].copy_from_slice(s);
            tgt_in[b * tgt_len] = BOS;
            tgt_in[b * tgt_len + 1..b * tgt_len + 1 + t.len()].copy_from_slice(t);
            tgt_out[b * tgt_len..b * tgt_len + t.len()].copy_from_slice(t);
            tgt_out[b * tgt_len + t.len()] = EOS;
        }
        Self { batch, src_len, tgt_len, src, tgt_in, tgt_out }
    }

    /// Padded footprint in tokens: `batch × max(src_len, tgt_len)`.
    pub fn padded_tokens(&self) -> usize {
        self.batch * self.src_len.max(self.tgt_len)
    }

    /// Number of non-pad target positions (predicted tokens incl. EOS).
    pub fn target_tokens(&self) -> usize {
        self.tgt_out.iter().filter(|&&t| t != PAD).count()
    }
}

/// Per-position hidden vectors captured at the input of the last decoder
/// layer's feedforward sublayer.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderTrace {
    /// `[positions, d_model]`.
    pub hidden: Tensor,
}

/// Node handles produced by [`forward_graph`].
#[derive(Clone, Copy, Debug)]
pub struct ForwardOutput {
    /// `[batch * tgt_len, tgt_vocab]`.
    pub logits: NodeId,
    /// `[batch * tgt_len, d_model]`, see [`DecoderTrace`].
    pub ffn_input: NodeId,
}

pub(crate) fn sinusoid<T: Scalar>(positions: usize, d: usize) -> Vec<T> {
    let mut out = vec![T::zero(); positions * d];
    for pos in 0..positions {
        for i in 0..d / 2 {
            let freq = 10000f64.powf(-((2 * i) as f64) / d as f64);
            let angle = pos as f64 * freq;
            out[pos * d + 2 * i] = T::lit(angle.sin());
            out[pos * d + 2 * i + 1] = T::lit(angle.cos());
        }
    }
    out
}

struct Ctx<'a, T: Scalar> {
    p: &'a [NodeId],
    cfg: &'a ModelConfig,
    dropout: Option<&'a mut ChaCha8Rng>,
    _t: std::marker::PhantomData<T>,
}

impl<T: Scalar> Ctx<'_, T> {
    fn norm(&self, g: &mut Graph<T>, x: NodeId, n: Norm) -> Result<NodeId, ModelError> {
        Ok(g.layer_norm(x, self.p[n.gamma], self.p[n.beta])?)
    }

    fn dropout(&mut self, g: &mut Graph<T>, x: NodeId) -> Result<NodeId, ModelError> {
        let rate = self.cfg.dropout;
        let Some(rng) = self.dropout.as_deref_mut().filter(|_| rate > 0.0) else {
            return Ok(x);
        };
        let keep = T::lit(1.0 / (1.0 - rate as f64));
        let shape = g.value(x).shape().to_vec();
        let mask = Tensor::from_fn(&shape, |_| if rng.gen::<f32>() < rate { T::zero() } else { keep });
        let m = g.input(mask);
        Ok(g.mul(x, m)?)
    }

    #[allow(clippy::too_many_arguments)]
    fn attention(
        &mut self,
        g: &mut Graph<T>,
        query_in: NodeId,
        kv_in: NodeId,
        a: Attn,
        spec: AttentionSpec,
    ) -> Result<NodeId, ModelError> {
        let p = self.p;
        let q = g.linear(query_in, p[a.wq], Some(p[a.bq]))?;
        let k = g.linear(kv_in, p[a.wk], Some(p[a.bk]))?;
        let v = g.linear(kv_in, p[a.wv], Some(p[a.bv]))?;
        let ctx = g.attention(q, k, v, spec)?;
        let out = g.linear(ctx, p[a.wo], Some(p[a.bo]))?;
        self.dropout(g, out)
    }

    fn ffn(&mut self, g: &mut Graph<T>, x: NodeId, f: Ffn) -> Result<NodeId, ModelError> {
        let p = self.p;
        let h = g.linear(x, p[f.w1], Some(p[f.b1]))?;
        let h = g.relu(h);
        let out = g.linear(h, p[f.w2], Some(p[f.b2]))?;
        self.dropout(g, out)
    }

    fn embed(
        &mut self,
        g: &mut Graph<T>,
        table: NodeId,
        ids: &[usize],
        batch: usize,
        len: usize,
    ) -> Result<NodeId, ModelError> {
        let d = self.cfg.d_model;
        let e = g.embedding(table, ids)?;
        let e = g.scale(e, T::lit((d as f64).sqrt()));
        let pe = sinusoid::<T>(len, d);
        let mut full = Vec::with_capacity(batch * len * d);
        for _ in 0..batch {
            full.extend_from_slice(&pe);
        }
        let pe = g.input(Tensor::new(vec![batch * len, d], full)?);
        let x = g.add(e, pe)?;
        self.dropout(g, x)
    }
}

fn check_ids(ids: &[usize], vocab: usize) -> Result<(), ModelError> {
    match ids.iter().find(|&&i| i >= vocab) {
        Some(&id) => Err(ModelError::UnknownToken { id, vocab }),
        None => Ok(()),
    }
}

fn encode_nodes<T: Scalar>(
    g: &mut Graph<T>,
    ctx: &mut Ctx<'_, T>,
    layout: &Layout,
    src: &[usize],
    batch: usize,
    src_len: usize,
) -> Result<(NodeId, Vec<bool>), ModelError> {
    let cfg = ctx.cfg;
    if src_len > cfg.max_positions {
        return Err(ModelError::Overlength { len: src_len, max: cfg.max_positions });
    }
    check_ids(src, cfg.src_vocab_size)?;
    let pad: Vec<bool> = src.iter().map(|&t| t == PAD).collect();
    let mut x = ctx.embed(g, ctx.p[layout.src_emb], src, batch, src_len)?;
    for layer in &layout.enc {
        let h = ctx.norm(g, x, layer.norm1)?;
        let spec = AttentionSpec {
            batch,
            q_len: src_len,
            kv_len: src_len,
            heads: cfg.n_heads,
            causal: false,
            key_padding: pad.clone(),
        };
        let a = ctx.attention(g, h, h, layer.attn, spec)?;
        x = g.add(x, a)?;
        let h = ctx.norm(g, x, layer.norm2)?;
        let f = ctx.ffn(g, h, layer.ffn)?;
        x = g.add(x, f)?;
    }
    let memory = ctx.norm(g, x, layout.enc_norm)?;
    Ok((memory, pad))
}

#[allow(clippy::too_many_arguments)]
fn decode_nodes<T: Scalar>(
    g: &mut Graph<T>,
    ctx: &mut Ctx<'_, T>,
    layout: &Layout,
    memory: NodeId,
    src_pad: &[bool],
    src_len: usize,
    tgt_in: &[usize],
    batch: usize,
    tgt_len: usize,
) -> Result<ForwardOutput, ModelError> {
    let cfg = ctx.cfg;
    if tgt_len > cfg.max_positions {
        return Err(ModelError::Overlength { len: tgt_len, max: cfg.max_positions });
    }
    check_ids(tgt_in, cfg.tgt_vocab_size)?;
    let tgt_pad: Vec<bool> = tgt_in.iter().map(|&t| t == PAD).collect();
    let mut y = ctx.embed(g, ctx.p[layout.tgt_emb], tgt_in, batch, tgt_len)?;
    let mut ffn_input = None;
    for layer in &layout.dec {
        let h = ctx.norm(g, y, layer.norm1)?;
        let spec = AttentionSpec {
            batch,
            q_len: tgt_len,
            kv_len: tgt_len,
            heads: cfg.n_heads,
            causal: true,
            key_padding: tgt_pad.clone(),
        };
        let a = ctx.attention(g, h, h, layer.self_attn, spec)?;
        y = g.add(y, a)?;
        let h = ctx.norm(g, y, layer.norm2)?;
        let spec = AttentionSpec {
            batch,
            q_len: tgt_len,
            kv_len: src_len,
            heads: cfg.n_heads,
            causal: false,
            key_padding: src_pad.to_vec(),
        };
        let a = ctx.attention(g, h, memory, layer.cross_attn, spec)?;
        y = g.add(y, a)?;
        let h = ctx.norm(g, y, layer.norm3)?;
        ffn_input = Some(h);
        let f = ctx.ffn(g, h, layer.ffn)?;
        y = g.add(y, f)?;
    }
    let out = ctx.norm(g, y, layout.dec_norm)?;
    let logits = g.linear(out, ctx.p[layout.out_w], Some(ctx.p[layout.out_b]))?;
    // With no decoder layers the trace falls back to the final normalized state.
    Ok(ForwardOutput { logits, ffn_input: ffn_input.unwrap_or(out) })
}

/// Teacher-forced forward pass on an existing graph. `param_nodes` must hold
/// the model's tensors in layout order (see [`ModelParams::tensors`]).
/// Passing an RNG enables dropout at the configured rate.
pub fn forward_graph<T: Scalar>(
    g: &mut Graph<T>,
    param_nodes: &[NodeId],
    params: &ModelParams,
    batch: &Batch,
    dropout: Option<&mut ChaCha8Rng>,
) -> Result<ForwardOutput, ModelError> {
    let layout = params.layout();
    let mut ctx = Ctx { p: param_nodes, cfg: &params.config, dropout, _t: std::marker::PhantomData };
    let (memory, src_pad) = encode_nodes(g, &mut ctx, &layout, &batch.src, batch.batch, batch.src_len)?;
    decode_nodes(g, &mut ctx, &layout, memory, &src_pad, batch.src_len, &batch.tgt_in, batch.batch, batch.tgt_len)
}

fn inference_params(g: &mut Graph<f32>, params: &ModelParams) -> Vec<NodeId> {
    params.tensors.iter().map(|t| g.input(t.clone())).collect()
}

/// Logits `[len(tgt_prefix), tgt_vocab]` for one sentence plus its trace.
/// `tgt_prefix` must start with BOS.
pub fn forward(
    params: &ModelParams,
    src: &[usize],
    tgt_prefix: &[usize],
) -> Result<(Tensor, DecoderTrace), ModelError> {
    let mut g = Graph::<f32>::new();
    let p = inference_params(&mut g, params);
    let layout = params.layout();
    let mut ctx = Ctx { p: &p, cfg: &params.config, dropout: None, _t: std::marker::PhantomData };
    let (memory, pad) = encode_nodes(&mut g, &mut ctx, &layout, src, 1, src.len())?;
    let out = decode_nodes(&mut g, &mut ctx, &layout, memory, &pad, src.len(), tgt_prefix, 1, tgt_prefix.len())?;
    Ok((g.value(out.logits).clone(), DecoderTrace { hidden: g.value(out.ffn_input).clone() }))
}

/// Encoder states for a batch of sources, reusable across decode steps.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub batch: usize,
    pub src_len: usize,
    /// `[batch * src_len, d_model]`.
    pub memory: Tensor,
    pub src_pad: Vec<bool>,
}

impl Encoded {
    /// Rows reordered / repeated by source index, e.g. to expand a beam.
    pub fn select(&self, rows: &[usize]) -> Encoded {
        let d = self.memory.last_dim();
        let block = self.src_len * d;
        let mut data = Vec::with_capacity(rows.len() * block);
        let mut pad = Vec::with_capacity(rows.len() * self.src_len);
        for &r in rows {
            data.extend_from_slice(&self.memory.data()[r * block..(r + 1) * block]);
            pad.extend_from_slice(&self.src_pad[r * self.src_len..(r + 1) * self.src_len]);
        }
        Encoded {
            batch: rows.len(),
            src_len: self.src_len,
            memory: Tensor::new(vec![rows.len() * self.src_len, d], data).expect("consistent rows"),
            src_pad: pad,
        }
    }
}

pub fn encode(params: &ModelParams, srcs: &[Vec<usize>]) -> Result<Encoded, ModelError> {
    let batch = srcs.len();
    let src_len = srcs.iter().map(Vec::len).max().unwrap_or(0);
    let mut ids = vec![PAD; batch * src_len];
    for (b, s) in srcs.iter().enumerate() {
        ids[b * src_len..b * src_len + s.len()].copy_from_slice(s);
    }
    let mut g = Graph::<f32>::new();
    let p = inference_params(&mut g, params);
    let layout = params.layout();
    let mut ctx = Ctx { p: &p, cfg: &params.config, dropout: None, _t: std::marker::PhantomData };
    let (memory, src_pad) = encode_nodes(&mut g, &mut ctx, &layout, &ids, batch, src_len)?;
    Ok(Encoded { batch, src_len, memory: g.value(memory).clone(), src_pad })
}

/// Next-token logits and trace vector at the last position of each prefix.
#[derive(Clone, Debug)]
pub struct StepOutput {
    /// `[batch, tgt_vocab]`.
    pub logits: Tensor,
    /// `[batch, d_model]`.
    pub hidden: Tensor,
}

/// Runs the decoder over equal-length prefixes (row `b` attends to source
/// row `b` of `enc`) and returns the outputs at the final position.
pub fn next_token_step(params: &ModelParams, enc: &Encoded, prefixes: &[Vec<usize>]) -> Result<StepOutput, ModelError> {
    let batch = prefixes.len();
    assert_eq!(batch, enc.batch, "one encoded source per prefix");
    let len = prefixes.first().map_or(0, Vec::len);
    assert!(prefixes.iter().all(|p| p.len() == len), "prefixes must share a length");
    let ids: Vec<usize> = prefixes.concat();
    let mut g = Graph::<f32>::new();
    let p = inference_params(&mut g, params);
    let layout = params.layout();
    let mut ctx = Ctx { p: &p, cfg: &params.config, dropout: None, _t: std::marker::PhantomData };
    let memory = g.input(enc.memory.clone());
    let out = decode_nodes(&mut g, &mut ctx, &layout, memory, &enc.src_pad, enc.src_len, &ids, batch, len)?;
    let pick = |t: &Tensor| {
        let w = t.last_dim();
        let mut data = Vec::with_capacity(batch * w);
        for b in 0..batch {
            data.extend_from_slice(t.row(b * len + len - 1));
        }
        Tensor::new(vec![batch, w], data).expect("consistent rows")
    };
    Ok(StepOutput { logits: pick(g.value(out.logits)), hidden: pick(g.value(out.ffn_input)) })
}
