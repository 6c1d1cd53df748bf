use std::borrow::Borrow;

use super::{TrainError, UpweightConfig};
use crate::numerics::{Graph, NodeId, Scalar};
use crate::synlang::SentencePair;
use crate::transformer::{forward_graph, to_model_ids, Batch, ModelError, ModelParams, PAD};

fn model_batch<P: Borrow<SentencePair>>(pairs: &[P]) -> Batch {
    let ids: Vec<(Vec<usize>, Vec<usize>)> =
        pairs.iter().map(|p| (to_model_ids(&p.borrow().src), to_model_ids(&p.borrow().tgt))).collect();
    Batch::new(&ids)
}

/// Builds the weighted loss on `g`: the sum over sentences of the
/// token-summed label-smoothed cross-entropy, multiplied by `alpha` for
/// member sentences. PAD positions carry weight 0.
pub fn loss_graph<T: Scalar, P: Borrow<SentencePair>>(
    g: &mut Graph<T>,
    param_nodes: &[NodeId],
    params: &ModelParams,
    pairs: &[P],
    upweight: &UpweightConfig,
) -> Result<(NodeId, usize), ModelError> {
    let batch = model_batch(pairs);
    let out = forward_graph(g, param_nodes, params, &batch, None)?;
    let weights: Vec<T> = pairs
        .iter()
        .enumerate()
        .flat_map(|(b, p)| {
            let w = upweight.weight(&p.borrow().src);
            batch.tgt_out[b * batch.tgt_len..(b + 1) * batch.tgt_len].iter().map(move |&t| {
                if t == PAD {
                    T::zero()
                } else {
                    T::lit(w as f64)
                }
            })
        })
        .collect();
    let smoothing = T::lit(params.config.label_smoothing as f64);
    let loss = g.cross_entropy(out.logits, &batch.tgt_out, &weights, smoothing)?;
    Ok((loss, batch.target_tokens()))
}

pub struct LossAndGrads {
    /// Weighted token-summed loss.
    pub loss: f32,
    /// Non-pad target positions, EOS included.
    pub target_tokens: usize,
    /// One gradient per parameter tensor, in layout order.
    pub grads: Vec<Vec<f32>>,
}

/// Weighted loss of a nonempty batch (see [`loss_graph`]).
pub fn batch_loss<P: Borrow<SentencePair>>(
    params: &ModelParams,
    pairs: &[P],
    upweight: &UpweightConfig,
) -> Result<f32, TrainError> {
    if pairs.is_empty() {
        return Err(TrainError::Config("empty batch".into()));
    }
    let mut g = Graph::<f32>::new();
    let nodes: Vec<NodeId> = params.tensors.iter().map(|t| g.input(t.clone())).collect();
    let (loss, _) = loss_graph(&mut g, &nodes, params, pairs, upweight)?;
    Ok(g.value(loss).item())
}

pub fn batch_loss_and_grads<P: Borrow<SentencePair>>(
    params: &ModelParams,
    pairs: &[P],
    upweight: &UpweightConfig,
) -> Result<LossAndGrads, TrainError> {
    let (loss, target_tokens, grads) = loss_and_grads_in::<f32, P>(params, pairs, upweight)?;
    Ok(LossAndGrads { loss, target_tokens, grads })
}

/// Loss, target token count and gradients computed in precision `T`.
pub fn loss_and_grads_in<T: Scalar, P: Borrow<SentencePair>>(
    params: &ModelParams,
    pairs: &[P],
    upweight: &UpweightConfig,
) -> Result<(T, usize, Vec<Vec<T>>), TrainError> {
    if pairs.is_empty() {
        return Err(TrainError::Config("empty batch".into()));
    }
    let mut g = Graph::<T>::new();
    let nodes: Vec<NodeId> = params.tensors_as::<T>().into_iter().map(|t| g.param(t)).collect();
    let (loss, target_tokens) = loss_graph(&mut g, &nodes, params, pairs, upweight)?;
    g.backward(loss).map_err(ModelError::from)?;
    let grads = nodes
        .iter()
        .zip(&params.tensors)
        .map(|(&n, t)| g.grad(n).map_or_else(|| vec![T::zero(); t.len()], <[T]>::to_vec))
        .collect();
    Ok((g.value(loss).item(), target_tokens, grads))
}
