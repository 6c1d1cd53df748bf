//! Dense fp32 tensors, reverse-mode autodiff, Adam and checkpoints.

mod checkpoint;
mod gemm;
mod graph;
mod optim;
mod scalar;
mod tensor;

#[cfg(test)]
mod tests;

pub use checkpoint::{config_hash, Checkpoint, CheckpointHeader, TensorEntry, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use graph::{AttentionSpec, Graph, NodeId, LAYER_NORM_EPS};
pub use optim::{AdamConfig, OptimizerState};
pub use scalar::Scalar;
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("index {index} out of range for size {bound}")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward already ran on this graph")]
    BackwardTwice,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Element-wise `−Σ_v q(v)·log p(v)` for a single logit row, with
/// `q = (1−ε)·onehot(target) + ε/V`. Scalar convenience over the graph op.
pub fn cross_entropy_label_smoothed(logits: &[f32], target: usize, smoothing: f32) -> Result<f32, NumericsError> {
    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![1, logits.len()], logits.to_vec())?);
    let loss = g.cross_entropy(x, &[target], &[1.0], smoothing)?;
    Ok(g.value(loss).item())
}
