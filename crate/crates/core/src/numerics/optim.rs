use serde::{Deserialize, Serialize};

use super::{NumericsError, Tensor};

/// Adam and inverse-square-root schedule hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub base_lr: f64,
    pub warmup_updates: u64,
    pub warmup_lr: f64,
    pub min_lr: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.98, eps: 1e-8, base_lr: 1e-4, warmup_updates: 4000, warmup_lr: 1e-7, min_lr: 1e-9 }
    }
}

impl AdamConfig {
    /// Linear warmup from `warmup_lr` to `base_lr`, then
    /// `base_lr·sqrt(warmup/step)`, never below `min_lr`.
    pub fn lr_at(&self, step: u64) -> f64 {
        let lr = if self.warmup_updates > 0 && step < self.warmup_updates {
            let frac = step as f64 / self.warmup_updates as f64;
            self.warmup_lr + (self.base_lr - self.warmup_lr) * frac
        } else if step == 0 {
            self.base_lr
        } else {
            self.base_lr * (self.warmup_updates.max(1) as f64 / step as f64).sqrt().min(1.0)
        };
        lr.max(self.min_lr)
    }
}

/// Per-parameter moment buffers plus the update counter.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        Self {
            config,
            step: 0,
            first: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            second: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    /// Number of updates applied so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Learning rate the next update will use.
    pub fn current_lr(&self) -> f64 {
        self.config.lr_at(self.step + 1)
    }

    /// One bias-corrected Adam update. Returns the learning rate used.
    pub fn adam_step(&mut self, params: &mut [Tensor], grads: &[&[f32]]) -> Result<f64, NumericsError> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "adam",
                detail: format!("{} params, {} grads, state for {}", params.len(), grads.len(), self.first.len()),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != self.first[i].len() {
                return Err(NumericsError::ShapeMismatch {
                    op: "adam",
                    detail: format!("parameter {i}: {} values, gradient {}", p.len(), g.len()),
                });
            }
        }
        self.step += 1;
        let lr = self.config.lr_at(self.step);
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step.min(i32::MAX as u64) as i32);
        let step_size = (lr / bc1) as f32;
        let bc2_sqrt = bc2.sqrt() as f32;
        let (b1, b2, eps) = (c.beta1 as f32, c.beta2 as f32, c.eps as f32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.first.iter_mut().zip(self.second.iter_mut())) {
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                *w -= step_size * *mi / (vi.sqrt() / bc2_sqrt + eps);
            }
        }
        Ok(lr)
    }
}
