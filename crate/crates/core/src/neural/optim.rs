use super::{Model, ModelError};
use crate::vocab::TokenId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub lr0: f64,
    /// Step at which the rate reaches its floor of `0.1 * lr0`.
    pub decay_steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl OptimizerConfig {
    pub fn pretrain() -> Self {
        OptimizerConfig { lr0: 5e-4, decay_steps: 100_000, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }

    pub fn finetune() -> Self {
        OptimizerConfig { lr0: 1e-4, ..Self::pretrain() }
    }
}

/// Linear decay from `lr0` to `0.1 * lr0` over `decay_steps`, constant after.
pub fn lr_at(step: u64, lr0: f64, decay_steps: u64) -> f64 {
    if decay_steps == 0 || step >= decay_steps {
        return 0.1 * lr0;
    }
    lr0 * (1.0 - 0.9 * step as f64 / decay_steps as f64)
}

/// AdamW with bias-corrected moments and decoupled decay on dense weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub config: OptimizerConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Updates applied so far.
    pub step: u64,
    decay: Vec<bool>,
}

impl AdamW {
    pub fn new(config: OptimizerConfig, model: &Model) -> Self {
        let n = model.num_params();
        AdamW { config, m: vec![0.0; n], v: vec![0.0; n], step: 0, decay: model.layout.decay_mask() }
    }

    pub(crate) fn with_state(config: OptimizerConfig, model: &Model, m: Vec<f64>, v: Vec<f64>, step: u64) -> Self {
        AdamW { config, m, v, step, decay: model.layout.decay_mask() }
    }

    pub fn current_lr(&self) -> f64 {
        lr_at(self.step, self.config.lr0, self.config.decay_steps)
    }

    /// Applies one update with the given gradients. Returns the rate used.
    pub fn apply(&mut self, params: &mut [f64], grads: &[f64]) -> f64 {
        let c = self.config;
        let lr = self.current_lr();
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            if self.decay[i] {
                params[i] *= 1.0 - lr * c.weight_decay;
            }
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + c.eps);
        }
        lr
    }

    /// Loss, gradients and update on one batch. A non-finite loss leaves the
    /// model and optimizer untouched.
    pub fn train_step(&mut self, model: &mut Model, batch: &[&[TokenId]]) -> Result<(f64, f64), ModelError> {
        let (loss, grads) = model.loss_and_grads(batch)?;
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(ModelError::NonFiniteLoss(loss));
        }
        let lr = self.apply(&mut model.params, &grads);
        Ok((loss, lr))
    }
}
