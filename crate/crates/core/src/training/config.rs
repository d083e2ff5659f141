use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::AdamWConfig;

/// Optimiser, schedule and loss weights of adversarial training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub betas: [f64; 2],
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub lr_init: f64,
    pub lr_decay_per_epoch: f64,
    pub max_steps: u64,
    pub segment_samples: usize,
    pub lambda_fm: f64,
    pub lambda_mel: f64,
    pub seed: u64,
    /// Steps between validation passes (0 disables validation).
    pub validation_interval: u64,
    /// Steps between checkpoints (0 disables periodic checkpoints).
    pub checkpoint_interval: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            betas: [0.8, 0.99],
            adam_eps: 1e-8,
            weight_decay: 0.01,
            lr_init: 2e-4,
            lr_decay_per_epoch: 0.999,
            max_steps: 700_000,
            segment_samples: 8192,
            lambda_fm: 2.0,
            lambda_mel: 45.0,
            seed: 1234,
            validation_interval: 1000,
            checkpoint_interval: 5000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("training: {m}")));
        if self.batch_size == 0 || self.segment_samples == 0 || self.max_steps == 0 {
            return bad("batch_size, segment_samples and max_steps must be positive");
        }
        if !self.betas.iter().all(|b| (0.0..1.0).contains(b)) {
            return bad("betas must lie in [0, 1)");
        }
        let positive = [self.adam_eps, self.lr_init, self.lambda_fm, self.lambda_mel];
        if !positive.iter().all(|v| v.is_finite() && *v > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("learning rate, epsilon and loss weights must be positive");
        }
        if !(self.lr_decay_per_epoch > 0.0 && self.lr_decay_per_epoch <= 1.0) {
            return bad("lr_decay_per_epoch must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig { beta1: self.betas[0], beta2: self.betas[1], eps: self.adam_eps, weight_decay: self.weight_decay }
    }

    pub fn hash(&self) -> String {
        crate::records::config_hash(self)
    }
}

/// Learning rate during `epoch` (0-based): `lr_init · decay^epoch`.
pub fn lr_at(epoch: u64, cfg: &TrainConfig) -> f64 {
    cfg.lr_init * cfg.lr_decay_per_epoch.powf(epoch as f64)
}
