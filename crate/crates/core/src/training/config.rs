use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Number of topics K.
    pub topics: usize,
    /// Hidden units H in every network.
    pub hidden: usize,
    /// Symmetric Dirichlet concentration of the topic prior.
    pub alpha: f64,
    pub batch_size: usize,
    pub iterations: usize,
    /// Critic updates per mapper update.
    pub critic_steps: usize,
    /// Weight-clipping bound for both critics.
    pub clip: f64,
    pub lr_main: f64,
    pub beta1_main: f64,
    pub lr_cls: f64,
    pub beta1_cls: f64,
    /// Balancing target for the forward cycle loss.
    pub lambda1_hat: f64,
    /// Balancing target for the backward cycle loss.
    pub lambda2_hat: f64,
    /// Balancing target for the classification loss.
    pub lambda3_hat: f64,
    pub supervised: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            topics: 20,
            hidden: 100,
            alpha: 0.1,
            batch_size: 64,
            iterations: 5000,
            critic_steps: 5,
            clip: 0.01,
            lr_main: 1e-4,
            beta1_main: 0.5,
            lr_cls: 1e-3,
            beta1_cls: 0.9,
            lambda1_hat: 2.0,
            lambda2_hat: 0.2,
            lambda3_hat: 1.0,
            supervised: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("clip", self.clip),
            ("lr_main", self.lr_main),
            ("lr_cls", self.lr_cls),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("lambda1_hat", self.lambda1_hat),
            ("lambda2_hat", self.lambda2_hat),
            ("lambda3_hat", self.lambda3_hat),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [("beta1_main", self.beta1_main), ("beta1_cls", self.beta1_cls)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {v}")));
            }
        }
        if self.topics == 0 || self.hidden == 0 {
            return Err(Error::Config("topics and hidden must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be >= 2 for batch norm, got {}",
                self.batch_size
            )));
        }
        if self.critic_steps == 0 {
            return Err(Error::Config("critic_steps must be >= 1".into()));
        }
        Ok(())
    }
}
