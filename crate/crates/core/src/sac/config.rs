use serde::{Deserialize, Serialize};

use super::SacError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub gamma: f64,
    pub tau: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Environment steps between update bursts.
    pub train_freq: u64,
    /// Gradient steps per burst.
    pub gradient_steps: usize,
    /// Uniform-random warm-up steps before the first update.
    pub learning_starts: u64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_alpha: f64,
    /// Defaults to minus the action dimension.
    pub target_entropy: Option<f64>,
    pub init_log_alpha: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub log_std_min: f64,
    pub log_std_max: f64,
    pub output_gain: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.97,
            tau: 0.005,
            buffer_capacity: 100_000,
            batch_size: 256,
            train_freq: 100,
            gradient_steps: 200,
            learning_starts: 1000,
            lr_actor: 3e-4,
            lr_critic: 3e-4,
            lr_alpha: 3e-4,
            target_entropy: None,
            init_log_alpha: 0.0,
            actor_hidden: vec![256; 3],
            critic_hidden: vec![128; 3],
            log_std_min: -20.0,
            log_std_max: 2.0,
            output_gain: 1e-2,
        }
    }
}

impl SacConfig {
    pub fn target_entropy_for(&self, action_dim: usize) -> f64 {
        self.target_entropy.unwrap_or(-(action_dim as f64))
    }

    pub fn validate(&self) -> Result<(), SacError> {
        let bad =
            |field: &'static str, reason: &str| Err(SacError::InvalidConfig { field, reason: reason.to_string() });
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma", "must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau", "must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            return bad("batch_size", "must be positive and at most buffer_capacity");
        }
        if self.train_freq == 0 {
            return bad("train_freq", "must be positive");
        }
        for (field, lr) in [("lr_actor", self.lr_actor), ("lr_critic", self.lr_critic), ("lr_alpha", self.lr_alpha)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(field, "must be positive");
            }
        }
        if self.actor_hidden.is_empty() || self.actor_hidden.contains(&0) {
            return bad("actor_hidden", "needs at least one non-empty hidden layer");
        }
        if self.critic_hidden.is_empty() || self.critic_hidden.contains(&0) {
            return bad("critic_hidden", "needs at least one non-empty hidden layer");
        }
        if self.log_std_min >= self.log_std_max {
            return bad("log_std_min", "must be below log_std_max");
        }
        Ok(())
    }
}
