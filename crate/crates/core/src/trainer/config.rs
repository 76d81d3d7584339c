use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::DEFAULT_LAMBDA_GP;
use crate::models::{GanKind, CRITIC_DROPOUT};

/// Batches larger than this were observed to hurt sample quality.
pub const RECOMMENDED_MAX_BATCH: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanTrainConfig {
    pub gan_kind: GanKind,
    pub class_name: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Critic updates per generator update (WGAN-GP only).
    pub n_critic: usize,
    pub lambda_gp: f64,
    pub seed: u64,
    /// Latent size; `None` picks the architecture default (100 or 128).
    pub z_dim: Option<i64>,
    pub critic_dropout: f64,
    /// Write a checkpoint every this many epochs (0 = only the final one).
    pub checkpoint_every: usize,
    /// Sample-grid snapshot shape written next to each checkpoint.
    pub snapshot_grid: (usize, usize),
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        GanTrainConfig {
            gan_kind: GanKind::Dcgan,
            class_name: String::new(),
            epochs: 300,
            batch_size: 16,
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            n_critic: 5,
            lambda_gp: DEFAULT_LAMBDA_GP,
            seed: 0,
            z_dim: None,
            critic_dropout: CRITIC_DROPOUT,
            checkpoint_every: 50,
            snapshot_grid: (4, 4),
        }
    }
}

impl GanTrainConfig {
    pub fn new(gan_kind: GanKind, class_name: impl Into<String>) -> Self {
        GanTrainConfig {
            gan_kind,
            class_name: class_name.into(),
            ..Default::default()
        }
    }

    pub fn z_dim(&self) -> i64 {
        self.z_dim.unwrap_or_else(|| self.gan_kind.default_z_dim())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.class_name.is_empty() {
            return bad("class_name is required".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.n_critic == 0 {
            return bad("n_critic must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.lambda_gp >= 0.0 && self.lambda_gp.is_finite()) {
            return bad(format!("lambda_gp must be >= 0, got {}", self.lambda_gp));
        }
        if !(0.0..1.0).contains(&self.critic_dropout) {
            return bad(format!("critic_dropout must lie in [0, 1), got {}", self.critic_dropout));
        }
        if self.z_dim() < 1 {
            return bad("z_dim must be >= 1".into());
        }
        Ok(())
    }

    /// Non-fatal configuration concerns.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.batch_size > RECOMMENDED_MAX_BATCH {
            out.push(format!(
                "batch size {} exceeds {RECOMMENDED_MAX_BATCH}; larger batches degraded sample quality",
                self.batch_size
            ));
        }
        out
    }
}
