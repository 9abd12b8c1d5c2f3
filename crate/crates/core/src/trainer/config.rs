use serde::{Deserialize, Serialize};

use crate::encoder::ModelConfig;
use crate::error::{Error, Result};
use crate::losses::LossConfig;

/// Statistic used to pick the returned epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Lowest validation CCC loss.
    #[default]
    Loss,
    /// Highest mean validation CCC.
    Ccc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    /// Encoder parameters of audio-only models train at `lr / encoder_lr_divisor`.
    pub encoder_lr_divisor: f64,
    pub lambda: f64,
    pub tau: f64,
    pub alpha: [f64; 3],
    pub seed: u64,
    pub selection: Selection,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub embed_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 50,
            lr: 5e-4,
            plateau_factor: 0.75,
            plateau_patience: 2,
            encoder_lr_divisor: 4.0,
            lambda: 30.0,
            tau: 2.0,
            alpha: [1.0; 3],
            seed: 0,
            selection: Selection::Loss,
            hidden_dim: 128,
            num_layers: 2,
            embed_dim: 128,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.batch_size < 2 {
            return bad(format!("batch_size must be >= 2, got {}", self.batch_size));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad(format!("plateau_factor must lie in (0, 1), got {}", self.plateau_factor));
        }
        if !(self.encoder_lr_divisor > 0.0 && self.encoder_lr_divisor.is_finite()) {
            return bad(format!("encoder_lr_divisor must be positive, got {}", self.encoder_lr_divisor));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if self.hidden_dim == 0 || self.num_layers == 0 || self.embed_dim == 0 {
            return bad("hidden_dim, num_layers and embed_dim must be positive".into());
        }
        self.loss_config().validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            alpha: self.alpha,
            lambda: self.lambda,
        }
    }

    /// Applies this config's layer sizes to `base`.
    pub fn model_config(&self, base: ModelConfig) -> ModelConfig {
        ModelConfig {
            hidden_dim: self.hidden_dim,
            num_layers: self.num_layers,
            embed_dim: self.embed_dim,
            ..base
        }
    }
}
