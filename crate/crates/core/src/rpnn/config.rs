use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpnnConfig {
    pub state_dim: usize,
    pub action_dim: usize,
    pub encoder_widths: Vec<usize>,
    pub hidden: usize,
    /// Layers whose input and output widths match get a residual connection.
    pub decoder_widths: Vec<usize>,
    pub logvar_min: f64,
    pub logvar_max: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    /// Sequences per optimizer step.
    pub batch_size: usize,
    /// Global gradient-norm clip; 0 disables.
    pub grad_clip: f64,
}

impl RpnnConfig {
    /// Desk-scale network: encoder 64x2, GRU 32, decoder 64x2.
    pub fn desk(state_dim: usize, action_dim: usize) -> Self {
        RpnnConfig {
            state_dim,
            action_dim,
            encoder_widths: vec![64, 64],
            hidden: 32,
            decoder_widths: vec![64, 64],
            logvar_min: -10.0,
            logvar_max: 4.0,
            learning_rate: 3e-4,
            weight_decay: 1e-3,
            patience: 250,
            max_epochs: 2000,
            validation_fraction: 0.10,
            batch_size: 8,
            grad_clip: 10.0,
        }
    }

    /// Full-scale widths: encoder 512x2, GRU 256, eight 512 decoder layers.
    pub fn full(state_dim: usize, action_dim: usize) -> Self {
        RpnnConfig {
            encoder_widths: vec![512, 512],
            hidden: 256,
            decoder_widths: vec![512; 8],
            ..RpnnConfig::desk(state_dim, action_dim)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = self.encoder_widths.iter().chain(&self.decoder_widths);
        if self.state_dim == 0 || self.action_dim == 0 || self.hidden == 0 || widths.clone().any(|&w| w == 0) {
            return Err(Error::Config("all network widths must be at least 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config("validation_fraction must lie in (0, 1)".into()));
        }
        if !(self.logvar_min < self.logvar_max) {
            return Err(Error::Config("log-variance clamp must have min < max".into()));
        }
        if !(self.learning_rate > 0.0) || self.weight_decay < 0.0 || self.batch_size == 0 {
            return Err(Error::Config("learning rate, weight decay and batch size out of range".into()));
        }
        Ok(())
    }
}
