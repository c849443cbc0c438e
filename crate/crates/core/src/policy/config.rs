use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Network dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// Actions per predicted chunk.
    pub chunk: usize,
    pub latent_dim: usize,
    pub visual_resolution: usize,
    /// Side of the square patches averaged from the visual image.
    pub visual_patch: usize,
    pub tactile_height: usize,
    pub tactile_width: usize,
    pub tactile_patch: usize,
    pub visual_embed: usize,
    pub tactile_embed: usize,
    pub kin_embed: usize,
    pub encoder_hidden: usize,
    pub decoder_hidden: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            chunk: 20,
            latent_dim: 8,
            visual_resolution: 64,
            visual_patch: 8,
            tactile_height: 32,
            tactile_width: 32,
            tactile_patch: 4,
            visual_embed: 32,
            tactile_embed: 16,
            kin_embed: 16,
            encoder_hidden: 64,
            decoder_hidden: 128,
        }
    }
}

pub const ACTION_DIM: usize = 4;
pub const KIN_DIM: usize = 4;

impl PolicyConfig {
    pub fn visual_features(&self) -> usize {
        (self.visual_resolution / self.visual_patch).pow(2)
    }

    pub fn tactile_features(&self) -> usize {
        (self.tactile_height / self.tactile_patch) * (self.tactile_width / self.tactile_patch)
    }

    pub fn validate(&self) -> Result<()> {
        let nonzero = [
            self.chunk,
            self.latent_dim,
            self.visual_patch,
            self.tactile_patch,
            self.visual_embed,
            self.tactile_embed,
            self.kin_embed,
            self.encoder_hidden,
            self.decoder_hidden,
        ];
        if nonzero.contains(&0) {
            return Err(Error::InvalidConfig("policy dimensions must be nonzero".into()));
        }
        if !self.visual_resolution.is_multiple_of(self.visual_patch)
            || !self.tactile_height.is_multiple_of(self.tactile_patch)
            || !self.tactile_width.is_multiple_of(self.tactile_patch)
        {
            return Err(Error::InvalidConfig("image sizes must be multiples of the patch size".into()));
        }
        Ok(())
    }
}

/// Training-time ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    /// Visual input zeroed.
    Vision,
    /// Tactile input zeroed.
    Tactile,
    /// Center weights replaced by 1 (plain reconstruction MAE).
    Center,
    /// Completion-index loss weight set to 0.
    Task,
}

impl Ablation {
    pub fn name(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::Vision => "vision",
            Ablation::Tactile => "tactile",
            Ablation::Center => "center",
            Ablation::Task => "task",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Ablation::None,
            Ablation::Vision,
            Ablation::Tactile,
            Ablation::Center,
            Ablation::Task,
        ]
        .into_iter()
        .find(|a| a.name() == s)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown ablation '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub augment: bool,
    /// Random chunk starts drawn from each training episode per epoch.
    pub samples_per_episode: usize,
    pub val_fraction: f64,
    pub lambda_reg: f64,
    pub lambda_task: f64,
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 8,
            epochs: 2000,
            seed: 1,
            augment: true,
            samples_per_episode: 4,
            val_fraction: 0.1,
            lambda_reg: 100.0,
            lambda_task: 100.0,
            ablation: Ablation::None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.batch_size == 0 || self.samples_per_episode == 0 {
            return Err(Error::InvalidConfig("lr, batch_size and samples_per_episode must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::InvalidConfig("val_fraction must lie in [0, 1)".into()));
        }
        if self.lambda_reg < 0.0 || self.lambda_task < 0.0 {
            return Err(Error::InvalidConfig("loss weights must be non-negative".into()));
        }
        Ok(())
    }

    /// Task-loss weight after applying the ablation.
    pub fn effective_lambda_task(&self) -> f64 {
        if self.ablation == Ablation::Task {
            0.0
        } else {
            self.lambda_task
        }
    }
}
