//! Pretext and autoencoder pretraining, fine-tuning for conversion
//! prediction, hyperparameter grid search and the artifacts they leave
//! behind (checkpoints and metric logs).

mod checkpoint;
mod finetune;
mod grid;
mod log;
mod pretext;
mod pretrain;
mod split;
mod trainer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::EncoderConfig;

pub use checkpoint::{config_fingerprint, Checkpoint, IndexKind};
pub use finetune::{conversion_samples, finetune, ClassifierTrainer, FinetuneOutcome, Sample};
pub use grid::{grid_search, Access, CellRun, CellRunner, FinetuneRunner, GridCell, GridOutcome};
pub use log::{MetricLog, MetricRow};
pub use pretext::{evaluate_pretext, PretextEvaluation};
pub use pretrain::{pretrain_autoencoder, pretrain_siamese, select_best, PretrainOutcome};
pub use split::{assemble_split, check_leakage, SplitEyes};
pub use trainer::{AutoencoderTrainer, SiameseTrainer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub total_steps: usize,
    pub validate_every: usize,
    /// Pairs per step for the siamese model, images per step for the
    /// autoencoder.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Size of the fixed validation set drawn once before training.
    pub validation_samples: usize,
    pub seed: u64,
    pub encoder: EncoderConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            total_steps: 20_000,
            validate_every: 500,
            batch_size: 32,
            learning_rate: 1e-4,
            validation_samples: 256,
            seed: 0,
            encoder: EncoderConfig::default(),
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.validate_every == 0 || self.total_steps < self.validate_every {
            return Err(Error::Config(format!(
                "total_steps ({}) must be at least validate_every ({}) > 0",
                self.total_steps, self.validate_every
            )));
        }
        if self.total_steps % self.validate_every != 0 {
            return Err(Error::Config("validate_every must divide total_steps".into()));
        }
        if self.batch_size == 0 || self.validation_samples == 0 {
            return Err(Error::Config("batch_size and validation_samples must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        self.encoder.validate()
    }
}

/// Where the fine-tuned encoder comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Scratch,
    #[serde(rename = "ae")]
    Autoencoder,
    #[serde(rename = "ssl")]
    SelfSupervised,
}

impl InitKind {
    pub const ALL: [InitKind; 3] = [InitKind::Scratch, InitKind::Autoencoder, InitKind::SelfSupervised];

    pub fn as_str(self) -> &'static str {
        match self {
            InitKind::Scratch => "scratch",
            InitKind::Autoencoder => "ae",
            InitKind::SelfSupervised => "ssl",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            InitKind::Scratch => "Training from scratch",
            InitKind::Autoencoder => "OCT autoencoder",
            InitKind::SelfSupervised => "Longitudinal self-supervised",
        }
    }
}

impl std::str::FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scratch" => Ok(InitKind::Scratch),
            "ae" | "autoencoder" => Ok(InitKind::Autoencoder),
            "ssl" | "self-supervised" => Ok(InitKind::SelfSupervised),
            other => Err(Error::Config(format!("unknown init `{other}` (expected scratch, ae or ssl)"))),
        }
    }
}

/// One point of the fine-tuning grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub learning_rate: f64,
    pub hidden: usize,
    pub dropout: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub learning_rates: Vec<f64>,
    pub hidden_widths: Vec<usize>,
    pub dropouts: Vec<f64>,
    pub repeats: usize,
    pub batch_size: usize,
    pub horizon: f64,
    pub init: InitKind,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            epochs: 20,
            learning_rates: vec![1e-4, 1e-3],
            hidden_widths: vec![32, 128],
            dropouts: vec![0.0, 0.5],
            repeats: 5,
            batch_size: 16,
            horizon: 12.0,
            init: InitKind::Scratch,
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.repeats == 0 || self.batch_size < 2 {
            return Err(Error::Config("epochs and repeats must be positive, batch_size at least 2".into()));
        }
        if self.learning_rates.is_empty() || self.hidden_widths.is_empty() || self.dropouts.is_empty() {
            return Err(Error::Config("the fine-tuning grid must not be empty".into()));
        }
        if self.learning_rates.iter().any(|lr| !(*lr > 0.0)) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        for &hidden in &self.hidden_widths {
            for &dropout in &self.dropouts {
                crate::models::ClassifierConfig { hidden, dropout }.validate()?;
            }
        }
        Ok(())
    }

    /// Grid points in learning-rate-major order.
    pub fn settings(&self) -> Vec<Setting> {
        let mut out = Vec::new();
        for &learning_rate in &self.learning_rates {
            for &hidden in &self.hidden_widths {
                for &dropout in &self.dropouts {
                    out.push(Setting {
                        learning_rate,
                        hidden,
                        dropout,
                    });
                }
            }
        }
        out
    }
}
