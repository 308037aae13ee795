use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ltssl_core::data::SynthConfig;
use ltssl_core::training::{FinetuneConfig, PretrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::usage;

/// File name of the resolved configuration written into every run directory.
pub const SNAPSHOT: &str = "config.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoldsConfig {
    pub k: usize,
    pub seed: u64,
}

impl Default for FoldsConfig {
    fn default() -> Self {
        FoldsConfig { k: 6, seed: 0 }
    }
}

/// Every parameter section a command may read, as parsed from `--config`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Present when a run snapshot is used as the config; informational.
    #[serde(skip_serializing)]
    pub run: Option<RunInputs>,
    pub synth: SynthConfig,
    pub folds: FoldsConfig,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }
}

/// Inputs of a run besides its parameters. Paths are recorded as given.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunInputs {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cohort: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub folds: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pretrained: Option<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub runs: Vec<PathBuf>,
}

/// The resolved configuration of one run; rerunning the command with it
/// reproduces the run's outputs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub run: RunInputs,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub folds: Option<FoldsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrain: Option<PretrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finetune: Option<FinetuneConfig>,
}

impl Snapshot {
    pub fn new(command: &str) -> Self {
        Snapshot {
            run: RunInputs {
                command: command.into(),
                ..RunInputs::default()
            },
            ..Snapshot::default()
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = toml::to_string(self).context("serializing the run configuration")?;
        crate::io::write(&dir.join(SNAPSHOT), text)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(SNAPSHOT);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Pretraining parameters of a run that recorded them.
    pub fn pretrain(&self, dir: &Path) -> Result<&PretrainConfig> {
        self.pretrain
            .as_ref()
            .ok_or_else(|| usage(format!("{} records no pretraining parameters", dir.join(SNAPSHOT).display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.folds.k, 6);
    }

    #[test]
    fn sections_override_defaults() {
        let cfg: RunConfig = toml::from_str(
            "[synth]\nn_patients = 7\n[pretrain]\ntotal_steps = 40\n[pretrain.encoder]\nvariant = \"dense\"\n",
        )
        .unwrap();
        assert_eq!(cfg.synth.n_patients, 7);
        assert_eq!(cfg.pretrain.total_steps, 40);
        assert_eq!(cfg.pretrain.encoder.variant, ltssl_core::models::Variant::Dense);
        assert_eq!(cfg.pretrain.validate_every, PretrainConfig::default().validate_every);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[synth]\npatients = 3\n").is_err());
        assert!(toml::from_str::<RunConfig>("[trainer]\n").is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let mut snap = Snapshot::new("pretrain");
        snap.run.cohort = Some("cohort".into());
        snap.pretrain = Some(PretrainConfig::default());
        let text = toml::to_string(&snap).unwrap();
        assert_eq!(toml::from_str::<Snapshot>(&text).unwrap(), snap);
        let as_config: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(as_config.pretrain, PretrainConfig::default());
    }
}
