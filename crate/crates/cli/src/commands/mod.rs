pub mod eval;
pub mod finetune;
pub mod folds;
pub mod pretrain;
pub mod report;
pub mod synth;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ltssl_core::data::FoldAssignment;

use crate::config::RunConfig;
use crate::error::usage;

/// Fold file name, both inside a cohort and copied into every run.
pub const FOLDS_FILE: &str = "folds.toml";
/// Checkpoint manifest of the selected weights of one rotation.
pub const BEST_CHECKPOINT: &str = "best.ckpt";

pub struct Global {
    pub config: RunConfig,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: usize,
    pub force: bool,
}

pub fn rotation_dir(run: &Path, rotation: usize) -> PathBuf {
    run.join(format!("rotation{rotation}"))
}

pub fn read_folds(path: &Path, cohort_dir: &Path) -> Result<FoldAssignment> {
    if !path.exists() {
        bail!(usage(format!(
            "fold file {} not found; create it with `ltssl folds --cohort {}`",
            path.display(),
            cohort_dir.display()
        )));
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    FoldAssignment::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Runs one fallible job per index on `jobs` threads and returns the
/// results in index order, or the error of the lowest failing index.
pub fn try_ordered<T: Send>(n: usize, jobs: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    crate::io::ordered_map(n, jobs, f).into_iter().collect()
}

/// Shortest round-trip form, so CSV values parse back bit for bit.
pub fn num(v: f64) -> String {
    format!("{v}")
}
