use std::path::Path;

use anyhow::{bail, Result};
use ltssl_core::data::{load_cohort, make_folds};

use super::{Global, FOLDS_FILE};
use crate::config::Snapshot;
use crate::error::usage;
use crate::io::{prepare_out, write};

/// Writes the fold file into the cohort directory, or into `--out` together
/// with a config snapshot.
pub fn run(g: &Global, cohort_dir: &Path, k: Option<usize>) -> Result<()> {
    let mut cfg = g.config.folds.clone();
    if let Some(k) = k {
        cfg.k = k;
    }
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if cfg.k < 3 {
        bail!(usage(format!("need at least 3 folds, got {}", cfg.k)));
    }
    let cohort = load_cohort(cohort_dir)?;
    let folds = make_folds(&cohort, cfg.k, cfg.seed).map_err(|e| usage(e.to_string()))?;
    folds.validate(&cohort)?;
    let path = match &g.out {
        Some(out) => {
            prepare_out(out, g.force)?;
            let mut snap = Snapshot::new("folds");
            snap.run.cohort = Some(cohort_dir.to_path_buf());
            snap.folds = Some(cfg.clone());
            snap.write(out)?;
            out.join(FOLDS_FILE)
        }
        None => {
            let path = cohort_dir.join(FOLDS_FILE);
            if path.exists() && !g.force {
                bail!(usage(format!("{} exists; pass --force to replace it", path.display())));
            }
            path
        }
    };
    write(&path, folds.to_toml())?;
    let sizes: Vec<String> = folds.folds.iter().map(|f| f.len().to_string()).collect();
    println!("{} folds of {} patients -> {}", cfg.k, sizes.join("/"), path.display());
    Ok(())
}
