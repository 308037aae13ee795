use std::path::Path;

use anyhow::{bail, Context, Result};
use ltssl_core::data::{load_cohort, prepare_cohort, PreprocessSpec};
use ltssl_core::training::{assemble_split, evaluate_pretext, Checkpoint};

use super::{num, read_folds, rotation_dir, try_ordered, Global, BEST_CHECKPOINT, FOLDS_FILE};
use crate::config::Snapshot;
use crate::error::usage;
use crate::io::{csv, prepare_out, write};

pub const PAIRS_FILE: &str = "pairs.csv";
pub const PAIRS_HEADER: [&str; 4] = ["rotation", "eye_id", "y_months", "yhat_months"];
pub const METRICS_FILE: &str = "metrics.csv";
pub const METRICS_HEADER: [&str; 3] = ["rotation", "metric", "value"];

/// Predicts the interval of every ordered visit pair of each rotation's test
/// eyes with that rotation's selected siamese weights.
pub fn run(g: &Global, run_dir: &Path, cohort: Option<&Path>) -> Result<()> {
    let snap = Snapshot::read(run_dir)?;
    if snap.run.command != "pretrain" {
        bail!(usage(format!(
            "{} is a `{}` run; eval needs a run written by `ltssl pretrain`",
            run_dir.display(),
            snap.run.command
        )));
    }
    let cfg = snap.pretrain(run_dir)?.clone();
    let cohort_dir = match cohort.map(Path::to_path_buf).or(snap.run.cohort.clone()) {
        Some(dir) => dir,
        None => bail!(usage("the run records no cohort; pass --cohort")),
    };
    let out = g.out.clone().unwrap_or_else(|| run_dir.join("eval"));
    let cohort = load_cohort(&cohort_dir)?;
    let folds = read_folds(&run_dir.join(FOLDS_FILE), &cohort_dir)?;
    folds.validate(&cohort)?;
    let checkpoints: Vec<_> = (0..folds.k()).map(|r| rotation_dir(run_dir, r).join(BEST_CHECKPOINT)).collect();
    if let Some(missing) = checkpoints.iter().find(|p| !p.exists()) {
        bail!(usage(format!("{} is missing; rerun `ltssl pretrain`", missing.display())));
    }
    prepare_out(&out, g.force)?;

    let eyes = prepare_cohort(&cohort, &PreprocessSpec::square(cfg.encoder.input_size))?;
    let evals = try_ordered(folds.k(), g.jobs, |r| {
        let model = Checkpoint::load(&checkpoints[r])
            .and_then(|c| c.siamese())
            .with_context(|| format!("loading {}", checkpoints[r].display()))?;
        let split = assemble_split(&eyes, &folds, r)?;
        Ok(evaluate_pretext(&model, &split.test)?)
    })?;

    let mut pairs = Vec::new();
    let mut metrics = Vec::new();
    for (r, e) in evals.iter().enumerate() {
        for ((eye, y), yhat) in e.eye_ids.iter().zip(&e.y).zip(&e.yhat) {
            pairs.push(vec![r.to_string(), eye.to_string(), num(*y), num(*yhat)]);
        }
        let m = &e.metrics;
        for (name, v) in [("r2", m.r2), ("mae_months", m.mae_months), ("order_accuracy", m.order_accuracy)] {
            metrics.push(vec![r.to_string(), name.into(), num(v)]);
        }
        println!(
            "rotation {r}: R2 {:.3}, MAE {:.2} months, order accuracy {:.3} ({} pairs)",
            m.r2,
            m.mae_months,
            m.order_accuracy,
            e.y.len()
        );
    }
    write(&out.join(PAIRS_FILE), csv(&PAIRS_HEADER, pairs))?;
    write(&out.join(METRICS_FILE), csv(&METRICS_HEADER, metrics))?;
    let mut eval_snap = Snapshot::new("eval");
    eval_snap.run.cohort = Some(cohort_dir);
    eval_snap.run.pretrained = Some(run_dir.to_path_buf());
    eval_snap.pretrain = Some(cfg);
    eval_snap.write(&out)
}
