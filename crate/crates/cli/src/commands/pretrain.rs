use std::path::Path;

use anyhow::{Context, Result};
use ltssl_core::data::{load_cohort, prepare_cohort, PreprocessSpec};
use ltssl_core::seed::{derive_seed, stream};
use ltssl_core::training::{assemble_split, pretrain_autoencoder, pretrain_siamese, MetricLog, PretrainConfig};

use super::{num, read_folds, rotation_dir, try_ordered, Global, BEST_CHECKPOINT, FOLDS_FILE};
use crate::config::Snapshot;
use crate::io::{csv, prepare_out, require_out, write};
use crate::svg::{line_chart, Series};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Siamese,
    Autoencoder,
}

impl Kind {
    pub fn command(self) -> &'static str {
        match self {
            Kind::Siamese => "pretrain",
            Kind::Autoencoder => "pretrain-ae",
        }
    }

    fn metric(self) -> &'static str {
        match self {
            Kind::Siamese => "l2_loss",
            Kind::Autoencoder => "mse",
        }
    }
}

/// Pretrains one model per fold rotation on that rotation's training folds,
/// selecting weights on its validation fold. Test folds are never touched.
pub fn run(g: &Global, cohort_dir: &Path, folds: Option<&Path>, kind: Kind) -> Result<()> {
    let out = require_out(g.out.as_deref(), kind.command())?;
    let mut cfg = g.config.pretrain.clone();
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let cohort = load_cohort(cohort_dir)?;
    let folds_path = folds.map_or_else(|| cohort_dir.join(FOLDS_FILE), Path::to_path_buf);
    let assignment = read_folds(&folds_path, cohort_dir)?;
    assignment.validate(&cohort)?;
    prepare_out(&out, g.force)?;

    let mut snap = Snapshot::new(kind.command());
    snap.run.cohort = Some(cohort_dir.to_path_buf());
    snap.run.folds = Some(folds_path.clone());
    snap.pretrain = Some(cfg.clone());
    snap.write(&out)?;
    write(&out.join(FOLDS_FILE), assignment.to_toml())?;

    let eyes = prepare_cohort(&cohort, &PreprocessSpec::square(cfg.encoder.input_size))?;
    let k = assignment.k();
    let results = try_ordered(k, g.jobs, |r| {
        let rcfg = PretrainConfig {
            seed: derive_seed(cfg.seed, &[stream::ROTATION, r as u64]),
            ..cfg.clone()
        };
        let split = assemble_split(&eyes, &assignment, r)?;
        let (checkpoint, log) = match kind {
            Kind::Siamese => {
                let o = pretrain_siamese(&split.train, &split.validation, &rcfg)?;
                (o.checkpoint, o.log)
            }
            Kind::Autoencoder => {
                let o = pretrain_autoencoder(&split.train, &split.validation, &rcfg)?;
                (o.checkpoint, o.log)
            }
        };
        let dir = rotation_dir(&out, r);
        write(&dir.join("metrics.csv"), log.to_csv())?;
        checkpoint
            .save(&dir.join(BEST_CHECKPOINT))
            .with_context(|| format!("saving rotation {r} checkpoint"))?;
        write(&dir.join("loss_curve.svg"), loss_curve(&log, kind, r, cfg.validate_every))?;
        Ok((checkpoint.index, checkpoint.metric_value))
    })?;

    let rows = results
        .iter()
        .enumerate()
        .map(|(r, (step, val))| vec![r.to_string(), step.to_string(), num(*val)]);
    let val_col = format!("val_{}", kind.metric());
    write(&out.join("summary.csv"), csv(&["rotation", "best_step", &val_col], rows))?;
    for (r, (step, val)) in results.iter().enumerate() {
        println!("rotation {r}: best step {step}, {val_col} {val:.5}");
    }
    Ok(())
}

/// Training loss averaged over each validation interval, against the
/// validation loss at the end of that interval.
fn loss_curve(log: &MetricLog, kind: Kind, rotation: usize, every: usize) -> String {
    let train = log.series("train", kind.metric());
    let averaged: Vec<(f64, f64)> = train
        .chunks(every)
        .map(|c| {
            let end = c.last().expect("chunks are non-empty").0;
            (end as f64, c.iter().map(|p| p.1).sum::<f64>() / c.len() as f64)
        })
        .collect();
    let val: Vec<(f64, f64)> = log.series("val", kind.metric()).into_iter().map(|(s, v)| (s as f64, v)).collect();
    line_chart(
        &format!("{} rotation {rotation}", kind.command()),
        "step",
        kind.metric(),
        &[
            Series {
                label: "train (interval mean)",
                points: averaged,
            },
            Series {
                label: "validation",
                points: val,
            },
        ],
    )
}
