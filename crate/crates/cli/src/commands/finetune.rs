use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ltssl_core::data::{load_cohort, prepare_cohort, FoldAssignment, PreprocessSpec};
use ltssl_core::models::ModelKind;
use ltssl_core::training::{Access, Checkpoint, FinetuneRunner, InitKind};

use super::pretrain::Kind;
use super::report::{table2_csv, table2_markdown, ClassRow};
use super::{num, read_folds, rotation_dir, Global, BEST_CHECKPOINT, FOLDS_FILE};
use crate::config::Snapshot;
use crate::error::usage;
use crate::io::{csv, prepare_out, require_out, write};

pub const TEST_METRICS_FILE: &str = "test_metrics.csv";
pub const TEST_METRICS_HEADER: [&str; 3] = ["rotation", "metric", "value"];
pub const STANDARD_HORIZONS: [f64; 3] = [6.0, 12.0, 18.0];

pub struct Request {
    pub cohort: PathBuf,
    pub init: InitKind,
    pub horizon: Option<f64>,
    pub pretrained: Option<PathBuf>,
    pub folds: Option<PathBuf>,
    pub allow_any_horizon: bool,
}

/// Initial encoders of every rotation, read from a pretraining run.
fn load_init(run: &Path, init: InitKind, k: usize) -> Result<Vec<Checkpoint>> {
    let (command, kind) = match init {
        InitKind::SelfSupervised => (Kind::Siamese.command(), ModelKind::Siamese),
        InitKind::Autoencoder => (Kind::Autoencoder.command(), ModelKind::Autoencoder),
        InitKind::Scratch => unreachable!("scratch has no pretrained weights"),
    };
    let snap = Snapshot::read(run).map_err(|e| {
        usage(format!(
            "--pretrained {} is not a pretraining run ({e:#}); create one with `ltssl {command}`",
            run.display()
        ))
    })?;
    if snap.run.command != command {
        bail!(usage(format!(
            "--init {} needs a `ltssl {command}` run, but {} was written by `ltssl {}`",
            init.as_str(),
            run.display(),
            snap.run.command
        )));
    }
    (0..k)
        .map(|r| {
            let path = rotation_dir(run, r).join(BEST_CHECKPOINT);
            if !path.exists() {
                bail!(usage(format!("{} is missing; rerun `ltssl {command}`", path.display())));
            }
            let ckpt = Checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
            let found = ckpt.kind()?;
            if found != kind {
                bail!(usage(format!(
                    "{} holds a {} model, --init {} needs a {} checkpoint",
                    path.display(),
                    found.as_str(),
                    init.as_str(),
                    kind.as_str()
                )));
            }
            Ok(ckpt)
        })
        .collect()
}

fn resolve_folds(req: &Request) -> Result<(PathBuf, FoldAssignment)> {
    let from_run = req.pretrained.as_ref().map(|r| r.join(FOLDS_FILE));
    let path = req
        .folds
        .clone()
        .or_else(|| from_run.clone().filter(|p| p.exists()))
        .unwrap_or_else(|| req.cohort.join(FOLDS_FILE));
    let folds = read_folds(&path, &req.cohort)?;
    if let Some(run_copy) = from_run.filter(|p| *p != path && p.exists()) {
        if read_folds(&run_copy, &req.cohort)? != folds {
            bail!(usage(format!(
                "{} differs from the folds the pretrained run used ({})",
                path.display(),
                run_copy.display()
            )));
        }
    }
    Ok((path, folds))
}

/// Fine-tunes every grid cell, selects the setting on validation AUC and
/// only then scores the selected cells on their test folds.
pub fn run(g: &Global, req: &Request) -> Result<()> {
    let out = require_out(g.out.as_deref(), "finetune")?;
    let mut cfg = g.config.finetune.clone();
    cfg.init = req.init;
    if let Some(h) = req.horizon {
        cfg.horizon = h;
    }
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if !req.allow_any_horizon && !STANDARD_HORIZONS.contains(&cfg.horizon) {
        bail!(usage(format!(
            "horizon {} months is not one of 6, 12, 18; pass --allow-any-horizon to use it",
            cfg.horizon
        )));
    }
    cfg.validate()?;
    match (req.init, &req.pretrained) {
        (InitKind::Scratch, Some(_)) => bail!(usage("--pretrained is only used with --init ae or ssl")),
        (InitKind::Scratch, None) => {}
        (init, None) => bail!(usage(format!(
            "--init {} needs --pretrained <run> from `ltssl {}`",
            init.as_str(),
            if init == InitKind::SelfSupervised { "pretrain" } else { "pretrain-ae" }
        ))),
        (_, Some(_)) => {}
    }
    let cohort = load_cohort(&req.cohort)?;
    let (folds_path, folds) = resolve_folds(req)?;
    folds.validate(&cohort)?;
    let k = folds.k();
    let (checkpoints, mut pretrain) = match &req.pretrained {
        Some(run) => {
            let ckpts = load_init(run, req.init, k)?;
            let pretrain = Snapshot::read(run)?.pretrain(run)?.clone();
            (ckpts, pretrain)
        }
        None => (Vec::new(), g.config.pretrain.clone()),
    };
    if let Some(first) = checkpoints.first() {
        pretrain.encoder = first.encoder_config()?;
    }
    pretrain.encoder.validate()?;
    let encoder = pretrain.encoder.clone();
    prepare_out(&out, g.force)?;

    let eyes = prepare_cohort(&cohort, &PreprocessSpec::square(encoder.input_size))?;
    let init = checkpoints.iter().map(|c| Some(&c.weights)).collect();
    let runner = FinetuneRunner::new(&eyes, &folds, encoder, cfg.clone(), init)?;
    let counts = runner.sample_counts();
    let outcome = runner.run(g.jobs)?;

    for (cell, log) in outcome.cells.iter().zip(&outcome.logs) {
        write(&out.join("cells").join(format!("cell{:03}.csv", cell.index)), log.to_csv())?;
    }
    let grid = outcome.cells.iter().map(|c| {
        vec![
            c.index.to_string(),
            c.setting.to_string(),
            c.rotation.to_string(),
            c.repeat.to_string(),
            num(outcome.val_aucs[c.index]),
        ]
    });
    write(&out.join("grid.csv"), csv(&["cell", "setting", "rotation", "repeat", "val_auc"], grid))?;
    let selection = runner.settings().iter().enumerate().map(|(i, s)| {
        vec![
            i.to_string(),
            num(s.learning_rate),
            s.hidden.to_string(),
            num(s.dropout),
            num(outcome.setting_scores[i]),
            (i == outcome.best_setting).to_string(),
        ]
    });
    write(
        &out.join("selection.csv"),
        csv(&["setting", "learning_rate", "hidden", "dropout", "mean_val_auc", "selected"], selection),
    )?;
    let per_fold = outcome.report.per_fold.iter().enumerate().flat_map(|(r, m)| {
        m.iter().map(move |(name, v)| vec![r.to_string(), name.clone(), num(*v)])
    });
    write(&out.join(TEST_METRICS_FILE), csv(&TEST_METRICS_HEADER, per_fold))?;
    let test_cells = outcome.test_metrics.iter().map(|(i, m)| {
        let c = &outcome.cells[*i];
        vec![
            i.to_string(),
            c.rotation.to_string(),
            c.repeat.to_string(),
            num(m.roc_auc),
            num(m.average_precision),
            m.n_pos.to_string(),
            m.n_neg.to_string(),
        ]
    });
    write(
        &out.join("test_cells.csv"),
        csv(&["cell", "rotation", "repeat", "roc_auc", "average_precision", "n_pos", "n_neg"], test_cells),
    )?;
    let samples = counts
        .iter()
        .enumerate()
        .map(|(r, (tr, va, te))| vec![r.to_string(), tr.to_string(), va.to_string(), te.to_string()]);
    write(&out.join("samples.csv"), csv(&["rotation", "train", "validation", "test"], samples))?;
    let access = outcome.access_log.iter().enumerate().map(|(i, a)| {
        let (kind, cell, setting) = match a {
            Access::Validation { cell, setting } => ("validation", cell.to_string(), setting),
            Access::Selection { setting } => ("selection", String::new(), setting),
            Access::Test { cell, setting } => ("test", cell.to_string(), setting),
        };
        vec![i.to_string(), kind.into(), cell, setting.to_string()]
    });
    write(&out.join("access.csv"), csv(&["order", "access", "cell", "setting"], access))?;

    let row = ClassRow::from_report(cfg.init, cfg.horizon, &outcome.report)?;
    write(&out.join("summary.csv"), table2_csv(std::slice::from_ref(&row)))?;
    let best = runner.settings()[outcome.best_setting];
    let mut md = table2_markdown(std::slice::from_ref(&row));
    let _ = writeln!(
        md,
        "\nSelected setting: learning rate {}, hidden {}, dropout {} (mean validation AuC {:.3}).\n",
        best.learning_rate, best.hidden, best.dropout, outcome.setting_scores[outcome.best_setting]
    );
    md.push_str("| Rotation | Train samples | Validation samples | Test samples |\n|---|---|---|---|\n");
    for (r, (tr, va, te)) in counts.iter().enumerate() {
        let _ = writeln!(md, "| {r} | {tr} | {va} | {te} |");
    }
    write(&out.join("summary.md"), md)?;

    let mut snap = Snapshot::new("finetune");
    snap.run.cohort = Some(req.cohort.clone());
    snap.run.folds = Some(folds_path);
    snap.run.pretrained = req.pretrained.clone();
    snap.pretrain = Some(pretrain);
    snap.finetune = Some(cfg.clone());
    snap.write(&out)?;
    write(&out.join(FOLDS_FILE), folds.to_toml())?;

    println!(
        "{} horizon {} months: ROC AuC {}, average precision {}",
        cfg.init.as_str(),
        cfg.horizon,
        row.auc.cell(),
        row.ap.cell()
    );
    Ok(())
}
