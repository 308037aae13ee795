use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ltssl_autodiff::ParamStore;

use super::finetune::{conversion_samples, finetune, Sample};
use super::log::MetricLog;
use super::split::assemble_split;
use super::{FinetuneConfig, Setting};
use crate::data::{FoldAssignment, Image, PreparedEye};
use crate::error::{Error, Result};
use crate::evaluation::{aggregate_cv, classification_metrics, ClassificationMetrics, CvReport, MetricSet};
use crate::models::{ClassifierModel, EncoderConfig};
use crate::seed::{derive_seed, stream};

/// One fine-tuning run of the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridCell {
    pub index: usize,
    pub setting: usize,
    pub rotation: usize,
    pub repeat: usize,
}

pub struct CellRun<M> {
    pub val_auc: f64,
    pub model: M,
    pub log: MetricLog,
}

/// Runs grid cells and, only when asked after selection, scores them on
/// their test fold.
pub trait CellRunner: Sync {
    type Model: Send;

    fn run_cell(&self, cell: &GridCell) -> Result<CellRun<Self::Model>>;
    fn test_metrics(&self, cell: &GridCell, model: &Self::Model) -> Result<ClassificationMetrics>;
}

/// Data accesses made by [`grid_search`], in order.
#[derive(Clone, Debug, PartialEq)]
pub enum Access {
    Validation { cell: usize, setting: usize },
    Selection { setting: usize },
    Test { cell: usize, setting: usize },
}

pub struct GridOutcome<M> {
    pub cells: Vec<GridCell>,
    /// Mean validation AUC per setting over folds and repeats.
    pub setting_scores: Vec<f64>,
    pub best_setting: usize,
    pub val_aucs: Vec<f64>,
    pub models: Vec<M>,
    pub logs: Vec<MetricLog>,
    /// Test metrics of the selected setting's cells, by cell index.
    pub test_metrics: Vec<(usize, ClassificationMetrics)>,
    /// Per-rotation test metrics (averaged over repeats), aggregated.
    pub report: CvReport,
    pub access_log: Vec<Access>,
}

/// Runs every setting × rotation × repeat cell, picks the setting with the
/// best mean validation AUC, then evaluates that setting's cells on their
/// test folds. `jobs > 1` runs cells on that many threads; results are
/// keyed by cell so the outcome does not depend on scheduling.
pub fn grid_search<R: CellRunner>(
    runner: &R,
    settings: usize,
    rotations: usize,
    repeats: usize,
    jobs: usize,
) -> Result<GridOutcome<R::Model>> {
    if settings == 0 || rotations < 2 || repeats == 0 {
        return Err(Error::Config("grid needs a setting, two rotations and one repeat".into()));
    }
    let mut cells = Vec::with_capacity(settings * rotations * repeats);
    for setting in 0..settings {
        for rotation in 0..rotations {
            for repeat in 0..repeats {
                cells.push(GridCell {
                    index: cells.len(),
                    setting,
                    rotation,
                    repeat,
                });
            }
        }
    }
    let slots: Vec<Mutex<Option<Result<CellRun<R::Model>>>>> = cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(cell) = cells.get(i) else { break };
        let result = runner.run_cell(cell);
        *slots[i].lock().expect("slot lock") = Some(result);
    };
    if jobs <= 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs.min(cells.len()) {
                s.spawn(work);
            }
        });
    }

    let mut access_log = Vec::new();
    let mut val_aucs = Vec::with_capacity(cells.len());
    let mut models = Vec::with_capacity(cells.len());
    let mut logs = Vec::with_capacity(cells.len());
    for (cell, slot) in cells.iter().zip(slots) {
        let run = slot.into_inner().expect("slot lock").expect("every cell ran")?;
        access_log.push(Access::Validation {
            cell: cell.index,
            setting: cell.setting,
        });
        val_aucs.push(run.val_auc);
        models.push(run.model);
        logs.push(run.log);
    }
    if cells.len() != settings * rotations * repeats {
        return Err(Error::InvalidInput("grid cell count mismatch".into()));
    }

    let per_setting = rotations * repeats;
    let setting_scores: Vec<f64> = (0..settings)
        .map(|s| val_aucs[s * per_setting..(s + 1) * per_setting].iter().sum::<f64>() / per_setting as f64)
        .collect();
    let scored: Vec<(usize, f64)> = setting_scores.iter().copied().enumerate().collect();
    let (best_setting, _) = super::select_best(&scored, false).ok_or_else(|| Error::Undefined("every setting scored NaN".into()))?;
    access_log.push(Access::Selection { setting: best_setting });

    let mut test_metrics = Vec::new();
    let mut per_fold = Vec::with_capacity(rotations);
    for rotation in 0..rotations {
        let (mut auc, mut ap) = (0.0, 0.0);
        for repeat in 0..repeats {
            let cell = &cells[best_setting * per_setting + rotation * repeats + repeat];
            access_log.push(Access::Test {
                cell: cell.index,
                setting: cell.setting,
            });
            let m = runner.test_metrics(cell, &models[cell.index])?;
            auc += m.roc_auc;
            ap += m.average_precision;
            test_metrics.push((cell.index, m));
        }
        let mut fold = MetricSet::new();
        fold.insert("roc_auc".into(), auc / repeats as f64);
        fold.insert("average_precision".into(), ap / repeats as f64);
        per_fold.push(fold);
    }
    let report = aggregate_cv(&per_fold)?;
    Ok(GridOutcome {
        cells,
        setting_scores,
        best_setting,
        val_aucs,
        models,
        logs,
        test_metrics,
        report,
        access_log,
    })
}

struct RotationData {
    train: Vec<Sample>,
    validation: Vec<Sample>,
    test: Vec<Sample>,
}

/// The concrete runner: fine-tunes a classifier for each cell, starting
/// from the encoder of that rotation's pretrained weights when given.
pub struct FinetuneRunner<'a> {
    encoder: EncoderConfig,
    settings: Vec<Setting>,
    config: FinetuneConfig,
    rotations: Vec<RotationData>,
    init: Vec<Option<&'a ParamStore>>,
}

impl<'a> FinetuneRunner<'a> {
    /// `init[r]` seeds rotation `r`; an empty slice means from scratch.
    pub fn new(
        eyes: &[PreparedEye],
        folds: &FoldAssignment,
        encoder: EncoderConfig,
        config: FinetuneConfig,
        init: Vec<Option<&'a ParamStore>>,
    ) -> Result<Self> {
        config.validate()?;
        let k = folds.k();
        let init = if init.is_empty() { vec![None; k] } else { init };
        if init.len() != k {
            return Err(Error::Config(format!("{} initial weight sets for {k} rotations", init.len())));
        }
        let mut rotations = Vec::with_capacity(k);
        for r in 0..k {
            let split = assemble_split(eyes, folds, r)?;
            let data = RotationData {
                train: conversion_samples(&split.train, config.horizon),
                validation: conversion_samples(&split.validation, config.horizon),
                test: conversion_samples(&split.test, config.horizon),
            };
            rotations.push(data);
        }
        Ok(FinetuneRunner {
            encoder,
            settings: config.settings(),
            config,
            rotations,
            init,
        })
    }

    pub fn settings(&self) -> &[Setting] {
        &self.settings
    }

    /// `(train, validation, test)` sample counts per rotation.
    pub fn sample_counts(&self) -> Vec<(usize, usize, usize)> {
        self.rotations
            .iter()
            .map(|r| (r.train.len(), r.validation.len(), r.test.len()))
            .collect()
    }

    pub fn run(&self, jobs: usize) -> Result<GridOutcome<ClassifierModel>> {
        grid_search(self, self.settings.len(), self.rotations.len(), self.config.repeats, jobs)
    }
}

impl CellRunner for FinetuneRunner<'_> {
    type Model = ClassifierModel;

    fn run_cell(&self, cell: &GridCell) -> Result<CellRun<ClassifierModel>> {
        let data = &self.rotations[cell.rotation];
        let seed = derive_seed(
            self.config.seed,
            &[stream::CELL, cell.setting as u64, cell.rotation as u64, cell.repeat as u64],
        );
        let out = finetune(
            self.init[cell.rotation],
            &self.encoder,
            self.settings[cell.setting],
            &data.train,
            &data.validation,
            self.config.epochs,
            self.config.batch_size,
            seed,
        )
        .map_err(|e| match e {
            Error::SingleClassValidation { .. } => Error::SingleClassValidation {
                context: format!("fold rotation {}", cell.rotation),
            },
            other => other,
        })?;
        Ok(CellRun {
            val_auc: out.best_val_auc,
            model: out.model,
            log: out.log,
        })
    }

    fn test_metrics(&self, cell: &GridCell, model: &ClassifierModel) -> Result<ClassificationMetrics> {
        let test = &self.rotations[cell.rotation].test;
        let images: Vec<&Image> = test.iter().map(|s| &s.image).collect();
        let labels: Vec<bool> = test.iter().map(|s| s.converts).collect();
        classification_metrics(&labels, &model.classify(&images)?)
    }
}
