use std::sync::atomic::{AtomicUsize, Ordering};

use ltssl_core::data::*;
use ltssl_core::evaluation::ClassificationMetrics;
use ltssl_core::models::*;
use ltssl_core::training::*;
use ltssl_core::Error;

const IMAGE: usize = 16;

fn cohort(n: usize, seed: u64) -> (Cohort, Vec<PreparedEye>) {
    let cfg = SynthConfig {
        n_patients: n,
        image_size: IMAGE,
        bscans_per_volume: 3,
        seed,
        ..SynthConfig::default()
    };
    let cohort = generate_cohort(&cfg).unwrap();
    let eyes = prepare_cohort(&cohort, &PreprocessSpec::square(IMAGE)).unwrap();
    (cohort, eyes)
}

fn tiny_encoder() -> EncoderConfig {
    EncoderConfig {
        block_channels: vec![4, 4, 8],
        layers_per_block: 2,
        embedding_dim: 8,
        input_size: IMAGE,
        ..EncoderConfig::default()
    }
}

fn tiny_pretrain(seed: u64) -> PretrainConfig {
    PretrainConfig {
        total_steps: 12,
        validate_every: 4,
        batch_size: 4,
        learning_rate: 1e-3,
        validation_samples: 8,
        seed,
        encoder: tiny_encoder(),
    }
}

#[test]
fn select_best_examples() {
    assert_eq!(select_best(&[(1, 5.0), (2, 3.2), (3, 4.1)], true), Some((2, 3.2)));
    assert_eq!(select_best(&[(1, 0.6), (2, 0.75), (3, 0.7)], false), Some((2, 0.75)));
    assert_eq!(select_best(&[(1, 0.5), (2, 0.5)], false), Some((1, 0.5)));
    assert_eq!(select_best(&[(1, f64::NAN), (2, 0.4)], true), Some((2, 0.4)));
    assert_eq!(select_best(&[(1, f64::NAN)], true), None);
}

#[test]
fn siamese_pretraining_logs_and_selects_from_its_log() {
    let (cohort, eyes) = cohort(8, 1);
    let folds = make_folds(&cohort, 4, 1).unwrap();
    let split = assemble_split(&eyes, &folds, 0).unwrap();
    let cfg = tiny_pretrain(5);
    let out = pretrain_siamese(&split.train, &split.validation, &cfg).unwrap();
    let val = out.log.series("val", "l2_loss");
    assert_eq!(val.len(), cfg.total_steps / cfg.validate_every);
    assert_eq!(out.log.series("train", "l2_loss").len(), cfg.total_steps);
    assert_eq!(out.log.series("val", "mae_months").len(), val.len());
    let (step, loss) = select_best(&val, true).unwrap();
    assert_eq!((out.checkpoint.index, out.checkpoint.metric_value), (step, loss));
    assert_eq!(out.checkpoint.metric_name, "val_l2_loss");
    assert_eq!(out.checkpoint.index_kind, IndexKind::Step);
}

#[test]
fn pretraining_is_bit_reproducible() {
    let (cohort, eyes) = cohort(8, 2);
    let folds = make_folds(&cohort, 4, 2).unwrap();
    let split = assemble_split(&eyes, &folds, 1).unwrap();
    let run = || pretrain_siamese(&split.train, &split.validation, &tiny_pretrain(9)).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.log.to_csv(), b.log.to_csv());
    let weights = |o: &PretrainOutcome<SiameseModel>| {
        o.model.store().iter().map(|(_, p)| p.value.data().to_vec()).collect::<Vec<_>>()
    };
    assert_eq!(weights(&a), weights(&b));
    let c = pretrain_siamese(&split.train, &split.validation, &tiny_pretrain(10)).unwrap();
    assert_ne!(a.log.to_csv(), c.log.to_csv());
}

#[test]
fn autoencoder_pretraining_never_builds_pairs() {
    let (cohort, eyes) = cohort(8, 3);
    let folds = make_folds(&cohort, 4, 3).unwrap();
    let split = assemble_split(&eyes, &folds, 0).unwrap();
    let before = pairs_constructed();
    let out = pretrain_autoencoder(&split.train, &split.validation, &tiny_pretrain(4)).unwrap();
    assert_eq!(pairs_constructed(), before);
    assert_eq!(out.checkpoint.metric_name, "val_mse");
    assert_eq!(out.log.series("val", "mse").len(), 3);
    let reloaded = out.checkpoint.autoencoder().unwrap();
    let image = &eyes[0].images[0][0];
    assert_eq!(reloaded.reconstruct(&[image]).unwrap(), out.model.reconstruct(&[image]).unwrap());
}

#[test]
fn pretraining_rejects_overlapping_patients() {
    let (_, eyes) = cohort(4, 4);
    let all: Vec<&PreparedEye> = eyes.iter().collect();
    let err = pretrain_siamese(&all, &all[..1], &tiny_pretrain(0)).unwrap_err();
    assert!(matches!(err, Error::Leakage(ref m) if m.contains(&format!("patient {}", eyes[0].patient_id))), "{err}");
}

#[test]
fn corrupt_fold_file_is_rejected() {
    let (cohort, eyes) = cohort(8, 5);
    let mut folds = make_folds(&cohort, 4, 5).unwrap();
    let moved = folds.folds[0][0];
    folds.folds[1].push(moved);
    assert!(folds.validate(&cohort).is_err());
    let err = assemble_split(&eyes, &folds, 0).unwrap_err();
    assert!(matches!(err, Error::Leakage(ref m) if m.contains(&moved.to_string())), "{err}");
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let (cohort, eyes) = cohort(8, 6);
    let folds = make_folds(&cohort, 4, 6).unwrap();
    let split = assemble_split(&eyes, &folds, 2).unwrap();
    let out = pretrain_siamese(&split.train, &split.validation, &tiny_pretrain(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("best.toml");
    out.checkpoint.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded.index, out.checkpoint.index);
    assert_eq!(loaded.metric_value.to_bits(), out.checkpoint.metric_value.to_bits());
    assert_eq!(loaded.config_fingerprint, out.checkpoint.config_fingerprint);
    let model = loaded.siamese().unwrap();
    let scans: Vec<&Image> = eyes.iter().map(|e| &e.images[0][0]).collect();
    let later: Vec<&Image> = eyes.iter().map(|e| e.images.last().unwrap().last().unwrap()).collect();
    assert_eq!(
        model.predict_pairs(&scans, &later).unwrap(),
        out.model.predict_pairs(&scans, &later).unwrap()
    );
    assert!(loaded.classifier().is_err(), "kind is checked on load");
}

#[test]
fn non_finite_input_reports_the_step() {
    let mut bad = Image::zeros(IMAGE, IMAGE);
    bad.pixels[3] = f32::NAN;
    let good = Image::zeros(IMAGE, IMAGE);
    let pair = ScanPair {
        bscan_a: &bad,
        bscan_b: &good,
        delta_t: 3.0,
        eye_id: 0,
        bscan_index: 0,
        scan_a: 0,
        scan_b: 1,
    };
    let mut trainer = SiameseTrainer::new(SiameseModel::new(&tiny_encoder(), 0).unwrap(), 1e-3);
    let err = trainer.train_step(&[pair, pair]).unwrap_err();
    assert!(matches!(err, Error::NonFiniteLoss { step: 1, .. }), "{err}");
}

fn sample(image: &Image, converts: bool, id: u32) -> Sample {
    Sample {
        image: image.clone(),
        converts,
        patient_id: id,
        eye_id: id,
        time: 0.0,
    }
}

#[test]
fn finetune_needs_both_classes_in_validation() {
    let (_, eyes) = cohort(4, 7);
    let img = &eyes[0].images[0][0];
    let train = vec![sample(img, true, 0), sample(img, false, 1)];
    let validation = vec![sample(img, false, 2), sample(img, false, 3)];
    let setting = Setting {
        learning_rate: 1e-3,
        hidden: 4,
        dropout: 0.0,
    };
    let err = finetune(None, &tiny_encoder(), setting, &train, &validation, 2, 2, 0).unwrap_err();
    assert!(matches!(err, Error::SingleClassValidation { .. }), "{err}");
}

#[test]
fn finetune_selects_logged_best_epoch_and_is_reproducible() {
    let (_, eyes) = cohort(6, 8);
    let imgs: Vec<&Image> = eyes.iter().flat_map(|e| e.images.iter().map(|s| &s[1])).collect();
    let train: Vec<_> = imgs.iter().take(8).enumerate().map(|(i, m)| sample(m, i % 2 == 0, i as u32)).collect();
    let validation: Vec<_> = imgs.iter().skip(8).take(6).enumerate().map(|(i, m)| sample(m, i % 3 == 0, 50 + i as u32)).collect();
    let setting = Setting {
        learning_rate: 1e-3,
        hidden: 4,
        dropout: 0.5,
    };
    let run = || finetune(None, &tiny_encoder(), setting, &train, &validation, 4, 4, 11).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.log.to_csv(), b.log.to_csv());
    let aucs = a.log.series("val", "roc_auc");
    assert_eq!(aucs.len(), 4);
    assert_eq!(select_best(&aucs, false), Some((a.best_epoch, a.best_val_auc)));
}

#[test]
fn finetune_grid_defaults() {
    let cfg = FinetuneConfig::default();
    assert_eq!(cfg.epochs, 20);
    assert_eq!(cfg.repeats, 5);
    assert_eq!(cfg.settings().len(), 8);
    assert_eq!(InitKind::Scratch.label(), "Training from scratch");
    assert_eq!(InitKind::Autoencoder.label(), "OCT autoencoder");
}

/// Returns a fixed validation AUC per setting and counts test evaluations.
struct Scripted {
    aucs: Vec<f64>,
    tests: AtomicUsize,
}

impl CellRunner for Scripted {
    type Model = GridCell;

    fn run_cell(&self, cell: &GridCell) -> ltssl_core::Result<CellRun<GridCell>> {
        Ok(CellRun {
            val_auc: self.aucs[cell.setting] + 0.001 * cell.repeat as f64,
            model: *cell,
            log: MetricLog::new("epoch"),
        })
    }

    fn test_metrics(&self, cell: &GridCell, model: &GridCell) -> ltssl_core::Result<ClassificationMetrics> {
        assert_eq!(cell, model);
        self.tests.fetch_add(1, Ordering::SeqCst);
        Ok(ClassificationMetrics {
            roc_auc: 0.5 + 0.01 * cell.rotation as f64,
            average_precision: 0.3,
            n_pos: 1,
            n_neg: 1,
        })
    }
}

#[test]
fn grid_picks_best_validation_setting_before_touching_test() {
    let runner = Scripted {
        aucs: vec![0.6, 0.7],
        tests: AtomicUsize::new(0),
    };
    let out = grid_search(&runner, 2, 6, 5, 1).unwrap();
    assert_eq!(out.cells.len(), 6 * 5 * 2);
    assert_eq!(out.best_setting, 1);
    assert_eq!(runner.tests.load(Ordering::SeqCst), 6 * 5);
    let selection = out.access_log.iter().position(|a| matches!(a, Access::Selection { .. })).unwrap();
    assert!(out.access_log[..selection].iter().all(|a| matches!(a, Access::Validation { .. })));
    assert_eq!(out.access_log[..selection].len(), 60);
    assert!(out.access_log[selection + 1..]
        .iter()
        .all(|a| matches!(a, Access::Test { setting: 1, .. })));
    assert!((out.report.mean["roc_auc"] - 0.525).abs() < 1e-12);
    assert_eq!(out.report.per_fold.len(), 6);
}

#[test]
fn grid_outcome_does_not_depend_on_thread_count() {
    let runner = Scripted {
        aucs: vec![0.7, 0.6, 0.65],
        tests: AtomicUsize::new(0),
    };
    let serial = grid_search(&runner, 3, 4, 2, 1).unwrap();
    let threaded = grid_search(&runner, 3, 4, 2, 3).unwrap();
    assert_eq!(serial.models, threaded.models);
    assert_eq!(serial.access_log, threaded.access_log);
    assert_eq!(serial.best_setting, 0);
}

#[test]
fn finetune_runner_covers_every_rotation() {
    let (cohort, eyes) = cohort(18, 12);
    let folds = make_folds(&cohort, 3, 12).unwrap();
    let cfg = FinetuneConfig {
        epochs: 1,
        learning_rates: vec![1e-3],
        hidden_widths: vec![4],
        dropouts: vec![0.0],
        repeats: 1,
        batch_size: 8,
        horizon: 36.0,
        seed: 3,
        ..FinetuneConfig::default()
    };
    let runner = FinetuneRunner::new(&eyes, &folds, tiny_encoder(), cfg, Vec::new()).unwrap();
    let counts = runner.sample_counts();
    assert_eq!(counts.len(), 3);
    let total: usize = counts.iter().map(|c| c.2).sum();
    assert_eq!(total, conversion_samples(&eyes.iter().collect::<Vec<_>>(), 36.0).len());
    match runner.run(1) {
        Ok(out) => {
            assert_eq!(out.cells.len(), 3);
            assert_eq!(out.test_metrics.len(), 3);
        }
        Err(Error::SingleClassValidation { context }) => assert!(context.contains("rotation")),
        Err(other) => panic!("{other}"),
    }
}
