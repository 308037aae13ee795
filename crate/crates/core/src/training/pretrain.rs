use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{config_fingerprint, Checkpoint, IndexKind};
use super::log::MetricLog;
use super::trainer::{AutoencoderTrainer, SiameseTrainer};
use super::PretrainConfig;
use crate::data::{sample_pair, Image, PreparedEye, ScanPair};
use crate::error::{Error, Result};
use crate::models::{AutoencoderModel, Ctx, Mode, Model, SiameseModel, INFERENCE_BATCH, INTERVAL_SCALE_MONTHS};
use crate::seed::{rng_for, stream};

/// Best model of a pretraining run plus its full loss curves.
#[derive(Clone, Debug)]
pub struct PretrainOutcome<M> {
    pub model: M,
    pub checkpoint: Checkpoint,
    pub log: MetricLog,
}

/// Index and value of the best entry; the earliest wins ties and NaNs are
/// never selected.
pub fn select_best(values: &[(usize, f64)], lower_is_better: bool) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for &(i, v) in values {
        if v.is_nan() {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, b)) => (lower_is_better && v < b) || (!lower_is_better && v > b),
        };
        if better {
            best = Some((i, v));
        }
    }
    best
}

trait PretextTask {
    type Model: Model + Clone;
    const METRIC: &'static str;

    fn step(&mut self, rng: &mut ChaCha8Rng) -> Result<f64>;
    /// Selection loss first, then any extra metrics to log.
    fn validate(&self) -> Result<(f64, Vec<(&'static str, f64)>)>;
    fn model(&self) -> &Self::Model;
}

fn run<T: PretextTask>(task: &mut T, cfg: &PretrainConfig) -> Result<PretrainOutcome<T::Model>> {
    let fingerprint = config_fingerprint(&toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?);
    let mut log = MetricLog::new(IndexKind::Step.as_str());
    let mut best: Option<(usize, f64, T::Model)> = None;
    for step in 1..=cfg.total_steps {
        let mut rng = rng_for(cfg.seed, &[stream::BATCH, step as u64]);
        let loss = task.step(&mut rng)?;
        log.push(step, "train", T::METRIC, loss);
        if step % cfg.validate_every == 0 {
            let (val, extras) = task.validate()?;
            if !val.is_finite() {
                return Err(Error::NonFiniteLoss { step, phase: "validation" });
            }
            log.push(step, "val", T::METRIC, val);
            for (name, v) in extras {
                log.push(step, "val", name, v);
            }
            if best.as_ref().is_none_or(|(_, b, _)| val < *b) {
                best = Some((step, val, task.model().clone()));
            }
        }
    }
    let (step, val, model) = best.expect("config validation guarantees one validation pass");
    let checkpoint = Checkpoint::from_model(&model, IndexKind::Step, step, &format!("val_{}", T::METRIC), val, &fingerprint);
    Ok(PretrainOutcome { model, checkpoint, log })
}

fn pair_eyes<'a>(eyes: &[&'a PreparedEye]) -> Vec<&'a PreparedEye> {
    eyes.iter().copied().filter(|e| e.sampler.is_some()).collect()
}

fn draw_pair<'a>(eyes: &[&'a PreparedEye], rng: &mut ChaCha8Rng) -> Result<ScanPair<'a>> {
    let eye = eyes[rng.random_range(0..eyes.len())];
    let b = rng.random_range(0..eye.bscans_per_scan());
    sample_pair(eye, b, rng)
}

struct SiameseTask<'a> {
    trainer: SiameseTrainer,
    train: Vec<&'a PreparedEye>,
    validation: Vec<ScanPair<'a>>,
    batch: usize,
}

impl PretextTask for SiameseTask<'_> {
    type Model = SiameseModel;
    const METRIC: &'static str = "l2_loss";

    fn step(&mut self, rng: &mut ChaCha8Rng) -> Result<f64> {
        let pairs = (0..self.batch).map(|_| draw_pair(&self.train, rng)).collect::<Result<Vec<_>>>()?;
        self.trainer.train_step(&pairs)
    }

    fn validate(&self) -> Result<(f64, Vec<(&'static str, f64)>)> {
        let first: Vec<&Image> = self.validation.iter().map(|p| p.bscan_a).collect();
        let second: Vec<&Image> = self.validation.iter().map(|p| p.bscan_b).collect();
        let pred = self.trainer.model().predict_pairs(&first, &second)?;
        let n = pred.len() as f64;
        let (mut sq, mut abs) = (0.0, 0.0);
        for (p, pair) in pred.iter().zip(&self.validation) {
            let err = p - pair.delta_t;
            sq += (err / INTERVAL_SCALE_MONTHS).powi(2);
            abs += err.abs();
        }
        Ok((sq / n, vec![("mae_months", abs / n)]))
    }

    fn model(&self) -> &SiameseModel {
        self.trainer.model()
    }
}

/// Trains the siamese interval regressor on bin-uniform pairs drawn from
/// `train`, validating on a fixed pair set from `validation`, and keeps the
/// weights with the lowest validation loss.
pub fn pretrain_siamese(
    train: &[&PreparedEye],
    validation: &[&PreparedEye],
    cfg: &PretrainConfig,
) -> Result<PretrainOutcome<SiameseModel>> {
    cfg.validate()?;
    super::check_leakage(train, validation, &[])?;
    let train = pair_eyes(train);
    let val_eyes = pair_eyes(validation);
    if train.is_empty() {
        return Err(Error::Data("training cohort has no eye with two or more scans".into()));
    }
    if val_eyes.is_empty() {
        return Err(Error::Data("validation cohort has no eye with two or more scans".into()));
    }
    let mut rng = rng_for(cfg.seed, &[stream::VALIDATION_PAIRS]);
    let val_pairs = (0..cfg.validation_samples)
        .map(|_| draw_pair(&val_eyes, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let model = SiameseModel::new(&cfg.encoder, cfg.seed)?;
    let mut task = SiameseTask {
        trainer: SiameseTrainer::new(model, cfg.learning_rate),
        train,
        validation: val_pairs,
        batch: cfg.batch_size,
    };
    run(&mut task, cfg)
}

fn draw_image<'a>(eyes: &[&'a PreparedEye], rng: &mut ChaCha8Rng) -> &'a Image {
    let eye = eyes[rng.random_range(0..eyes.len())];
    let scan = &eye.images[rng.random_range(0..eye.images.len())];
    &scan[rng.random_range(0..scan.len())]
}

struct AutoencoderTask<'a> {
    trainer: AutoencoderTrainer,
    train: Vec<&'a PreparedEye>,
    validation: Vec<&'a Image>,
    batch: usize,
}

impl PretextTask for AutoencoderTask<'_> {
    type Model = AutoencoderModel;
    const METRIC: &'static str = "mse";

    fn step(&mut self, rng: &mut ChaCha8Rng) -> Result<f64> {
        let images: Vec<&Image> = (0..self.batch).map(|_| draw_image(&self.train, rng)).collect();
        self.trainer.train_step(&images)
    }

    fn validate(&self) -> Result<(f64, Vec<(&'static str, f64)>)> {
        let model = self.trainer.model();
        let (mut total, mut count) = (0.0, 0usize);
        for chunk in self.validation.chunks(INFERENCE_BATCH) {
            let mut ctx = Ctx::new(model.store(), Mode::Eval);
            let y = model.forward(&mut ctx, chunk)?;
            let out = ctx.tape.value(y).data();
            let target = chunk.iter().flat_map(|i| i.pixels.iter());
            total += out.iter().zip(target).map(|(a, &b)| (a - b as f64).powi(2)).sum::<f64>();
            count += out.len();
        }
        Ok((total / count as f64, Vec::new()))
    }

    fn model(&self) -> &AutoencoderModel {
        self.trainer.model()
    }
}

/// Cross-sectional baseline: reconstructs single B-scans, with no pairing
/// and no use of acquisition times.
pub fn pretrain_autoencoder(
    train: &[&PreparedEye],
    validation: &[&PreparedEye],
    cfg: &PretrainConfig,
) -> Result<PretrainOutcome<AutoencoderModel>> {
    cfg.validate()?;
    super::check_leakage(train, validation, &[])?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::Data("autoencoder pretraining needs training and validation eyes".into()));
    }
    let mut rng = rng_for(cfg.seed, &[stream::VALIDATION_PAIRS]);
    let val_images = (0..cfg.validation_samples).map(|_| draw_image(validation, &mut rng)).collect();
    let model = AutoencoderModel::new(&cfg.encoder, cfg.seed)?;
    let mut task = AutoencoderTask {
        trainer: AutoencoderTrainer::new(model, cfg.learning_rate),
        train: train.to_vec(),
        validation: val_images,
        batch: cfg.batch_size,
    };
    run(&mut task, cfg)
}
