use ltssl_autodiff::{Adam, AdamConfig, ParamId, ParamStore};
use rand::seq::SliceRandom;

use super::log::MetricLog;
use super::pretrain::select_best;
use super::trainer::optimize;
use super::Setting;
use crate::data::{central_index, select_visit_at, Image, PreparedEye};
use crate::error::{Error, Result};
use crate::evaluation::roc_auc;
use crate::models::{transfer_encoder, ClassifierConfig, ClassifierModel, EncoderConfig, Model};
use crate::seed::{rng_for, stream};

/// Central B-scan of the selected visit with its conversion label.
#[derive(Clone, Debug)]
pub struct Sample {
    pub image: Image,
    pub converts: bool,
    pub patient_id: u32,
    pub eye_id: u32,
    pub time: f64,
}

/// One sample per eye with an eligible visit for `horizon`.
pub fn conversion_samples(eyes: &[&PreparedEye], horizon: f64) -> Vec<Sample> {
    eyes.iter()
        .filter_map(|eye| {
            let visit = select_visit_at(&eye.times, eye.conversion_time, horizon)?;
            let volume = &eye.images[visit.scan_index];
            Some(Sample {
                image: volume[central_index(volume.len())].clone(),
                converts: visit.converts,
                patient_id: eye.patient_id,
                eye_id: eye.eye_id,
                time: visit.time,
            })
        })
        .collect()
}

pub struct ClassifierTrainer {
    model: ClassifierModel,
    adam: Adam,
    ids: Vec<ParamId>,
    steps: usize,
    seed: u64,
}

impl ClassifierTrainer {
    pub fn new(model: ClassifierModel, learning_rate: f64, seed: u64) -> Self {
        let ids = model.store().trainable_ids();
        ClassifierTrainer {
            model,
            adam: Adam::new(AdamConfig::with_lr(learning_rate)),
            ids,
            steps: 0,
            seed,
        }
    }

    pub fn model(&self) -> &ClassifierModel {
        &self.model
    }

    pub fn into_model(self) -> ClassifierModel {
        self.model
    }

    /// Cross-entropy step over the whole network.
    pub fn train_step(&mut self, images: &[&Image], labels: &[usize]) -> Result<f64> {
        self.steps += 1;
        let dropout = rng_for(self.seed, &[stream::DROPOUT, self.steps as u64]);
        optimize(&mut self.model, &mut self.adam, &self.ids, self.steps, "finetune", Some(dropout), |m, ctx| {
            let p = m.forward(ctx, images)?;
            Ok(ctx.tape.cross_entropy(p, labels)?)
        })
    }
}

#[derive(Clone, Debug)]
pub struct FinetuneOutcome {
    /// Weights of the best validation epoch.
    pub model: ClassifierModel,
    /// 1-based.
    pub best_epoch: usize,
    pub best_val_auc: f64,
    pub log: MetricLog,
}

fn auc_of(model: &ClassifierModel, samples: &[Sample]) -> Result<f64> {
    let images: Vec<&Image> = samples.iter().map(|s| &s.image).collect();
    let labels: Vec<bool> = samples.iter().map(|s| s.converts).collect();
    roc_auc(&labels, &model.classify(&images)?)
}

/// Fine-tunes every parameter for exactly `epochs` epochs and returns the
/// epoch with the highest validation ROC AUC. With `init`, the encoder is
/// first copied from those weights; otherwise training starts from scratch.
pub fn finetune(
    init: Option<&ParamStore>,
    encoder: &EncoderConfig,
    setting: Setting,
    train: &[Sample],
    validation: &[Sample],
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> Result<FinetuneOutcome> {
    let context = |what: &str| format!("fine-tuning ({what})");
    let pos = validation.iter().filter(|s| s.converts).count();
    if pos == 0 || pos == validation.len() {
        return Err(Error::SingleClassValidation {
            context: context("validation"),
        });
    }
    if train.len() < 2 {
        return Err(Error::Data("fine-tuning needs at least two training samples".into()));
    }
    if epochs == 0 || batch_size < 2 {
        return Err(Error::Config("epochs must be positive and batch_size at least 2".into()));
    }
    let head = ClassifierConfig {
        hidden: setting.hidden,
        dropout: setting.dropout,
    };
    let mut model = ClassifierModel::new(encoder, head, seed)?;
    if let Some(source) = init {
        transfer_encoder(source, &mut model)?;
    }
    let mut trainer = ClassifierTrainer::new(model, setting.learning_rate, seed);
    let mut log = MetricLog::new("epoch");
    let mut aucs = Vec::with_capacity(epochs);
    let mut best: Option<ClassifierModel> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=epochs {
        let mut rng = rng_for(seed, &[stream::SHUFFLE, epoch as u64]);
        order.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(batch_size) {
            // A single-sample batch has no batch variance to normalize with.
            if chunk.len() < 2 {
                continue;
            }
            let images: Vec<&Image> = chunk.iter().map(|&i| &train[i].image).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| usize::from(train[i].converts)).collect();
            total += trainer.train_step(&images, &labels)?;
            batches += 1;
        }
        log.push(epoch, "train", "cross_entropy", total / batches as f64);
        let auc = auc_of(trainer.model(), validation)?;
        log.push(epoch, "val", "roc_auc", auc);
        aucs.push((epoch, auc));
        if select_best(&aucs, false) == Some((epoch, auc)) {
            best = Some(trainer.model().clone());
        }
    }
    let (best_epoch, best_val_auc) = select_best(&aucs, false).ok_or_else(|| Error::Undefined("no finite validation AUC".into()))?;
    Ok(FinetuneOutcome {
        model: best.expect("selected epoch was snapshotted"),
        best_epoch,
        best_val_auc,
        log,
    })
}
