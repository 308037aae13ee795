use ltssl_autodiff::{Adam, AdamConfig, Error as AdError, ParamId, Var};
use rand_chacha::ChaCha8Rng;

use crate::data::{Image, ScanPair};
use crate::error::{Error, Result};
use crate::models::{apply_bn_updates, AutoencoderModel, Ctx, Mode, Model, SiameseModel, INTERVAL_SCALE_MONTHS};

/// One optimizer step on `model`: forward inside a train-mode context,
/// backward, Adam update, then the batch-norm running statistics.
pub(crate) fn optimize<M: Model>(
    model: &mut M,
    adam: &mut Adam,
    ids: &[ParamId],
    step: usize,
    phase: &'static str,
    dropout_rng: Option<ChaCha8Rng>,
    forward: impl FnOnce(&M, &mut Ctx<'_>) -> Result<Var>,
) -> Result<f64> {
    let non_finite = |e: Error| match e {
        Error::Autodiff(AdError::NonFinite { .. } | AdError::NonFiniteGradient { .. }) => {
            Error::NonFiniteLoss { step, phase }
        }
        other => other,
    };
    let (loss, grads, updates) = {
        let mut ctx = Ctx::new(model.store(), Mode::Train);
        if let Some(rng) = dropout_rng {
            ctx = ctx.with_dropout_rng(rng);
        }
        let loss = forward(model, &mut ctx).map_err(non_finite)?;
        let value = ctx.tape.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { step, phase });
        }
        ctx.tape.backward(loss).map_err(|e| non_finite(e.into()))?;
        let grads = ctx.param_grads(ids);
        let (_, updates) = ctx.into_parts();
        (value, grads, updates)
    };
    adam
        .step_store(model.store_mut(), ids, &grads)
        .map_err(|e| non_finite(e.into()))?;
    apply_bn_updates(model.store_mut(), &updates);
    Ok(loss)
}

/// Adam on the interval regression loss. Targets are fed to the network in
/// years so that the loss is of order one.
pub struct SiameseTrainer {
    model: SiameseModel,
    adam: Adam,
    ids: Vec<ParamId>,
    steps: usize,
}

impl SiameseTrainer {
    pub fn new(model: SiameseModel, learning_rate: f64) -> Self {
        let ids = model.store().trainable_ids();
        SiameseTrainer {
            model,
            adam: Adam::new(AdamConfig::with_lr(learning_rate)),
            ids,
            steps: 0,
        }
    }

    pub fn model(&self) -> &SiameseModel {
        &self.model
    }

    pub fn into_model(self) -> SiameseModel {
        self.model
    }

    /// Returns the batch L2 loss (in squared years) before the update.
    pub fn train_step(&mut self, pairs: &[ScanPair<'_>]) -> Result<f64> {
        let first: Vec<&Image> = pairs.iter().map(|p| p.bscan_a).collect();
        let second: Vec<&Image> = pairs.iter().map(|p| p.bscan_b).collect();
        let targets: Vec<f64> = pairs.iter().map(|p| p.delta_t / INTERVAL_SCALE_MONTHS).collect();
        self.steps += 1;
        optimize(&mut self.model, &mut self.adam, &self.ids, self.steps, "pretext", None, |m, ctx| {
            let y = m.forward(ctx, &first, &second)?;
            Ok(ctx.tape.l2_loss(y, &targets)?)
        })
    }
}

/// Adam on per-pixel reconstruction MSE over single B-scans.
pub struct AutoencoderTrainer {
    model: AutoencoderModel,
    adam: Adam,
    ids: Vec<ParamId>,
    steps: usize,
}

impl AutoencoderTrainer {
    pub fn new(model: AutoencoderModel, learning_rate: f64) -> Self {
        let ids = model.store().trainable_ids();
        AutoencoderTrainer {
            model,
            adam: Adam::new(AdamConfig::with_lr(learning_rate)),
            ids,
            steps: 0,
        }
    }

    pub fn model(&self) -> &AutoencoderModel {
        &self.model
    }

    pub fn into_model(self) -> AutoencoderModel {
        self.model
    }

    pub fn train_step(&mut self, images: &[&Image]) -> Result<f64> {
        let target: Vec<f64> = images.iter().flat_map(|i| i.pixels.iter().map(|&p| p as f64)).collect();
        self.steps += 1;
        optimize(&mut self.model, &mut self.adam, &self.ids, self.steps, "autoencoder", None, |m, ctx| {
            let y = m.forward(ctx, images)?;
            Ok(ctx.tape.mse(y, &target)?)
        })
    }
}

