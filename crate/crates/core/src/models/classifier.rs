use std::collections::BTreeMap;

use ltssl_autodiff::{ParamStore, Var};
use serde::{Deserialize, Serialize};

use super::{add_dense, parse_meta, Ctx, DenseIds, Encoder, EncoderConfig, Mode, Model, ModelKind};
use crate::data::Image;
use crate::error::{Error, Result};
use crate::seed::{rng_for, stream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub dropout: f64,
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("classifier hidden width must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} must lie in [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Encoder followed by a classification block: hidden ReLU layer, dropout,
/// and a two-way softmax whose second entry is the conversion probability.
#[derive(Clone, Debug)]
pub struct ClassifierModel {
    store: ParamStore,
    encoder: Encoder,
    head_config: ClassifierConfig,
    hidden: DenseIds,
    output: DenseIds,
}

impl ClassifierModel {
    pub fn new(config: &EncoderConfig, head: ClassifierConfig, seed: u64) -> Result<Self> {
        head.validate()?;
        let mut rng = rng_for(seed, &[stream::INIT]);
        let mut store = ParamStore::new();
        let encoder = Encoder::build(config, &mut store, &mut rng)?;
        let hidden = add_dense(&mut store, "classifier.hidden", config.embedding_dim, head.hidden, &mut rng);
        let output = add_dense(&mut store, "classifier.output", head.hidden, 2, &mut rng);
        Ok(ClassifierModel {
            store,
            encoder,
            head_config: head,
            hidden,
            output,
        })
    }

    pub fn head_config(&self) -> ClassifierConfig {
        self.head_config
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    /// Class probabilities `[N, 2]`.
    pub fn forward(&self, ctx: &mut Ctx<'_>, images: &[&Image]) -> Result<Var> {
        let x = ctx.input(super::batch_tensor(images, self.encoder.config().input_size)?);
        let h = self.encoder.forward(ctx, x)?;
        let z = self.hidden.apply(ctx, h)?;
        let z = ctx.tape.relu(z)?;
        let z = ctx.dropout(z, self.head_config.dropout)?;
        let logits = self.output.apply(ctx, z)?;
        Ok(ctx.tape.softmax(logits)?)
    }

    /// Eval-mode class probabilities, one `[p_stable, p_convert]` per image.
    pub fn predict_probs(&self, images: &[&Image]) -> Result<Vec<[f64; 2]>> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(super::INFERENCE_BATCH) {
            let mut ctx = Ctx::new(&self.store, Mode::Eval);
            let p = self.forward(&mut ctx, chunk)?;
            out.extend(ctx.tape.value(p).data().chunks(2).map(|r| [r[0], r[1]]));
        }
        Ok(out)
    }

    /// Probability of conversion for each image.
    pub fn classify(&self, images: &[&Image]) -> Result<Vec<f64>> {
        Ok(self.predict_probs(images)?.into_iter().map(|p| p[1]).collect())
    }

    pub fn embed(&self, images: &[&Image]) -> Result<Vec<Vec<f64>>> {
        self.encoder.embed_images(&self.store, images)
    }

    pub fn head_from_description(meta: &BTreeMap<String, String>) -> Result<ClassifierConfig> {
        Ok(ClassifierConfig {
            hidden: parse_meta(meta, "arch.classifier_hidden")?,
            dropout: parse_meta(meta, "arch.dropout")?,
        })
    }
}

impl Model for ClassifierModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Classifier
    }

    fn encoder_config(&self) -> &EncoderConfig {
        self.encoder.config()
    }

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn describe(&self) -> BTreeMap<String, String> {
        let mut meta = BTreeMap::new();
        meta.insert("arch.kind".into(), self.kind().as_str().into());
        self.encoder_config().describe(&mut meta);
        meta.insert("arch.classifier_hidden".into(), self.head_config.hidden.to_string());
        meta.insert("arch.dropout".into(), self.head_config.dropout.to_string());
        meta
    }
}
