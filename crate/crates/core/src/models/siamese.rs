use ltssl_autodiff::{ParamStore, Tensor, Var};

use super::{add_dense, Ctx, DenseIds, Embedding, Encoder, EncoderConfig, Mode, Model, ModelKind};
use crate::data::Image;
use crate::error::{Error, Result};
use crate::seed::{rng_for, stream};

/// Hidden width of the pair head.
pub const PAIR_HIDDEN: usize = 64;

/// The head regresses intervals in years; predictions are reported in months.
pub const INTERVAL_SCALE_MONTHS: f64 = 12.0;

/// Shared encoder applied to both scans of a pair, followed by a two-layer
/// head on the concatenated embeddings that regresses the signed interval.
#[derive(Clone, Debug)]
pub struct SiameseModel {
    store: ParamStore,
    encoder: Encoder,
    hidden: DenseIds,
    output: DenseIds,
}

impl SiameseModel {
    pub fn new(config: &EncoderConfig, seed: u64) -> Result<Self> {
        let mut rng = rng_for(seed, &[stream::INIT]);
        let mut store = ParamStore::new();
        let encoder = Encoder::build(config, &mut store, &mut rng)?;
        let hidden = add_dense(&mut store, "pair_head.hidden", 2 * config.embedding_dim, PAIR_HIDDEN, &mut rng);
        let output = add_dense(&mut store, "pair_head.output", PAIR_HIDDEN, 1, &mut rng);
        Ok(SiameseModel {
            store,
            encoder,
            hidden,
            output,
        })
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    /// Scaled interval predictions `[N]` for `N` pairs. Both branches run as
    /// one batch through the same parameter bindings.
    pub fn forward(&self, ctx: &mut Ctx<'_>, first: &[&Image], second: &[&Image]) -> Result<Var> {
        if first.len() != second.len() || first.is_empty() {
            return Err(Error::InvalidInput(format!(
                "pair batch needs equal non-empty halves, got {} and {}",
                first.len(),
                second.len()
            )));
        }
        let (h1, h2) = self.encode_pair(ctx, first, second)?;
        self.head(ctx, h1, h2)
    }

    /// Embeddings of both branches, `[N, embedding_dim]` each.
    pub fn encode_pair(&self, ctx: &mut Ctx<'_>, first: &[&Image], second: &[&Image]) -> Result<(Var, Var)> {
        let n = first.len();
        let both: Vec<&Image> = first.iter().chain(second).copied().collect();
        let x = ctx.input(super::batch_tensor(&both, self.encoder.config().input_size)?);
        let h = self.encoder.forward(ctx, x)?;
        Ok((ctx.tape.slice_rows(h, 0, n)?, ctx.tape.slice_rows(h, n, n)?))
    }

    fn head(&self, ctx: &mut Ctx<'_>, h1: Var, h2: Var) -> Result<Var> {
        let n = ctx.tape.shape(h1)[0];
        let joint = ctx.tape.concat(h1, h2, 1)?;
        let z = self.hidden.apply(ctx, joint)?;
        let z = ctx.tape.relu(z)?;
        let out = self.output.apply(ctx, z)?;
        Ok(ctx.tape.reshape(out, &[n])?)
    }

    /// Predicted intervals in months, eval mode.
    pub fn predict_pairs(&self, first: &[&Image], second: &[&Image]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(first.len());
        for (a, b) in first.chunks(super::INFERENCE_BATCH).zip(second.chunks(super::INFERENCE_BATCH)) {
            let mut ctx = Ctx::new(&self.store, Mode::Eval);
            let y = self.forward(&mut ctx, a, b)?;
            out.extend(ctx.tape.value(y).data().iter().map(|v| v * super::INTERVAL_SCALE_MONTHS));
        }
        Ok(out)
    }

    pub fn embed(&self, images: &[&Image]) -> Result<Vec<Vec<f64>>> {
        self.encoder.embed_images(&self.store, images)
    }

    /// Interval from precomputed embeddings, in months. The head sees the
    /// pair in the given order; swapping arguments is a separate evaluation.
    pub fn predict_interval(&self, first: &Embedding, second: &Embedding) -> Result<f64> {
        Ok(self.predict_from_embeddings(&[(&first.values, &second.values)])?[0])
    }

    /// Batched form of [`Self::predict_interval`] on raw embedding vectors.
    pub fn predict_from_embeddings(&self, pairs: &[(&Vec<f64>, &Vec<f64>)]) -> Result<Vec<f64>> {
        let dim = self.encoder.config().embedding_dim;
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let mut a = Vec::with_capacity(pairs.len() * dim);
        let mut b = Vec::with_capacity(pairs.len() * dim);
        for (x, y) in pairs {
            if x.len() != dim || y.len() != dim {
                return Err(Error::Autodiff(ltssl_autodiff::Error::Shape {
                    op: "predict_interval",
                    detail: format!("embeddings of length {} and {}, model expects {dim}", x.len(), y.len()),
                }));
            }
            a.extend_from_slice(x);
            b.extend_from_slice(y);
        }
        let mut ctx = Ctx::new(&self.store, Mode::Eval);
        let h1 = ctx.input(Tensor::new(vec![pairs.len(), dim], a)?);
        let h2 = ctx.input(Tensor::new(vec![pairs.len(), dim], b)?);
        let y = self.head(&mut ctx, h1, h2)?;
        Ok(ctx.tape.value(y).data().iter().map(|v| v * super::INTERVAL_SCALE_MONTHS).collect())
    }

    /// Zeroes the final head layer (its output is then identically zero).
    pub fn zero_output_layer(&mut self) {
        for id in [self.output.weight, self.output.bias] {
            self.store.value_mut(id).data_mut().fill(0.0);
        }
    }
}

impl Model for SiameseModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Siamese
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

    fn describe(&self) -> std::collections::BTreeMap<String, String> {
        let mut meta = std::collections::BTreeMap::new();
        meta.insert("arch.kind".into(), self.kind().as_str().into());
        self.encoder_config().describe(&mut meta);
        meta.insert("arch.pair_hidden".into(), super::PAIR_HIDDEN.to_string());
        meta
    }
}
