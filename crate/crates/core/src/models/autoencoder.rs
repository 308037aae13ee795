use ltssl_autodiff::{ParamId, ParamKind, ParamStore, Tensor, Var};

use super::{add_dense, he_uniform, Ctx, DenseIds, Encoder, EncoderConfig, Mode, Model, ModelKind};
use crate::data::Image;
use crate::error::Result;
use crate::seed::{rng_for, stream};

#[derive(Clone, Debug)]
struct UpStage {
    kernel: ParamId,
    bias: ParamId,
}

/// Encoder plus a mirrored decoder: a dense layer back to the smallest
/// feature map, then one nearest-neighbour 2× upsample and 3×3 convolution
/// per encoder block, ending in a single linear channel.
#[derive(Clone, Debug)]
pub struct AutoencoderModel {
    store: ParamStore,
    encoder: Encoder,
    expand: DenseIds,
    stages: Vec<UpStage>,
}

impl AutoencoderModel {
    pub fn new(config: &EncoderConfig, seed: u64) -> Result<Self> {
        let mut rng = rng_for(seed, &[stream::INIT]);
        let mut store = ParamStore::new();
        let encoder = Encoder::build(config, &mut store, &mut rng)?;
        let expand = add_dense(&mut store, "decoder.expand", config.embedding_dim, config.flat_dim(), &mut rng);
        let mut channels: Vec<usize> = config.block_channels.iter().rev().copied().collect();
        channels.push(1);
        let stages = channels
            .windows(2)
            .enumerate()
            .map(|(i, w)| UpStage {
                kernel: store.add(
                    format!("decoder.stage{i}.conv.kernel"),
                    he_uniform(&[3, 3, w[0], w[1]], 9 * w[0], &mut rng),
                    ParamKind::Trainable,
                ),
                bias: store.add(format!("decoder.stage{i}.conv.bias"), Tensor::zeros(&[w[1]]), ParamKind::Trainable),
            })
            .collect();
        Ok(AutoencoderModel {
            store,
            encoder,
            expand,
            stages,
        })
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    /// Reconstruction `[N, S, S, 1]` of an image batch.
    pub fn forward(&self, ctx: &mut Ctx<'_>, images: &[&Image]) -> Result<Var> {
        let cfg = self.encoder.config();
        let x = ctx.input(super::batch_tensor(images, cfg.input_size)?);
        let h = self.encoder.forward(ctx, x)?;
        let z = self.expand.apply(ctx, h)?;
        let z = ctx.tape.relu(z)?;
        let side = cfg.feature_size();
        let last = *cfg.block_channels.last().expect("validated non-empty");
        let mut y = ctx.tape.reshape(z, &[images.len(), side, side, last])?;
        for (i, stage) in self.stages.iter().enumerate() {
            y = ctx.tape.upsample2(y)?;
            let (k, b) = (ctx.param(stage.kernel), ctx.param(stage.bias));
            y = ctx.tape.conv2d(y, k, b)?;
            if i + 1 < self.stages.len() {
                y = ctx.tape.relu(y)?;
            }
        }
        Ok(y)
    }

    pub fn reconstruct(&self, images: &[&Image]) -> Result<Vec<Image>> {
        let size = self.encoder.config().input_size;
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(super::INFERENCE_BATCH) {
            let mut ctx = Ctx::new(&self.store, Mode::Eval);
            let y = self.forward(&mut ctx, chunk)?;
            for img in ctx.tape.value(y).data().chunks(size * size) {
                out.push(Image::new(size, size, img.iter().map(|&v| v as f32).collect())?);
            }
        }
        Ok(out)
    }
}

impl Model for AutoencoderModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Autoencoder
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
}
