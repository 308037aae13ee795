use ltssl_autodiff::{ParamId, ParamKind, ParamStore, Tensor, Var};
use rand_chacha::ChaCha8Rng;

use super::context::BnBuffers;
use super::{add_dense, he_uniform, Ctx, DenseIds, EncoderConfig, Variant};
use crate::error::Result;

pub(crate) const PREFIX: &str = "encoder.";

#[derive(Clone, Debug)]
struct ConvLayer {
    kernel: ParamId,
    bias: ParamId,
    gamma: ParamId,
    beta: ParamId,
    buffers: BnBuffers,
}

/// Convolutional encoder: blocks of conv → batch norm → ReLU layers, each
/// block closed by a 2× max-pool, then a linear projection to the embedding.
///
/// The dense variant feeds each block the concatenation of the previous
/// block's output with a max-pooled copy of that block's own input.
#[derive(Clone, Debug)]
pub struct Encoder {
    config: EncoderConfig,
    blocks: Vec<Vec<ConvLayer>>,
    embed: DenseIds,
}

impl Encoder {
    pub fn build(config: &EncoderConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let mut blocks = Vec::with_capacity(config.block_channels.len());
        for (b, &out_ch) in config.block_channels.iter().enumerate() {
            let mut in_ch = config.block_input_channels(b);
            let mut layers = Vec::with_capacity(config.layers_per_block);
            for l in 0..config.layers_per_block {
                let name = format!("{PREFIX}block{b}.layer{l}");
                let fan_in = 9 * in_ch;
                layers.push(ConvLayer {
                    kernel: store.add(
                        format!("{name}.conv.kernel"),
                        he_uniform(&[3, 3, in_ch, out_ch], fan_in, rng),
                        ParamKind::Trainable,
                    ),
                    bias: store.add(format!("{name}.conv.bias"), Tensor::zeros(&[out_ch]), ParamKind::Trainable),
                    gamma: store.add(format!("{name}.bn.gamma"), Tensor::full(&[out_ch], 1.0), ParamKind::Trainable),
                    beta: store.add(format!("{name}.bn.beta"), Tensor::zeros(&[out_ch]), ParamKind::Trainable),
                    buffers: BnBuffers {
                        mean: store.add(format!("{name}.bn.running_mean"), Tensor::zeros(&[out_ch]), ParamKind::Buffer),
                        var: store.add(format!("{name}.bn.running_var"), Tensor::full(&[out_ch], 1.0), ParamKind::Buffer),
                        updates: store.add(format!("{name}.bn.updates"), Tensor::zeros(&[1]), ParamKind::Buffer),
                    },
                });
                in_ch = out_ch;
            }
            blocks.push(layers);
        }
        let embed = add_dense(store, &format!("{PREFIX}embed"), config.flat_dim(), config.embedding_dim, rng);
        Ok(Encoder {
            config: config.clone(),
            blocks,
            embed,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// Maps an `[N, S, S, 1]` batch to `[N, embedding_dim]`.
    pub fn forward(&self, ctx: &mut Ctx<'_>, input: Var) -> Result<Var> {
        Ok(*self.forward_trace(ctx, input)?.last().expect("trace ends with the embedding"))
    }

    /// Like [`Self::forward`] but also returns every block's pooled output
    /// ahead of the embedding.
    pub fn forward_trace(&self, ctx: &mut Ctx<'_>, input: Var) -> Result<Vec<Var>> {
        let n = ctx.tape.shape(input)[0];
        let mut trace = Vec::with_capacity(self.blocks.len() + 1);
        let (mut x, mut block_input) = (input, input);
        for (b, layers) in self.blocks.iter().enumerate() {
            if b > 0 && self.config.variant == Variant::Dense {
                let skip = ctx.tape.max_pool2(block_input)?;
                x = ctx.tape.concat(x, skip, 3)?;
            }
            block_input = x;
            for layer in layers {
                let (k, bias) = (ctx.param(layer.kernel), ctx.param(layer.bias));
                x = ctx.tape.conv2d(x, k, bias)?;
                x = ctx.batch_norm(x, layer.gamma, layer.beta, layer.buffers)?;
                x = ctx.tape.relu(x)?;
            }
            x = ctx.tape.max_pool2(x)?;
            trace.push(x);
        }
        let flat = ctx.tape.reshape(x, &[n, self.config.flat_dim()])?;
        trace.push(self.embed.apply(ctx, flat)?);
        Ok(trace)
    }

    /// Convolution biases that feed straight into train-mode batch norm;
    /// their gradient is identically zero there.
    pub fn conv_biases(&self) -> Vec<ParamId> {
        self.blocks.iter().flatten().map(|l| l.bias).collect()
    }
}

impl Encoder {
    /// Eval-mode embeddings of `images`, computed in fixed-size chunks.
    pub fn embed_images(&self, store: &ParamStore, images: &[&crate::data::Image]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(super::INFERENCE_BATCH) {
            let mut ctx = Ctx::new(store, super::Mode::Eval);
            let x = ctx.input(super::batch_tensor(chunk, self.config.input_size)?);
            let h = self.forward(&mut ctx, x)?;
            out.extend(ctx.tape.value(h).data().chunks(self.config.embedding_dim).map(<[f64]>::to_vec));
        }
        Ok(out)
    }
}
