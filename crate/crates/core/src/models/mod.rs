//! Network architectures: the convolutional encoder (vgg and dense
//! variants), the siamese interval regressor, the conversion classifier and
//! the autoencoder baseline.
//!
//! Every model owns a [`ParamStore`]; forward passes run inside a [`Ctx`]
//! that binds parameters onto a fresh tape, so weight sharing between the
//! two siamese branches is exact by construction.

mod autoencoder;
mod classifier;
mod context;
mod encoder;
mod siamese;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ltssl_autodiff::{ParamKind, ParamStore, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Image;
use crate::error::{Error, Result};

pub use autoencoder::AutoencoderModel;
pub use classifier::{ClassifierConfig, ClassifierModel};
pub use context::{apply_bn_updates, BnUpdate, Ctx, Mode, BN_MOMENTUM};
pub use encoder::Encoder;
pub use siamese::{SiameseModel, INTERVAL_SCALE_MONTHS, PAIR_HIDDEN};

/// Images are pushed through the network in chunks of this many.
pub const INFERENCE_BATCH: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Vgg,
    Dense,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Vgg => "vgg",
            Variant::Dense => "dense",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vgg" => Ok(Variant::Vgg),
            "dense" => Ok(Variant::Dense),
            other => Err(Error::Config(format!("unknown encoder variant `{other}` (expected vgg or dense)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub variant: Variant,
    pub block_channels: Vec<usize>,
    pub layers_per_block: usize,
    pub embedding_dim: usize,
    /// Side length of the square input image.
    pub input_size: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            variant: Variant::Vgg,
            block_channels: vec![16, 32, 64],
            layers_per_block: 3,
            embedding_dim: 128,
            input_size: 128,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let blocks = self.block_channels.len();
        if blocks == 0 || self.block_channels.contains(&0) {
            return Err(Error::Config("block_channels must be non-empty and positive".into()));
        }
        if self.layers_per_block == 0 || self.embedding_dim == 0 {
            return Err(Error::Config("layers_per_block and embedding_dim must be positive".into()));
        }
        let factor = 1usize << blocks;
        if self.input_size == 0 || self.input_size % factor != 0 {
            return Err(Error::Config(format!(
                "input_size {} must be a positive multiple of {factor} ({blocks} halvings)",
                self.input_size
            )));
        }
        Ok(())
    }

    /// Channels entering block `b`.
    pub fn block_input_channels(&self, b: usize) -> usize {
        match (self.variant, b) {
            (_, 0) => 1,
            (Variant::Vgg, b) => self.block_channels[b - 1],
            (Variant::Dense, b) => self.block_channels[b - 1] + self.block_input_channels(b - 1),
        }
    }

    /// Side length of the final feature map.
    pub fn feature_size(&self) -> usize {
        self.input_size >> self.block_channels.len()
    }

    pub fn flat_dim(&self) -> usize {
        self.feature_size().pow(2) * self.block_channels.last().copied().unwrap_or(0)
    }

    pub fn describe(&self, meta: &mut BTreeMap<String, String>) {
        meta.insert("arch.variant".into(), self.variant.to_string());
        meta.insert("arch.block_channels".into(), join(&self.block_channels));
        meta.insert("arch.layers_per_block".into(), self.layers_per_block.to_string());
        meta.insert("arch.embedding_dim".into(), self.embedding_dim.to_string());
        meta.insert("arch.input_size".into(), self.input_size.to_string());
    }

    pub fn from_description(meta: &BTreeMap<String, String>) -> Result<Self> {
        let cfg = EncoderConfig {
            variant: meta_field(meta, "arch.variant")?.parse()?,
            block_channels: meta_field(meta, "arch.block_channels")?
                .split(',')
                .map(|c| c.trim().parse().map_err(|_| Error::Config(format!("bad channel `{c}`"))))
                .collect::<Result<_>>()?,
            layers_per_block: parse_meta(meta, "arch.layers_per_block")?,
            embedding_dim: parse_meta(meta, "arch.embedding_dim")?,
            input_size: parse_meta(meta, "arch.input_size")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn join(values: &[usize]) -> String {
    values.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

pub fn meta_field<'m>(meta: &'m BTreeMap<String, String>, key: &str) -> Result<&'m str> {
    meta.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Config(format!("checkpoint metadata lacks `{key}`")))
}

pub fn parse_meta<T: FromStr>(meta: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = meta_field(meta, key)?;
    raw.parse()
        .map_err(|_| Error::Config(format!("checkpoint metadata `{key}` = `{raw}` is malformed")))
}

/// What a checkpoint holds; recorded as `arch.kind`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Siamese,
    Classifier,
    Autoencoder,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Siamese => "siamese",
            ModelKind::Classifier => "classifier",
            ModelKind::Autoencoder => "autoencoder",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "siamese" => Ok(ModelKind::Siamese),
            "classifier" => Ok(ModelKind::Classifier),
            "autoencoder" => Ok(ModelKind::Autoencoder),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Shared surface of the three models.
pub trait Model {
    fn kind(&self) -> ModelKind;
    fn encoder_config(&self) -> &EncoderConfig;
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;

    /// Architecture descriptor written into checkpoint manifests.
    fn describe(&self) -> BTreeMap<String, String> {
        let mut meta = BTreeMap::new();
        meta.insert("arch.kind".into(), self.kind().as_str().into());
        self.encoder_config().describe(&mut meta);
        meta
    }

    /// Overwrites every parameter with the same-named one in `source`.
    fn load_weights(&mut self, source: &ParamStore) -> Result<()> {
        copy_params(source, self.store_mut(), |_| true)
    }
}

/// Copies parameters selected by `filter` from `source` into `target`,
/// matching by name and shape. The first missing or misshapen parameter
/// aborts the copy before anything is written.
pub(crate) fn copy_params(source: &ParamStore, target: &mut ParamStore, filter: impl Fn(&str) -> bool) -> Result<()> {
    let mut plan = Vec::new();
    for (id, param) in target.iter() {
        if !filter(&param.name) {
            continue;
        }
        let src = source.id(&param.name).ok_or_else(|| Error::ArchitectureMismatch {
            param: param.name.clone(),
            detail: "missing from the source weights".into(),
        })?;
        let src_param = source.get(src);
        if src_param.value.shape() != param.value.shape() || src_param.kind != param.kind {
            return Err(Error::ArchitectureMismatch {
                param: param.name.clone(),
                detail: format!(
                    "source {:?} ({}) vs target {:?} ({})",
                    src_param.value.shape(),
                    src_param.kind.as_str(),
                    param.value.shape(),
                    param.kind.as_str()
                ),
            });
        }
        plan.push((id, src));
    }
    for (dst, src) in plan {
        *target.value_mut(dst) = source.value(src).clone();
    }
    Ok(())
}

/// Copies the encoder of a trained model into a fresh one; everything else
/// in `target` keeps its own initialization.
pub fn transfer_encoder(source: &ParamStore, target: &mut impl Model) -> Result<()> {
    copy_params(source, target.store_mut(), |name| name.starts_with(encoder::PREFIX))
}

/// He-uniform initialization, `U(-sqrt(6/fan_in), sqrt(6/fan_in))`.
pub(crate) fn he_uniform(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape and data agree")
}

/// Registers a dense layer `{prefix}.weight` / `{prefix}.bias`.
pub(crate) fn add_dense(
    store: &mut ParamStore,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
    rng: &mut ChaCha8Rng,
) -> DenseIds {
    DenseIds {
        weight: store.add(
            format!("{prefix}.weight"),
            he_uniform(&[fan_in, fan_out], fan_in, rng),
            ParamKind::Trainable,
        ),
        bias: store.add(format!("{prefix}.bias"), Tensor::zeros(&[fan_out]), ParamKind::Trainable),
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct DenseIds {
    pub weight: ltssl_autodiff::ParamId,
    pub bias: ltssl_autodiff::ParamId,
}

impl DenseIds {
    pub fn apply(&self, ctx: &mut Ctx<'_>, x: ltssl_autodiff::Var) -> Result<ltssl_autodiff::Var> {
        let (w, b) = (ctx.param(self.weight), ctx.param(self.bias));
        Ok(ctx.tape.dense(x, w, b)?)
    }
}

/// Stacks images into an `[N, H, W, 1]` tensor, checking their size.
pub fn batch_tensor(images: &[&Image], size: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(images.len() * size * size);
    for img in images {
        if img.height != size || img.width != size {
            return Err(Error::Autodiff(ltssl_autodiff::Error::Shape {
                op: "encode",
                detail: format!("expected {size}x{size} input, got {}x{}", img.height, img.width),
            }));
        }
        data.extend(img.pixels.iter().map(|&p| p as f64));
    }
    Ok(Tensor::new(vec![images.len(), size, size, 1], data)?)
}

/// Encoder output for one B-scan, tagged with where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub eye_id: u32,
    pub scan_index: usize,
    pub bscan_index: usize,
    pub time: f64,
}
