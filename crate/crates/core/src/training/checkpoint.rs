use std::collections::BTreeMap;
use std::path::Path;

use ltssl_autodiff::{checkpoint, ParamStore};

use crate::error::{Error, Result};
use crate::models::{
    meta_field, parse_meta, AutoencoderModel, ClassifierModel, EncoderConfig, Model, ModelKind, SiameseModel,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IndexKind {
    Step,
    Epoch,
}

impl IndexKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IndexKind::Step => "step",
            IndexKind::Epoch => "epoch",
        }
    }
}

/// Selected weights together with the evidence for selecting them.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub weights: ParamStore,
    /// `arch.*` descriptor of the producing model.
    pub architecture: BTreeMap<String, String>,
    pub index_kind: IndexKind,
    pub index: usize,
    pub metric_name: String,
    pub metric_value: f64,
    pub config_fingerprint: String,
}

/// FNV-1a over a serialized configuration.
pub fn config_fingerprint(serialized: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in serialized.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

impl Checkpoint {
    pub fn from_model(
        model: &impl Model,
        index_kind: IndexKind,
        index: usize,
        metric_name: &str,
        metric_value: f64,
        config_fingerprint: &str,
    ) -> Self {
        Checkpoint {
            weights: model.store().clone(),
            architecture: model.describe(),
            index_kind,
            index,
            metric_name: metric_name.into(),
            metric_value,
            config_fingerprint: config_fingerprint.into(),
        }
    }

    pub fn kind(&self) -> Result<ModelKind> {
        meta_field(&self.architecture, "arch.kind")?.parse()
    }

    pub fn encoder_config(&self) -> Result<EncoderConfig> {
        EncoderConfig::from_description(&self.architecture)
    }

    pub fn save(&self, manifest: &Path) -> Result<()> {
        let mut meta = self.architecture.clone();
        meta.insert("selection.index_kind".into(), self.index_kind.as_str().into());
        meta.insert("selection.index".into(), self.index.to_string());
        meta.insert("selection.metric".into(), self.metric_name.clone());
        meta.insert("selection.value".into(), self.metric_value.to_string());
        meta.insert("config_fingerprint".into(), self.config_fingerprint.clone());
        checkpoint::save(manifest, &self.weights, &meta)?;
        Ok(())
    }

    pub fn load(manifest: &Path) -> Result<Self> {
        let (weights, meta) = checkpoint::load(manifest)?;
        let index_kind = match meta_field(&meta, "selection.index_kind")? {
            "step" => IndexKind::Step,
            "epoch" => IndexKind::Epoch,
            other => return Err(Error::format(manifest, format!("unknown index kind `{other}`"))),
        };
        let architecture = meta
            .iter()
            .filter(|(k, _)| k.starts_with("arch."))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Ok(Checkpoint {
            weights,
            architecture,
            index_kind,
            index: parse_meta(&meta, "selection.index")?,
            metric_name: meta_field(&meta, "selection.metric")?.into(),
            metric_value: parse_meta(&meta, "selection.value")?,
            config_fingerprint: meta_field(&meta, "config_fingerprint")?.into(),
        })
    }

    fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        let found = self.kind()?;
        if found != kind {
            return Err(Error::Config(format!(
                "checkpoint holds a {} model, expected {}",
                found.as_str(),
                kind.as_str()
            )));
        }
        Ok(())
    }

    pub fn siamese(&self) -> Result<SiameseModel> {
        self.expect_kind(ModelKind::Siamese)?;
        let mut model = SiameseModel::new(&self.encoder_config()?, 0)?;
        model.load_weights(&self.weights)?;
        Ok(model)
    }

    pub fn autoencoder(&self) -> Result<AutoencoderModel> {
        self.expect_kind(ModelKind::Autoencoder)?;
        let mut model = AutoencoderModel::new(&self.encoder_config()?, 0)?;
        model.load_weights(&self.weights)?;
        Ok(model)
    }

    pub fn classifier(&self) -> Result<ClassifierModel> {
        self.expect_kind(ModelKind::Classifier)?;
        let head = ClassifierModel::head_from_description(&self.architecture)?;
        let mut model = ClassifierModel::new(&self.encoder_config()?, head, 0)?;
        model.load_weights(&self.weights)?;
        Ok(model)
    }
}
