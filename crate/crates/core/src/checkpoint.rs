//! JSON checkpoints holding every network, the configuration and the loss
//! history. Floats are written in shortest round-trip form, so a reloaded
//! bundle produces bitwise identical outputs.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::autodiff::Activation;
use crate::models::{Mlp, ModelBundle, ModelConfig};
use crate::tensor::Tensor;
use crate::trainer::{TrainConfig, TrainHistory};

pub const CHECKPOINT_FORMAT: &str = "privsplit-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u32 },
    #[error("checkpoint I/O failed: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T, E = CheckpointError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub bundle: ModelBundle,
    pub history: TrainHistory,
    pub train_config: Option<TrainConfig>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRecord {
    weight_shape: [usize; 2],
    weight: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetRecord {
    widths: Vec<usize>,
    hidden_activation: Activation,
    output_activation: Activation,
    layers: Vec<LayerRecord>,
}

impl NetRecord {
    fn from_mlp(net: &Mlp) -> Self {
        let layers = net
            .params()
            .chunks(2)
            .map(|p| LayerRecord {
                weight_shape: [p[0].rows(), p[0].cols()],
                weight: p[0].values().to_vec(),
                bias: p[1].values().to_vec(),
            })
            .collect();
        Self {
            widths: net.widths().to_vec(),
            hidden_activation: net.hidden_activation(),
            output_activation: net.output_activation(),
            layers,
        }
    }

    fn into_mlp(self, name: &str) -> Result<Mlp> {
        let bad = |e: &dyn std::fmt::Display| CheckpointError::Malformed(format!("{name}: {e}"));
        let mut params = Vec::with_capacity(2 * self.layers.len());
        for layer in self.layers {
            let cols = layer.weight_shape[1];
            params.push(Tensor::new(layer.weight_shape.to_vec(), layer.weight).map_err(|e| bad(&e))?);
            if layer.bias.len() != cols {
                return Err(bad(&format!("bias length {} for {cols} outputs", layer.bias.len())));
            }
            params.push(Tensor::new(vec![cols], layer.bias).map_err(|e| bad(&e))?);
        }
        Mlp::from_parts(self.widths, self.hidden_activation, self.output_activation, params).map_err(|e| bad(&e))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Networks {
    encoder: NetRecord,
    decoder: NetRecord,
    discriminator: NetRecord,
    perceptual: NetRecord,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format: String,
    version: u32,
    model_config: ModelConfig,
    train_config: Option<TrainConfig>,
    networks: Networks,
    history: TrainHistory,
}

impl Checkpoint {
    pub fn new(bundle: ModelBundle, history: TrainHistory) -> Self {
        Self {
            bundle,
            history,
            train_config: None,
        }
    }

    pub fn to_json(&self) -> String {
        let b = &self.bundle;
        let doc = Document {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model_config: b.config,
            train_config: self.train_config,
            networks: Networks {
                encoder: NetRecord::from_mlp(&b.encoder),
                decoder: NetRecord::from_mlp(&b.decoder),
                discriminator: NetRecord::from_mlp(&b.discriminator),
                perceptual: NetRecord::from_mlp(&b.perceptual),
            },
            history: self.history.clone(),
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("checkpoint values are finite");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        match value.get("format").and_then(Value::as_str) {
            Some(CHECKPOINT_FORMAT) => {}
            Some(other) => return Err(CheckpointError::Malformed(format!("unknown format `{other}`"))),
            None => return Err(CheckpointError::Malformed("missing format field".into())),
        }
        let version = value
            .get("version")
            .and_then(Value::as_u64)
            .ok_or_else(|| CheckpointError::Malformed("missing version field".into()))?;
        if version != u64::from(CHECKPOINT_VERSION) {
            return Err(CheckpointError::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let doc: Document = serde_json::from_value(value).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let n = doc.networks;
        let bundle = ModelBundle {
            config: doc.model_config,
            encoder: n.encoder.into_mlp("encoder")?,
            decoder: n.decoder.into_mlp("decoder")?,
            discriminator: n.discriminator.into_mlp("discriminator")?,
            perceptual: n.perceptual.into_mlp("perceptual")?,
        };
        check_layout(&bundle)?;
        Ok(Self {
            bundle,
            history: doc.history,
            train_config: doc.train_config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        let text = String::from_utf8(bytes).map_err(|_| CheckpointError::Malformed("not UTF-8".into()))?;
        Self::from_json(&text)
    }
}

fn check_layout(b: &ModelBundle) -> Result<()> {
    let c = &b.config;
    let pw = c.privacy_width().map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    let ok = b.encoder.input_width() == c.input_width
        && b.encoder.output_width() == c.feature_width
        && b.decoder.input_width() == c.feature_width
        && b.decoder.output_width() == c.input_width
        && b.discriminator.input_width() == c.input_width
        && b.discriminator.output_width() == 1
        && b.perceptual.input_width() == c.input_width
        && pw < c.feature_width;
    if ok {
        Ok(())
    } else {
        Err(CheckpointError::Malformed("network widths disagree with the model configuration".into()))
    }
}

pub fn save_checkpoint(bundle: &ModelBundle, history: &TrainHistory, path: impl AsRef<Path>) -> Result<()> {
    Checkpoint::new(bundle.clone(), history.clone()).save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelBundle, TrainHistory)> {
    let c = Checkpoint::load(path)?;
    Ok((c.bundle, c.history))
}
