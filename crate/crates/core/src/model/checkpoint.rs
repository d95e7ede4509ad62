//! Model serialization.
//!
//! A checkpoint stores the model configuration, the label vocabulary, and
//! every parameter tensor keyed by its canonical name. JSON keeps the f64
//! payload bit-exact across save/load, so a reloaded model evaluates
//! identically to the one that was saved.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ModelKind, ModelParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Bump when the on-disk layout changes incompatibly.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub label_names: Vec<String>,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, label_names: &[String]) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            kind: model.kind(),
            config: model.config.clone(),
            label_names: label_names.to_vec(),
            tensors: model.named_params().into_iter().map(|(n, t)| (n, t.clone())).collect(),
        }
    }

    /// Reconstructs the model, validating that the tensor names and shapes
    /// match what the configuration demands.
    pub fn into_model(self) -> Result<Model> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {} is not supported (expected {})",
                self.format_version, FORMAT_VERSION
            )));
        }
        self.config.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        if self.label_names.len() != self.config.num_classes {
            return Err(Error::Checkpoint(format!(
                "{} label names for {} classes",
                self.label_names.len(),
                self.config.num_classes
            )));
        }
        // Build a zero-parameter model of the right kind to learn the
        // expected names and shapes, then fill it from the stored tensors.
        let mut model = Model::zeroed(self.config.clone(), self.kind);
        let mut remaining = self.tensors;
        for (name, slot) in model.named_params_mut() {
            let stored = remaining
                .remove(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor '{}'", name)))?;
            if stored.shape() != slot.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor '{}' has shape {:?}, expected {:?}",
                    name,
                    stored.shape(),
                    slot.shape()
                )));
            }
            if !stored.is_finite() {
                return Err(Error::Checkpoint(format!("tensor '{}' has non-finite entries", name)));
            }
            *slot = stored;
        }
        if let Some(name) = remaining.into_keys().next() {
            return Err(Error::Checkpoint(format!("unexpected tensor '{}'", name)));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        let mut writer = BufWriter::new(file);
        serde_json::to_writer(&mut writer, self)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(file))?;
        Ok(ckpt)
    }
}

/// Saves a model with its label vocabulary.
pub fn save_model(model: &Model, label_names: &[String], path: &Path) -> Result<()> {
    Checkpoint::from_model(model, label_names).save(path)
}

/// Loads a model and its label vocabulary.
pub fn load_model(path: &Path) -> Result<(Model, Vec<String>)> {
    let ckpt = Checkpoint::load(path)?;
    let labels = ckpt.label_names.clone();
    Ok((ckpt.into_model()?, labels))
}

impl Model {
    /// All-zeros model of the given kind, used as a shape template.
    fn zeroed(config: ModelConfig, kind: ModelKind) -> Model {
        use super::{BiLstmLayer, DualLstmParams, LstmCellParams, LstmStack, MlpParams};
        let d_h = config.d_h;
        let zero_stack = |d_in: usize| LstmStack {
            layers: (0..config.num_lstm_layers)
                .map(|layer| {
                    let input = if layer == 0 { d_in } else { 2 * d_h };
                    let cell = || LstmCellParams {
                        w_ih: Tensor::zeros(&[4 * d_h, input]),
                        w_hh: Tensor::zeros(&[4 * d_h, d_h]),
                        b: Tensor::zeros(&[4 * d_h]),
                    };
                    BiLstmLayer { fwd: cell(), bwd: cell() }
                })
                .collect(),
        };
        let params = match kind {
            ModelKind::DualLstm => ModelParams::DualLstm(DualLstmParams {
                situation: zero_stack(config.d_u),
                speaker: zero_stack(config.d_u),
                cold_start: Tensor::zeros(&[2 * d_h]),
                w_c: Tensor::zeros(&[config.num_classes, config.z_dim()]),
                b_c: Tensor::zeros(&[config.num_classes]),
            }),
            ModelKind::Mlp => ModelParams::Mlp(MlpParams {
                w_h: Tensor::zeros(&[config.z_dim(), config.d_u]),
                b_h: Tensor::zeros(&[config.z_dim()]),
                w_c: Tensor::zeros(&[config.num_classes, config.z_dim()]),
                b_c: Tensor::zeros(&[config.num_classes]),
            }),
        };
        Model { config, params }
    }
}
