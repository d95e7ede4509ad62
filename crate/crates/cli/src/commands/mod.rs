//! Subcommand implementations and the helpers they share.

pub mod attack;
pub mod cluster;
pub mod eval;
pub mod synth;
pub mod train;

use std::path::Path;

use serde::Serialize;

use sacl_core::data::{jsonl, Conversation, DatasetMeta};
use sacl_core::model::checkpoint::load_model;
use sacl_core::model::Model;
use sacl_core::{Error, Result};

/// Loads a checkpoint and a data split, then cross-checks them: feature
/// dimension, class count, and label names must all agree before any
/// computation starts.
pub fn load_model_and_split(
    checkpoint: &Path,
    data_dir: &Path,
    split: &str,
) -> Result<(Model, Vec<String>, Vec<Conversation>, DatasetMeta)> {
    let (model, label_names) = load_model(checkpoint)?;
    let (conversations, meta) = jsonl::load_split(data_dir, split)?;
    if meta.d_u != model.config.d_u {
        return Err(Error::Data(format!(
            "feature dimension mismatch: checkpoint expects {}, data has {}",
            model.config.d_u, meta.d_u
        )));
    }
    if meta.label_names != label_names {
        return Err(Error::Data(format!(
            "label vocabulary mismatch: checkpoint has {:?}, data has {:?}",
            label_names, meta.label_names
        )));
    }
    Ok((model, label_names, conversations, meta))
}

/// Mean and sample standard deviation, with the two-decimal percentage
/// display used in result tables (`"81.23±1.12"`).
#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub display: String,
    pub values: Vec<f64>,
}

impl Aggregate {
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        let display = format!("{:.2}\u{b1}{:.2}", mean * 100.0, std * 100.0);
        Self { mean, std, display, values }
    }
}
