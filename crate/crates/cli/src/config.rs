//! Config file loading. Files are JSON or TOML, decided by extension, and
//! every parse failure is reported as a configuration error so the caller
//! exits with the config code rather than the data one.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use sacl_core::data::synth::SynthConfig;
use sacl_core::model::{ModelConfig, ModelKind};
use sacl_core::trainer::TrainConfig;
use sacl_core::{Error, Result};

/// Training config file: a `model` section (architecture) and an optional
/// `train` section (optimization), both with the library's field names.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainFile {
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSection {
    #[serde(default = "default_kind")]
    pub kind: ModelKind,
    #[serde(flatten)]
    pub config: ModelConfig,
}

fn default_kind() -> ModelKind {
    ModelKind::DualLstm
}

fn parse<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {}", path.display(), e)))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match ext {
        "json" => serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e))),
        "toml" => toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e))),
        other => Err(Error::Config(format!(
            "{}: unsupported config extension `{}` (expected .json or .toml)",
            path.display(),
            other
        ))),
    }
}

pub fn load_train_file(path: &Path) -> Result<TrainFile> {
    let file: TrainFile = parse(path)?;
    file.model.config.validate()?;
    file.train.validate()?;
    Ok(file)
}

pub fn load_synth_config(path: &Path) -> Result<SynthConfig> {
    let cfg: SynthConfig = parse(path)?;
    cfg.validate()?;
    Ok(cfg)
}
