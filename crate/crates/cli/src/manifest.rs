//! Run manifests. Every command writes `manifest.json` next to its
//! outputs: the resolved configuration, the seeds in play, and every file
//! the run emitted. The manifest holds the run's only timestamp, keeping
//! all other outputs byte-identical across re-runs with equal inputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sacl_core::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub created_at: String,
    /// Master seed; derived sub-seeds are listed in `seeds`.
    pub seed: u64,
    pub seeds: Vec<u64>,
    /// Resolved flags and file config, enough to re-run the command.
    pub config: serde_json::Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, seeds: Vec<u64>, config: serde_json::Value) -> Self {
        Self {
            tool: "sacl".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            created_at: chrono::Utc::now().to_rfc3339(),
            seed,
            seeds,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }
}

/// An output directory that records every file written into it, so the
/// manifest's `outputs` list is complete by construction.
pub struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    /// Serializes `value` as pretty-printed JSON with a trailing newline.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_text(&mut self, name: &str, content: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, content)?;
        self.written.push(name.to_string());
        Ok(path)
    }

    /// Records a file written through some other channel (checkpoints,
    /// dataset writers) under this directory.
    pub fn record(&mut self, name: &str) {
        self.written.push(name.to_string());
    }

    pub fn join(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes the manifest itself, listing every recorded file plus the
    /// manifest. Call last.
    pub fn finish(mut self, mut manifest: RunManifest) -> Result<()> {
        self.written.push("manifest.json".to_string());
        manifest.outputs = self.written.clone();
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(self.dir.join("manifest.json"), text)?;
        Ok(())
    }
}

/// Resolves the output directory: an explicit flag wins, then the
/// `SACL_OUT_DIR` environment variable.
pub fn resolve_out_dir(flag: Option<PathBuf>) -> Result<PathBuf> {
    if let Some(dir) = flag {
        return Ok(dir);
    }
    match std::env::var_os("SACL_OUT_DIR") {
        Some(dir) if !dir.is_empty() => Ok(PathBuf::from(dir)),
        _ => Err(Error::Config(
            "no output directory: pass --out or set SACL_OUT_DIR".to_string(),
        )),
    }
}

/// Resolves the training thread cap: an explicit flag wins, then the
/// `SACL_THREADS` environment variable, then the machine's parallelism.
pub fn resolve_threads(flag: Option<usize>) -> Result<usize> {
    let value = match flag {
        Some(n) => n,
        None => match std::env::var("SACL_THREADS") {
            Ok(s) => s
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("SACL_THREADS must be a number, got `{}`", s)))?,
            Err(_) => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        },
    };
    if value == 0 {
        return Err(Error::Config("thread count must be at least 1".to_string()));
    }
    Ok(value)
}
