//! Output directory with a single manifest and hash-stamped JSON records.

use serde::Serialize;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

use crate::config::RunConfig;

pub struct ArtifactDir {
    dir: PathBuf,
    command: String,
    hash: String,
    config: RunConfig,
    files: Vec<String>,
}

impl ArtifactDir {
    pub fn create(config: &RunConfig, command: &str) -> std::io::Result<Self> {
        let dir = config.output.dir.join(command);
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            command: command.to_string(),
            hash: config.hash(),
            config: config.clone(),
            files: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Registers a file written by the caller and returns its path.
    pub fn file(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.dir.join(name)
    }

    /// Writes `value` as pretty JSON with a `config_hash` field.
    pub fn json(&mut self, name: &str, value: &impl Serialize) -> std::io::Result<()> {
        let stamped = stamp(&self.hash, serde_json::to_value(value).map_err(std::io::Error::other)?);
        let path = self.file(name);
        std::fs::write(path, serde_json::to_string_pretty(&stamped).map_err(std::io::Error::other)?)
    }

    /// Writes `manifest.json`; `status` is `passed`, `failed` or `error`.
    pub fn finish(mut self, status: &str, checks: &[crate::checks::CheckLine]) -> std::io::Result<PathBuf> {
        self.files.sort();
        let threads = rayon::current_num_threads();
        let manifest = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "config_hash": self.hash,
            "config": self.config,
            "threads": threads,
            "thread_env": crate::THREADS_ENV,
            "fourier_convention": polaron_core::spectral::FOURIER_CONVENTION,
            "status": status,
            "checks": checks,
            "artifacts": self.files,
        });
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?)?;
        Ok(path)
    }
}

pub fn stamp(hash: &str, value: Value) -> Value {
    match value {
        Value::Object(mut m) => {
            m.insert("config_hash".into(), Value::String(hash.to_string()));
            Value::Object(m)
        }
        other => json!({ "config_hash": hash, "data": other }),
    }
}
