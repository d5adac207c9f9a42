//! Per-run manifest: the resolved settings, their hash, input digests and
//! tool versions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    /// Resolved settings without unset keys. The object is itself a valid
    /// `--config` file that reproduces the run.
    pub settings: serde_json::Value,
    /// SHA-256 of the compact JSON encoding of `settings`.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub versions: BTreeMap<String, String>,
    /// SHA-256 of every input file.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub wall_time_secs: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Core(topiq::Error::Io { path: path.to_path_buf(), source: e }))?;
    Ok(sha256_hex(&bytes))
}

pub fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("topiq".to_string(), topiq::VERSION.to_string()),
        ("topiq-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("model_format".to_string(), topiq::lda::VERSION.to_string()),
    ])
}

pub struct ManifestBuilder {
    command: String,
    settings: serde_json::Value,
    seed: Option<u64>,
    threads: Option<usize>,
    inputs: Vec<PathBuf>,
}

impl ManifestBuilder {
    pub fn new<S: Serialize>(command: &str, settings: &S, seed: Option<u64>, threads: Option<usize>, inputs: Vec<PathBuf>) -> Result<Self, CliError> {
        let mut settings = serde_json::to_value(settings).map_err(|e| CliError::Validation(e.to_string()))?;
        if let Some(obj) = settings.as_object_mut() {
            obj.retain(|_, v| !v.is_null());
        }
        Ok(Self {
            command: command.to_string(),
            settings,
            seed,
            threads,
            inputs,
        })
    }

    pub fn config_hash(&self) -> String {
        sha256_hex(self.settings.to_string().as_bytes())
    }

    pub fn finish(self, outputs: &[PathBuf], wall_time_secs: f64) -> Result<Manifest, CliError> {
        let mut inputs = BTreeMap::new();
        for p in &self.inputs {
            inputs.insert(p.display().to_string(), file_digest(p)?);
        }
        Ok(Manifest {
            command: self.command.clone(),
            config_hash: self.config_hash(),
            settings: self.settings,
            seed: self.seed,
            threads: self.threads,
            versions: versions(),
            inputs,
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            wall_time_secs,
        })
    }
}
