//! The merged run configuration, its TOML form and its content hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluation::LoocvConfig;
use crate::evm::{BandSpec, MagnifyParams};
use crate::task::Task;
use crate::training::{ArchSpec, TrainConfig};

pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub clips: Option<PathBuf>,
    pub keypoints: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub references: Option<PathBuf>,
}

/// Every tunable of the pipeline. Only the input paths lack defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Inputs,
    pub task: Task,
    pub fps: f64,
    pub clip_len: usize,
    pub band: BandSpec,
    pub magnify: MagnifyParams,
    pub arch: ArchSpec,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            inputs: Inputs::default(),
            task: Task::TypeBinary,
            fps: 30.0,
            clip_len: 100,
            band: BandSpec::TREMOR,
            magnify: MagnifyParams::default(),
            arch: ArchSpec::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Config(format!("fps must be positive, got {}", self.fps)));
        }
        if self.clip_len == 0 {
            return Err(Error::Config("clip_len must be positive".into()));
        }
        self.band.validate()?;
        self.arch.validate()?;
        self.train.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    /// First 16 hex digits of SHA-256 over the key-sorted JSON form, so the
    /// value does not depend on field or table order in the source file.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes to JSON");
        let digest = Sha256::digest(canonical_json(&value).as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn loocv(&self, jobs: usize) -> LoocvConfig {
        LoocvConfig {
            train: self.train.clone(),
            arch: self.arch.clone(),
            jobs,
        }
    }
}

fn canonical_json(value: &serde_json::Value) -> String {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical_json(&map[k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => {
            let body: Vec<String> = items.iter().map(canonical_json).collect();
            format!("[{}]", body.join(","))
        }
        other => other.to_string(),
    }
}
