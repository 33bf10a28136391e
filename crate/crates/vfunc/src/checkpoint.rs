//! Versioned JSON checkpoints keyed by a hash of the training settings.

use crate::config::ExperimentConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;
use vfunc_core::model::VFuncModel;

pub const FORMAT: &str = "vfunc-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint {0} not found; run `vfunc train` with the same config first")]
    Missing(String),
    #[error("cannot access checkpoint {path}: {message}")]
    Io { path: String, message: String },
    #[error("checkpoint {path} is malformed: {message}")]
    Malformed { path: String, message: String },
    #[error("checkpoint {path} has format {format} version {version}; expected {FORMAT} version {VERSION}")]
    Version { path: String, format: String, version: u32 },
    #[error("checkpoint {path} was trained with different settings (hash {found}, config gives {expected})")]
    ConfigMismatch { path: String, found: String, expected: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub model: VFuncModel,
}

/// SHA-256 of the canonical (key-sorted) JSON of the training settings.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(&cfg.training_view()).expect("config serializes");
    format!("{:x}", Sha256::digest(canonical.as_bytes()))
}

impl Checkpoint {
    pub fn new(config: &ExperimentConfig, model: VFuncModel) -> Self {
        Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            config_hash: config_hash(config),
            config: config.clone(),
            model,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(path: &str, text: &str) -> Result<Self, CheckpointError> {
        let header: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CheckpointError::Malformed { path: path.into(), message: e.to_string() })?;
        let format = header.get("format").and_then(|v| v.as_str()).unwrap_or_default().to_string();
        let version = header.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if format != FORMAT || version != VERSION {
            return Err(CheckpointError::Version { path: path.into(), format, version });
        }
        let ckpt: Checkpoint = serde_json::from_value(header)
            .map_err(|e| CheckpointError::Malformed { path: path.into(), message: e.to_string() })?;
        let actual = config_hash(&ckpt.config);
        if actual != ckpt.config_hash {
            return Err(CheckpointError::Malformed {
                path: path.into(),
                message: format!("stored hash {} does not match its config ({actual})", ckpt.config_hash),
            });
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_json())
            .map_err(|e| CheckpointError::Io { path: path.display().to_string(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CheckpointError::Missing(shown.clone()),
            _ => CheckpointError::Io { path: shown.clone(), message: e.to_string() },
        })?;
        Self::from_json(&shown, &text)
    }

    /// Loads `path` and checks it was trained under `cfg`'s settings.
    pub fn load_for(path: &Path, cfg: &ExperimentConfig) -> Result<Self, CheckpointError> {
        let ckpt = Self::load(path)?;
        let expected = config_hash(cfg);
        if ckpt.config_hash != expected {
            return Err(CheckpointError::ConfigMismatch {
                path: path.display().to_string(),
                found: ckpt.config_hash,
                expected,
            });
        }
        Ok(ckpt)
    }
}
