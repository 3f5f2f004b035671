use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::{AdpenConfig, AdpenModel};
use super::AdpenError;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned JSON container for a trained model and the config that made it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdpenCheckpoint {
    pub version: u32,
    pub seed: u64,
    pub config: AdpenConfig,
    pub model: AdpenModel,
}

impl AdpenCheckpoint {
    pub fn new(model: AdpenModel, config: &AdpenConfig) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            seed: config.seed,
            config: config.clone(),
            model,
        }
    }

    pub fn to_json(&self) -> Result<String, AdpenError> {
        serde_json::to_string(self).map_err(|e| AdpenError::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, AdpenError> {
        let ckpt: Self =
            serde_json::from_str(text).map_err(|e| AdpenError::Checkpoint(e.to_string()))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(AdpenError::Checkpoint(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), AdpenError> {
        std::fs::write(path, self.to_json()?).map_err(|e| AdpenError::Checkpoint(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, AdpenError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| AdpenError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
