use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FusionModel, ModelConfig};
use crate::error::{Error, Result};
use crate::nn::Checkpoint;
use crate::tensor::Rng;

pub const MODEL_FORMAT: &str = "rulstm-model";

/// JSON description of a saved model; parameters live in a `RUCK` checkpoint
/// whose path is relative to the description file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescription {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<String>,
    pub weights: String,
}

impl ModelDescription {
    pub fn new(config: ModelConfig, weights: impl Into<String>) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: 1,
            config,
            vocabulary: None,
            weights: weights.into(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let desc: Self = serde_json::from_str(&text)?;
        if desc.format != MODEL_FORMAT || desc.version != 1 {
            return Err(Error::format("model description", format!("{} v{}", desc.format, desc.version)));
        }
        desc.config.validate()?;
        Ok(desc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn weights_path(&self, description_path: &Path) -> PathBuf {
        description_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&self.weights)
    }
}

impl FusionModel {
    /// Writes `model.json`-style description plus its checkpoint next to it.
    pub fn save(&self, description_path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
        let path = description_path.as_ref();
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
        let desc = ModelDescription::new(self.config.clone(), format!("{stem}.ruck"));
        checkpoint.save(desc.weights_path(path))?;
        desc.save(path)
    }

    /// Loads a model from its description and checkpoint (blocks under the `model` prefix).
    pub fn load(description_path: impl AsRef<Path>) -> Result<(Self, Checkpoint)> {
        let path = description_path.as_ref();
        let desc = ModelDescription::load(path)?;
        let ck = Checkpoint::load(desc.weights_path(path))?;
        let mut model = FusionModel::new(desc.config, &mut Rng::new(0))?;
        ck.load_params("model", &mut model)?;
        Ok((model, ck))
    }
}
