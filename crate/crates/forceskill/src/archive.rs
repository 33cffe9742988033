//! Versioned, self-describing model archive (JSON).

use std::fs;
use std::path::Path;

use forceskill_core::skill::{SkillModel, TrainingConfig};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, IoError, Result};

pub const FORMAT: &str = "forceskill-model";
pub const FORMAT_VERSION: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArchive {
    pub format: String,
    pub format_version: u64,
    pub name: String,
    pub training: TrainingConfig,
    pub skill: SkillModel,
}

impl ModelArchive {
    pub fn new(name: impl Into<String>, training: TrainingConfig, skill: SkillModel) -> Self {
        ModelArchive { format: FORMAT.into(), format_version: FORMAT_VERSION, name: name.into(), training, skill }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("archives contain only finite numbers");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| IoError::Corrupt(e.to_string()))?;
        if value.get("format").and_then(|f| f.as_str()) != Some(FORMAT) {
            return Err(IoError::Corrupt("not a forceskill model".into()));
        }
        let found = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| IoError::Corrupt("missing format_version".into()))?;
        if found != FORMAT_VERSION {
            return Err(IoError::Version { found, expected: FORMAT_VERSION });
        }
        let archive: ModelArchive = serde_json::from_value(value).map_err(|e| IoError::Corrupt(e.to_string()))?;
        archive.skill.check().map_err(|e| IoError::Corrupt(e.to_string()))?;
        Ok(archive)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }
}
