//! Per-skill configuration file (TOML).

use std::fs;
use std::path::Path;

use forceskill_core::execution::ExecutionConfig;
use forceskill_core::scenario::PressParams;
use forceskill_core::skill::TrainingConfig;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, IoError, Result};

/// Synthetic demonstration settings used by `generate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub demos: usize,
    pub dt: f64,
    pub start: [f64; 3],
    /// Nominal object position.
    pub object: [f64; 3],
    /// Half-width of the uniform object placement around `object` (x, y).
    pub object_spread: f64,
    pub position_noise: f64,
    pub wrench_noise: f64,
    pub press: PressParams,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            demos: 3,
            dt: 0.01,
            start: [0.3, 0.0, 0.15],
            object: [0.5, 0.0, 0.0],
            object_spread: 0.05,
            position_noise: 0.0,
            wrench_noise: 0.0,
            press: PressParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkillConfig {
    pub name: String,
    /// Seed of every random choice; there is no other entropy source.
    pub seed: u64,
    pub training: TrainingConfig,
    pub execution: ExecutionConfig,
    pub generator: GeneratorConfig,
}

impl Default for SkillConfig {
    fn default() -> Self {
        SkillConfig {
            name: "press".into(),
            seed: 0,
            training: TrainingConfig::default(),
            execution: ExecutionConfig::default(),
            generator: GeneratorConfig::default(),
        }
    }
}

impl SkillConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let cfg: SkillConfig =
            toml::from_str(text).map_err(|e| IoError::Config { path: path.to_path_buf(), message: e.to_string() })?;
        cfg.training
            .check()
            .map_err(|e| IoError::Config { path: path.to_path_buf(), message: e.to_string() })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text, path)
    }
}
