use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{EnvParams, ObservationMode};
use crate::learner::TrainConfig;
use crate::{Error, Result};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "HITL_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    /// Built-in map name or path to a map file.
    pub map: String,
    pub mode: ObservationMode,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { map: "trap_world".into(), mode: ObservationMode::Full, seed: 0, out_dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeploySection {
    /// Threshold grid; empty means the default geometric grid.
    pub epsilons: Vec<f64>,
    pub episodes: usize,
    /// Smoothing window for exported curves.
    pub window: usize,
}

impl Default for DeploySection {
    fn default() -> Self {
        DeploySection { epsilons: Vec::new(), episodes: 1000, window: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltySection {
    pub c_grid: Vec<f64>,
}

impl Default for PenaltySection {
    fn default() -> Self {
        PenaltySection { c_grid: super::default_c_grid() }
    }
}

/// Everything one experiment needs. Loaded from a sectioned `key = value`
/// (TOML) file; command-line flags override individual fields afterwards.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub run: RunSection,
    pub env: EnvParams,
    pub train: TrainConfig,
    pub deploy: DeploySection,
    pub penalty: PenaltySection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises to TOML")
    }

    /// Output directory: config value, then the environment variable, then `out`.
    pub fn out_dir(&self) -> PathBuf {
        self.run
            .out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn hash(&self) -> String {
        super::config_hash(self)
    }
}
