//! The run configuration document shared by every command.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ct::{DatasetSpec, Split};
use crate::error::{Error, Result};
use crate::metrics::DEFAULT_TAU_MM;
use crate::net::ModelConfig;
use crate::train::TrainConfig;
use crate::windowing::TriWindowConfig;

/// File name of the resolved configuration written into output directories.
pub const RESOLVED_CONFIG: &str = "config.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub tau_mm: f64,
    pub split: Split,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { tau_mm: DEFAULT_TAU_MM, split: Split::Test }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DatasetSpec,
    pub windows: TriWindowConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read `path`, or the defaults when `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => Self::from_json(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.data.phantom.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if !(self.eval.tau_mm > 0.0) {
            return Err(Error::Config(format!("eval.tau_mm must be positive, got {}", self.eval.tau_mm)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Write the fully resolved document as `dir/config.json`.
    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(RESOLVED_CONFIG);
        fs::write(&path, self.to_json() + "\n").map_err(|e| Error::io(&path, e))
    }
}
