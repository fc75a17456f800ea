use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// TOML sidecar written next to every artifact. Carries no timestamps so
/// identical runs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seeds: BTreeMap<String, u64>,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
    /// Full effective configuration.
    pub config: toml::Table,
}

impl Manifest {
    pub fn new(version: &str, command: &str, config: toml::Table) -> Self {
        Self {
            tool: "lrmf".into(),
            version: version.into(),
            command: command.into(),
            seeds: BTreeMap::new(),
            outputs: Vec::new(),
            notes: BTreeMap::new(),
            config,
        }
    }

    pub fn to_toml(&self) -> Result<String, EvalError> {
        toml::to_string(self).map_err(|e| EvalError::Csv(format!("manifest: {e}")))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| EvalError::Csv(format!("manifest: {e}")))
    }
}
