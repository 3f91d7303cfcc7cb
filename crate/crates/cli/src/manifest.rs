use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wzlri_core::harness::StudyManifest;

use crate::CliError;

/// Record of one invocation, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// `simulate`, `paths`, or `study <kind>`.
    pub command: String,
    /// Every option after defaults and snapping, keyed like the flags.
    pub params: BTreeMap<String, String>,
    pub seed: u64,
    pub timestamp: String,
    pub version: String,
    pub outputs: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudyManifest>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, params: BTreeMap<String, String>, seed: u64) -> Self {
        Self {
            command: command.into(),
            params,
            seed,
            timestamp: chrono::Utc::now().to_rfc3339(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
            study: None,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(wzlri_core::Error::from)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad manifest {}: {e}", path.display())))
    }

    pub fn output_named(&self, name: &str) -> Option<&Path> {
        self.outputs
            .iter()
            .map(PathBuf::as_path)
            .find(|p| p.file_name().is_some_and(|f| f == name))
    }
}
