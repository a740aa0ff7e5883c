//! Run manifest: the JSON sidecar recording exactly what produced a set of
//! artifacts. CSV files are byte-reproducible from (spec, seed); the
//! manifest additionally carries wall time, which is not.

use gensm_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::spec::ExperimentSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Subcommand name.
    pub experiment: String,
    pub tool_version: String,
    /// The fully resolved spec (file values plus flag overrides).
    pub spec: ExperimentSpec,
    /// Paths of the artifacts this run wrote.
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn new(experiment: &str, spec: &ExperimentSpec, outputs: Vec<String>, wall_time_s: f64) -> Self {
        Self {
            experiment: experiment.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            spec: spec.clone(),
            outputs,
            wall_time_s,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidConfig(format!("manifest serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("manifest parse: {e}")))
    }
}
