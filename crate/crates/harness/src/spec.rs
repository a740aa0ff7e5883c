//! Experiment configuration: the JSON-loadable description of a sweep.

use gensm_core::{Error, OptimizerOptions, Result, SystemConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// SNR in dB to the linear power ratio rho / sigma_n2.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// One experiment's knobs. Serialized as JSON with every field optional;
/// missing fields take the defaults below (the reference 8x8 setup at
/// SNR -10..10 dB). Command-line flags override file values field by field.
///
/// The SNR grid is the only power input: noise variance is fixed at 1 and
/// each grid point sets rho = 10^(snr_db/10).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Transmit antennas (n_k * n_m).
    pub n_t: usize,
    /// Receive antennas for single-n_r experiments.
    pub n_r: usize,
    /// Antennas per group.
    pub n_k: usize,
    /// Antenna groups.
    pub n_m: usize,
    /// RF chains / streams.
    pub n_rf: usize,
    /// SNR grid in dB.
    pub snr_db: Vec<f64>,
    /// Receive-antenna sweep for approx-accuracy and param-select.
    pub nr: Vec<usize>,
    /// Channel realizations per grid point.
    pub channels: usize,
    /// Monte-Carlo samples per rate estimate.
    pub mc_samples: usize,
    /// Scattering paths per channel draw.
    pub paths: usize,
    /// Master seed; every channel, estimator chunk, and restart derives a
    /// named substream from it.
    pub seed: u64,
    pub optimizer: OptimizerOptions,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            n_t: 8,
            n_r: 8,
            n_k: 2,
            n_m: 4,
            n_rf: 2,
            snr_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0],
            nr: vec![2, 4, 8],
            channels: 500,
            mc_samples: 100_000,
            paths: 5,
            seed: 1,
            optimizer: OptimizerOptions::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_empty() {
            return Err(Error::InvalidConfig("snr_db grid must be nonempty".into()));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidConfig("snr_db entries must be finite".into()));
        }
        if self.nr.is_empty() {
            return Err(Error::InvalidConfig("nr list must be nonempty".into()));
        }
        if self.channels < 1 {
            return Err(Error::InvalidConfig("channels must be >= 1".into()));
        }
        if self.mc_samples < 1 {
            return Err(Error::InvalidConfig("mc_samples must be >= 1".into()));
        }
        if self.paths < 1 {
            return Err(Error::InvalidConfig("paths must be >= 1".into()));
        }
        self.optimizer.validate()?;
        // Every receive-antenna count in play must yield a valid system.
        self.config_at(self.n_r, self.snr_db[0])?;
        for &n_r in &self.nr {
            self.config_at(n_r, self.snr_db[0])?;
        }
        Ok(())
    }

    /// The system at one grid point, with sigma_n2 = 1.
    pub fn config_at(&self, n_r: usize, snr_db: f64) -> Result<SystemConfig> {
        SystemConfig::new(self.n_t, n_r, self.n_k, self.n_m, self.n_rf, db_to_linear(snr_db), 1.0)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidConfig(format!("spec serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("spec parse: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }
}
