//! Link dimensioning and power parameters.

use serde::{Deserialize, Serialize};

use crate::agc;
use crate::error::{Error, Result};

/// Dimensioning and power parameters of one link configuration.
///
/// The transmit array is split into `n_m` groups of `n_k` antennas each
/// (`n_t = n_m * n_k`), and `n_rf` RF chains drive `n_rf` of the groups in
/// each symbol period. The stream count equals the RF-chain count
/// throughout. `rho` and `sigma_n2` are linear quantities; dB conversions
/// belong to the CLI boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Transmit antennas.
    pub n_t: usize,
    /// Receive antennas.
    pub n_r: usize,
    /// Antennas per antenna group.
    pub n_k: usize,
    /// Antenna groups.
    pub n_m: usize,
    /// RF chains (= active groups = streams).
    pub n_rf: usize,
    /// Average transmit power, linear.
    pub rho: f64,
    /// Noise variance, linear.
    pub sigma_n2: f64,
}

impl SystemConfig {
    pub fn new(
        n_t: usize,
        n_r: usize,
        n_k: usize,
        n_m: usize,
        n_rf: usize,
        rho: f64,
        sigma_n2: f64,
    ) -> Result<Self> {
        let cfg = Self { n_t, n_r, n_k, n_m, n_rf, rho, sigma_n2 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 || self.n_r == 0 || self.n_k == 0 || self.n_m == 0 || self.n_rf == 0 {
            return Err(Error::InvalidConfig("all antenna/chain counts must be >= 1".into()));
        }
        if self.n_t != self.n_k * self.n_m {
            return Err(Error::InvalidConfig(format!(
                "n_t = {} must equal n_k * n_m = {}",
                self.n_t,
                self.n_k * self.n_m
            )));
        }
        if self.n_rf > self.n_m {
            return Err(Error::InvalidConfig(format!(
                "n_rf = {} must not exceed n_m = {}",
                self.n_rf, self.n_m
            )));
        }
        if !(self.rho >= 0.0) {
            return Err(Error::InvalidConfig(format!("rho = {} must be >= 0", self.rho)));
        }
        if !(self.sigma_n2 > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sigma_n2 = {} must be > 0",
                self.sigma_n2
            )));
        }
        Ok(())
    }

    /// Count of used antenna-group combinations for this grouping.
    pub fn num_agcs(&self) -> Result<u64> {
        agc::compute_num_agcs(self.n_m, self.n_rf)
    }

    /// Stream count. Fixed equal to the RF-chain count.
    pub fn n_s(&self) -> usize {
        self.n_rf
    }

    /// rho / sigma_n2 in dB.
    pub fn snr_db(&self) -> f64 {
        10.0 * (self.rho / self.sigma_n2).log10()
    }

    /// Same grouping with `rho` chosen so that rho/sigma_n2 matches `snr_db`.
    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.rho = self.sigma_n2 * 10f64.powf(snr_db / 10.0);
        self
    }

    /// Same array and power, regrouped into `n_m` groups of `n_k` antennas.
    pub fn regrouped(&self, n_k: usize, n_m: usize) -> Result<Self> {
        Self::new(self.n_t, self.n_r, n_k, n_m, self.n_rf, self.rho, self.sigma_n2)
    }

    /// FNV-1a hash over the canonical field encoding. Stable across runs and
    /// platforms; used to stamp report rows with the configuration they
    /// belong to.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for v in [self.n_t, self.n_r, self.n_k, self.n_m, self.n_rf] {
            eat(&(v as u64).to_le_bytes());
        }
        eat(&self.rho.to_bits().to_le_bytes());
        eat(&self.sigma_n2.to_bits().to_le_bytes());
        h
    }
}
