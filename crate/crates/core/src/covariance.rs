//! Per-combination receive covariances of the transmitted signal plus noise.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::agc::AgcTable;
use crate::channel::ChannelMatrix;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::{hermitianize, HermitianFactor};
use crate::precoding::PhaseVector;

/// Receive covariance under combination m:
/// sigma_n2 * I + (rho / n_s) * H A C_m C_m^H A^H H^H.
///
/// The product is Hermitian in exact arithmetic; the result is symmetrized
/// so factorizations downstream see an exactly Hermitian input.
pub fn effective_covariance(
    h: &ChannelMatrix,
    a: &DMatrix<Complex64>,
    c_m: &DMatrix<Complex64>,
    cfg: &SystemConfig,
) -> Result<DMatrix<Complex64>> {
    cfg.validate()?;
    if h.n_r() != cfg.n_r || h.n_t() != cfg.n_t {
        return Err(Error::DimensionMismatch(format!(
            "channel is {}x{}, config expects {}x{}",
            h.n_r(),
            h.n_t(),
            cfg.n_r,
            cfg.n_t
        )));
    }
    if a.nrows() != cfg.n_t || a.ncols() != cfg.n_t {
        return Err(Error::DimensionMismatch(format!(
            "precoder matrix is {}x{}, expected {}x{}",
            a.nrows(),
            a.ncols(),
            cfg.n_t,
            cfg.n_t
        )));
    }
    if c_m.nrows() != cfg.n_t || c_m.ncols() != cfg.n_rf {
        return Err(Error::DimensionMismatch(format!(
            "selection matrix is {}x{}, expected {}x{}",
            c_m.nrows(),
            c_m.ncols(),
            cfg.n_t,
            cfg.n_rf
        )));
    }
    let g = h.matrix() * a * c_m;
    let mut sigma = &g * g.adjoint();
    sigma *= Complex64::new(cfg.rho / cfg.n_s() as f64, 0.0);
    for i in 0..cfg.n_r {
        sigma[(i, i)] += Complex64::new(cfg.sigma_n2, 0.0);
    }
    Ok(hermitianize(&sigma))
}

/// The M receive covariances of one (channel, precoder) pair, with their
/// Cholesky factors ready for determinant and solve work.
#[derive(Debug, Clone)]
pub struct CovarianceSet {
    covs: Vec<DMatrix<Complex64>>,
    factors: Vec<HermitianFactor>,
    sigma_n2: f64,
    n_r: usize,
}

impl CovarianceSet {
    /// Covariances for every combination in the table, from a phase vector.
    pub fn build(
        h: &ChannelMatrix,
        psi: &PhaseVector,
        cfg: &SystemConfig,
        agc: &AgcTable,
    ) -> Result<Self> {
        if psi.len() != cfg.n_t {
            return Err(Error::DimensionMismatch(format!(
                "phase vector has {} entries, expected {}",
                psi.len(),
                cfg.n_t
            )));
        }
        Self::from_precoder_matrix(h, &psi.precoder_matrix(cfg.n_k), cfg, agc)
    }

    /// Covariances for every combination, from an explicit precoder matrix.
    pub fn from_precoder_matrix(
        h: &ChannelMatrix,
        a: &DMatrix<Complex64>,
        cfg: &SystemConfig,
        agc: &AgcTable,
    ) -> Result<Self> {
        if agc.n_t() != cfg.n_t || agc.n_rf() != cfg.n_rf {
            return Err(Error::DimensionMismatch(
                "combination table does not match the configuration".into(),
            ));
        }
        let covs = (0..agc.len())
            .map(|m| effective_covariance(h, a, agc.selection_matrix(m), cfg))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(covs, cfg.sigma_n2)
    }

    /// Wraps explicit covariance matrices, factoring each. Every matrix must
    /// be square, of one common size, and Hermitian positive definite.
    pub fn from_parts(covs: Vec<DMatrix<Complex64>>, sigma_n2: f64) -> Result<Self> {
        if covs.is_empty() {
            return Err(Error::InvalidConfig("covariance set must be non-empty".into()));
        }
        if sigma_n2 <= 0.0 {
            return Err(Error::InvalidConfig("noise variance must be positive".into()));
        }
        let n_r = covs[0].nrows();
        for (m, s) in covs.iter().enumerate() {
            if s.nrows() != n_r || s.ncols() != n_r {
                return Err(Error::DimensionMismatch(format!(
                    "covariance {m} is {}x{}, expected {n_r}x{n_r}",
                    s.nrows(),
                    s.ncols()
                )));
            }
        }
        let factors = covs
            .iter()
            .map(HermitianFactor::new)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { covs, factors, sigma_n2, n_r })
    }

    pub fn len(&self) -> usize {
        self.covs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covs.is_empty()
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn sigma_n2(&self) -> f64 {
        self.sigma_n2
    }

    pub fn cov(&self, m: usize) -> &DMatrix<Complex64> {
        &self.covs[m]
    }

    pub fn factor(&self, m: usize) -> &HermitianFactor {
        &self.factors[m]
    }

    /// ln det of covariance m.
    pub fn log_det(&self, m: usize) -> f64 {
        self.factors[m].log_det()
    }

    /// Factor of the pairwise sum cov(m) + cov(t).
    pub fn sum_factor(&self, m: usize, t: usize) -> Result<HermitianFactor> {
        let sum = &self.covs[m] + &self.covs[t];
        HermitianFactor::new(&sum)
    }
}
