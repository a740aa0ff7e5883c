//! Spectral efficiency of the modulated link: the closed-form approximation,
//! its two constituents, and a Monte-Carlo estimate of the true rate.
//!
//! The rate splits as R = I(y; x | m) + I(y; m): a Gaussian-input term that
//! has an exact log-determinant expression, and a space-domain term over the
//! Gaussian mixture {Sigma_m} that does not. The closed form replaces the
//! space-domain term with a Jensen lower bound plus the constant that
//! cancels the bound's asymptotic bias; the Monte-Carlo path samples the
//! mixture directly.

use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, LOG2_E};

use crate::agc::AgcTable;
use crate::channel::ChannelMatrix;
use crate::config::SystemConfig;
use crate::covariance::CovarianceSet;
use crate::error::{Error, Result};
use crate::exec;
use crate::linalg::log_sum_exp;
use crate::precoding::PhaseVector;
use crate::rng::{complex_gaussian, substream};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

/// Samples per Monte-Carlo chunk. Each chunk owns one RNG substream and its
/// own running statistics, merged in chunk order, so the estimate does not
/// depend on how chunks are scheduled.
const MC_CHUNK: usize = 8192;

/// The bias constant N_R * log2(e/2): what the space-domain lower bound
/// loses at both SNR extremes, added back by the closed form.
pub fn spatial_bound_offset(n_r: usize) -> f64 {
    n_r as f64 * (LOG2_E - 1.0)
}

/// Gaussian-input term (1/M) * sum_m log2 |Sigma_m / sigma_n2|, in bits.
pub fn apm_mi(covs: &CovarianceSet) -> f64 {
    let noise_ld = covs.n_r() as f64 * covs.sigma_n2().ln();
    let sum: f64 = (0..covs.len()).map(|m| covs.log_det(m) - noise_ld).sum();
    sum / (covs.len() as f64 * LN_2)
}

/// ln |Sigma_n + Sigma_t| for every pair, row-major M x M.
fn pairwise_sum_log_dets(covs: &CovarianceSet) -> Result<Vec<f64>> {
    let m = covs.len();
    let mut out = vec![0.0; m * m];
    for n in 0..m {
        for t in n..m {
            let ld = covs.sum_factor(n, t)?.log_det();
            out[n * m + t] = ld;
            out[t * m + n] = ld;
        }
    }
    Ok(out)
}

/// Space-domain lower bound
/// log2(M / e^{N_R}) - (1/M) * sum_n log2( sum_t |Sigma_n| / |Sigma_n + Sigma_t| ),
/// in bits. Everything runs in the log domain; the determinant ratios are
/// never materialized.
pub fn spatial_mi_lower_bound(covs: &CovarianceSet) -> Result<f64> {
    let m = covs.len();
    let pair = pairwise_sum_log_dets(covs)?;
    let mut terms = vec![0.0; m];
    let mut acc = 0.0;
    for n in 0..m {
        let ld_n = covs.log_det(n);
        for t in 0..m {
            terms[t] = ld_n - pair[n * m + t];
        }
        acc += log_sum_exp(&terms);
    }
    let m_f = m as f64;
    Ok(m_f.log2() - covs.n_r() as f64 * LOG2_E - acc / (m_f * LN_2))
}

/// Closed-form rate
/// -(1/M) * sum_n log2( sum_t ((2 sigma_n2)^{N_R} / M) / |Sigma_n + Sigma_t| ),
/// in bits. Identically apm_mi + spatial_mi_lower_bound + spatial_bound_offset.
pub fn rate_closed_form_from_covs(covs: &CovarianceSet) -> Result<f64> {
    let m = covs.len();
    let pair = pairwise_sum_log_dets(covs)?;
    let base = covs.n_r() as f64 * (2.0 * covs.sigma_n2()).ln() - (m as f64).ln();
    let mut terms = vec![0.0; m];
    let mut acc = 0.0;
    for n in 0..m {
        for t in 0..m {
            terms[t] = base - pair[n * m + t];
        }
        acc += log_sum_exp(&terms);
    }
    Ok(-acc / (m as f64 * LN_2))
}

/// Closed-form rate of a (channel, phases) pair.
pub fn rate_closed_form(
    h: &ChannelMatrix,
    psi: &PhaseVector,
    cfg: &SystemConfig,
    agc: &AgcTable,
) -> Result<f64> {
    rate_closed_form_from_covs(&CovarianceSet::build(h, psi, cfg, agc)?)
}

/// Closed-form rate with an explicit precoder matrix.
pub fn rate_closed_form_with_precoder(
    h: &ChannelMatrix,
    a: &DMatrix<Complex64>,
    cfg: &SystemConfig,
    agc: &AgcTable,
) -> Result<f64> {
    rate_closed_form_from_covs(&CovarianceSet::from_precoder_matrix(h, a, cfg, agc)?)
}

struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn new() -> Self {
        Self { count: 0, mean: 0.0, m2: 0.0 }
    }

    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            self.count = other.count;
            self.mean = other.mean;
            self.m2 = other.m2;
            return;
        }
        let n_a = self.count as f64;
        let n_b = other.count as f64;
        let delta = other.mean - self.mean;
        let n = n_a + n_b;
        self.mean += delta * n_b / n;
        self.m2 += other.m2 + delta * delta * n_a * n_b / n;
        self.count += other.count;
    }

    fn stderr(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        (self.m2 / (n - 1.0) / n).max(0.0).sqrt()
    }
}

/// Monte-Carlo estimate of the space-domain term I(y; m): draws m uniformly,
/// y ~ CN(0, Sigma_m), and averages
/// log2 p(y | m) - log2( (1/M) * sum_t p(y | t) ).
/// Returns (estimate, standard error), both in bits. Every sample statistic
/// is at most log2 M, so the estimate inherits that hard bound.
///
/// The seed addresses a family of substreams, one per fixed-size chunk;
/// results are reproducible bit for bit for a given seed and sample count.
pub fn spatial_mi_monte_carlo(
    covs: &CovarianceSet,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_samples < 1 {
        return Err(Error::InvalidConfig("sample count must be >= 1".into()));
    }
    let n_chunks = n_samples.div_ceil(MC_CHUNK);
    let chunks = exec::map_indexed(n_chunks, |k| {
        let count = MC_CHUNK.min(n_samples - k * MC_CHUNK);
        let mut rng = substream(seed, k as u64);
        mc_chunk(covs, count, &mut rng)
    });
    let mut total = Welford::new();
    for c in &chunks {
        total.merge(c);
    }
    Ok((total.mean, total.stderr()))
}

fn mc_chunk<R: Rng + ?Sized>(covs: &CovarianceSet, count: usize, rng: &mut R) -> Welford {
    let m_count = covs.len();
    let n_r = covs.n_r();
    let ln_m = (m_count as f64).ln();
    let mut z = DVector::<Complex64>::zeros(n_r);
    let mut y = DVector::<Complex64>::zeros(n_r);
    let mut work = DVector::<Complex64>::zeros(n_r);
    let mut lnp = vec![0.0; m_count];
    let mut stats = Welford::new();
    for _ in 0..count {
        let m = rng.random_range(0..m_count);
        for i in 0..n_r {
            z[i] = complex_gaussian(rng);
        }
        covs.factor(m).color(&z, &mut y);
        // The density normalizer pi^{-n_r} cancels between numerator and
        // mixture, so only log-determinants and quadratic forms remain.
        for t in 0..m_count {
            lnp[t] = -covs.log_det(t) - covs.factor(t).inv_quadratic_form(&y, &mut work);
        }
        let mixture = log_sum_exp(&lnp) - ln_m;
        stats.push((lnp[m] - mixture) / LN_2);
    }
    stats
}

/// Everything the rate computations produce for one instance: the closed
/// form and its two pieces (exact), and the Monte-Carlo estimate of the
/// true rate with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub r_cf: f64,
    pub apm_mi: f64,
    pub spatial_lb: f64,
    pub r_mc: f64,
    pub r_mc_stderr: f64,
    pub n_samples: usize,
}

impl RateReport {
    /// Column schema of [`RateReport::csv_row`].
    pub const CSV_HEADER: &'static str =
        "config_hash,seed,snr_db,r_cf,apm_mi,spatial_lb,r_mc,r_mc_stderr,n_samples";

    /// One CSV row. Floats print in shortest round-trip form, so identical
    /// values always produce identical bytes; the hash prints as 16 hex
    /// digits.
    pub fn csv_row(&self, config_hash: u64, seed: u64, snr_db: f64) -> String {
        format!(
            "{config_hash:016x},{seed},{snr_db},{},{},{},{},{},{}",
            self.r_cf, self.apm_mi, self.spatial_lb, self.r_mc, self.r_mc_stderr, self.n_samples
        )
    }
}

/// Full evaluation of one instance: exact closed-form pieces plus the
/// Monte-Carlo estimate r_mc = apm_mi + I_mc(y; m).
pub fn rate_true_mc(
    h: &ChannelMatrix,
    psi: &PhaseVector,
    cfg: &SystemConfig,
    agc: &AgcTable,
    n_samples: usize,
    seed: u64,
) -> Result<RateReport> {
    let covs = CovarianceSet::build(h, psi, cfg, agc)?;
    let apm = apm_mi(&covs);
    let spatial_lb = spatial_mi_lower_bound(&covs)?;
    let r_cf = rate_closed_form_from_covs(&covs)?;
    let (spatial_mc, stderr) = spatial_mi_monte_carlo(&covs, n_samples, seed)?;
    let report = RateReport {
        r_cf,
        apm_mi: apm,
        spatial_lb,
        r_mc: apm + spatial_mc,
        r_mc_stderr: stderr,
        n_samples,
    };
    for v in [report.r_cf, report.apm_mi, report.spatial_lb, report.r_mc, report.r_mc_stderr] {
        if !v.is_finite() {
            return Err(Error::Numerical("rate report contains a non-finite value".into()));
        }
    }
    Ok(report)
}
