//! Experiment runners: each takes an [`ExperimentSpec`], fans the channel
//! loop out through the core's execution layer, and returns typed rows.
//!
//! Determinism contract: every random quantity is drawn from a substream
//! named by (master seed, purpose tag, grid indices, channel index), and
//! per-channel results are reduced in channel order, so output bytes never
//! depend on thread count. Channel realization k always uses substream k of
//! the per-n_r channel master, regardless of scheme or SNR: all schemes and
//! grid points see the same channel set (paired comparison).

use gensm_core::rng::{derive_seed, substream};
use gensm_core::{
    baseline_rate, compute_num_agcs, exec, optimize, rate_true_mc, sample_channel,
    waterfilling_capacity, AgcTable, BaselineScheme, ChannelMatrix, ChannelRecord, GradientKind,
    OptimizerOptions, PhaseVector, RateReport, Result, SystemConfig,
};

use crate::spec::ExperimentSpec;

const TAG_CHANNEL: u64 = 0x6368616e; // "chan"
const TAG_MC: u64 = 0x6d63; // "mc"
const TAG_OPT: u64 = 0x6f7074; // "opt"

/// Master seed for the channel set drawn at one receive-antenna count.
fn channel_master(seed: u64, n_r: usize) -> u64 {
    derive_seed(seed, &[TAG_CHANNEL, n_r as u64])
}

fn mc_seed(seed: u64, n_r: usize, snr_idx: usize, k: usize, scheme: u64) -> u64 {
    derive_seed(seed, &[TAG_MC, n_r as u64, snr_idx as u64, k as u64, scheme])
}

fn opt_seed(seed: u64, n_r: usize, snr_idx: usize, k: usize, kind: u64) -> u64 {
    derive_seed(seed, &[TAG_OPT, n_r as u64, snr_idx as u64, k as u64, kind])
}

/// The experiment's channel set at one receive-antenna count, in substream order.
fn sample_channels(spec: &ExperimentSpec, n_r: usize) -> Result<Vec<ChannelMatrix>> {
    // The draw depends only on the array geometry, not on the power point.
    let geometry = spec.config_at(n_r, 0.0)?;
    let master = channel_master(spec.seed, n_r);
    let drawn = exec::map_indexed(spec.channels, |k| {
        let mut rng = substream(master, k as u64);
        sample_channel(&geometry, spec.paths, &mut rng).map(|(_, h)| h)
    });
    drawn.into_iter().collect()
}

/// One CSV-serializable result row.
pub trait CsvRow {
    const HEADER: &'static str;
    fn csv_row(&self) -> String;
}

/// Renders header plus one line per row, newline-terminated.
pub fn to_csv<R: CsvRow>(rows: &[R]) -> String {
    let mut out = String::from(R::HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.csv_row());
        out.push('\n');
    }
    out
}

/// Closed-form vs Monte-Carlo rate, averaged over channels, under the
/// all-zero phase vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxAccuracyRow {
    pub n_r: usize,
    pub snr_db: f64,
    pub r_cf_mean: f64,
    pub r_mc_mean: f64,
    pub r_mc_stderr_mean: f64,
    pub n_channels: usize,
}

impl CsvRow for ApproxAccuracyRow {
    const HEADER: &'static str = "n_r,snr_db,r_cf_mean,r_mc_mean,r_mc_stderr_mean,n_channels";

    fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.n_r,
            self.snr_db,
            self.r_cf_mean,
            self.r_mc_mean,
            self.r_mc_stderr_mean,
            self.n_channels
        )
    }
}

/// Accuracy sweep: for each (n_r, SNR) grid point, the closed-form rate and
/// its Monte-Carlo reference averaged over the channel set, evaluated at the
/// identity-phase precoder.
pub fn run_approx_accuracy(spec: &ExperimentSpec) -> Result<Vec<ApproxAccuracyRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &n_r in &spec.nr {
        let channels = sample_channels(spec, n_r)?;
        let agc = AgcTable::for_config(&spec.config_at(n_r, spec.snr_db[0])?)?;
        let psi = PhaseVector::zeros(spec.n_t);
        for (si, &snr_db) in spec.snr_db.iter().enumerate() {
            let cfg = spec.config_at(n_r, snr_db)?;
            let reports = exec::map_indexed(channels.len(), |k| {
                rate_true_mc(
                    &channels[k],
                    &psi,
                    &cfg,
                    &agc,
                    spec.mc_samples,
                    mc_seed(spec.seed, n_r, si, k, 0),
                )
            });
            let n = channels.len() as f64;
            let (mut cf, mut mc, mut se) = (0.0, 0.0, 0.0);
            for report in reports {
                let report = report?;
                cf += report.r_cf;
                mc += report.r_mc;
                se += report.r_mc_stderr;
            }
            rows.push(ApproxAccuracyRow {
                n_r,
                snr_db,
                r_cf_mean: cf / n,
                r_mc_mean: mc / n,
                r_mc_stderr_mean: se / n,
                n_channels: channels.len(),
            });
        }
    }
    Ok(rows)
}

/// Per-SNR scheme comparison, all channel-averaged: optimized precoders
/// under both gradients, the two reference schemes, and the rank-constrained
/// waterfilling capacity. `*_mc_mean` columns are the true-rate estimates;
/// `*_cf_mean` are the closed form at the same precoders.
#[derive(Debug, Clone, PartialEq)]
pub struct SeCompareRow {
    pub snr_db: f64,
    pub full_cf_mean: f64,
    pub full_mc_mean: f64,
    pub reduced_cf_mean: f64,
    pub reduced_mc_mean: f64,
    pub identity_cf_mean: f64,
    pub identity_mc_mean: f64,
    pub no_precoding_cf_mean: f64,
    pub no_precoding_mc_mean: f64,
    pub waterfilling_mean: f64,
    /// Channels where the reduced run fell back to the full gradient.
    pub reduced_fallbacks: usize,
    pub n_channels: usize,
}

impl CsvRow for SeCompareRow {
    const HEADER: &'static str = "snr_db,full_cf_mean,full_mc_mean,reduced_cf_mean,\
reduced_mc_mean,identity_cf_mean,identity_mc_mean,no_precoding_cf_mean,no_precoding_mc_mean,\
waterfilling_mean,reduced_fallbacks,n_channels";

    fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.snr_db,
            self.full_cf_mean,
            self.full_mc_mean,
            self.reduced_cf_mean,
            self.reduced_mc_mean,
            self.identity_cf_mean,
            self.identity_mc_mean,
            self.no_precoding_cf_mean,
            self.no_precoding_mc_mean,
            self.waterfilling_mean,
            self.reduced_fallbacks,
            self.n_channels
        )
    }
}

struct ChannelComparison {
    full_cf: f64,
    full_mc: f64,
    reduced_cf: f64,
    reduced_mc: f64,
    identity_cf: f64,
    identity_mc: f64,
    no_precoding_cf: f64,
    no_precoding_mc: f64,
    waterfilling: f64,
    fallback: bool,
}

/// Scheme comparison at the experiment's base n_r over its SNR grid.
pub fn run_se_compare(spec: &ExperimentSpec) -> Result<Vec<SeCompareRow>> {
    spec.validate()?;
    let n_r = spec.n_r;
    let channels = sample_channels(spec, n_r)?;
    let agc = AgcTable::for_config(&spec.config_at(n_r, spec.snr_db[0])?)?;
    let full_opts = OptimizerOptions { gradient_kind: GradientKind::Full, ..spec.optimizer };
    let reduced_opts = OptimizerOptions { gradient_kind: GradientKind::Reduced, ..spec.optimizer };

    let mut rows = Vec::new();
    for (si, &snr_db) in spec.snr_db.iter().enumerate() {
        let cfg = spec.config_at(n_r, snr_db)?;
        let per_channel = exec::map_indexed(channels.len(), |k| -> Result<ChannelComparison> {
            let h = &channels[k];
            let full = optimize(h, &cfg, &agc, &full_opts, opt_seed(spec.seed, n_r, si, k, 0))?;
            let full_report = rate_true_mc(
                h,
                &full.best_psi,
                &cfg,
                &agc,
                spec.mc_samples,
                mc_seed(spec.seed, n_r, si, k, 1),
            )?;
            let reduced =
                optimize(h, &cfg, &agc, &reduced_opts, opt_seed(spec.seed, n_r, si, k, 1))?;
            let reduced_report = rate_true_mc(
                h,
                &reduced.best_psi,
                &cfg,
                &agc,
                spec.mc_samples,
                mc_seed(spec.seed, n_r, si, k, 2),
            )?;
            let identity = baseline_rate(
                BaselineScheme::IdentityPrecoder,
                h,
                &cfg,
                spec.mc_samples,
                mc_seed(spec.seed, n_r, si, k, 3),
            )?;
            let no_precoding = baseline_rate(
                BaselineScheme::NoPrecodingFullSwitching,
                h,
                &cfg,
                spec.mc_samples,
                mc_seed(spec.seed, n_r, si, k, 4),
            )?;
            let waterfilling = waterfilling_capacity(h, cfg.rho, cfg.sigma_n2, cfg.n_rf)?;
            Ok(ChannelComparison {
                full_cf: full_report.r_cf,
                full_mc: full_report.r_mc,
                reduced_cf: reduced_report.r_cf,
                reduced_mc: reduced_report.r_mc,
                identity_cf: identity.r_cf,
                identity_mc: identity.r_mc,
                no_precoding_cf: no_precoding.r_cf,
                no_precoding_mc: no_precoding.r_mc,
                waterfilling,
                fallback: reduced.fallback_used,
            })
        });

        let n = channels.len() as f64;
        let mut row = SeCompareRow {
            snr_db,
            full_cf_mean: 0.0,
            full_mc_mean: 0.0,
            reduced_cf_mean: 0.0,
            reduced_mc_mean: 0.0,
            identity_cf_mean: 0.0,
            identity_mc_mean: 0.0,
            no_precoding_cf_mean: 0.0,
            no_precoding_mc_mean: 0.0,
            waterfilling_mean: 0.0,
            reduced_fallbacks: 0,
            n_channels: channels.len(),
        };
        for sample in per_channel {
            let s = sample?;
            row.full_cf_mean += s.full_cf;
            row.full_mc_mean += s.full_mc;
            row.reduced_cf_mean += s.reduced_cf;
            row.reduced_mc_mean += s.reduced_mc;
            row.identity_cf_mean += s.identity_cf;
            row.identity_mc_mean += s.identity_mc;
            row.no_precoding_cf_mean += s.no_precoding_cf;
            row.no_precoding_mc_mean += s.no_precoding_mc;
            row.waterfilling_mean += s.waterfilling;
            row.reduced_fallbacks += s.fallback as usize;
        }
        row.full_cf_mean /= n;
        row.full_mc_mean /= n;
        row.reduced_cf_mean /= n;
        row.reduced_mc_mean /= n;
        row.identity_cf_mean /= n;
        row.identity_mc_mean /= n;
        row.no_precoding_cf_mean /= n;
        row.no_precoding_mc_mean /= n;
        row.waterfilling_mean /= n;
        rows.push(row);
    }
    Ok(rows)
}

/// All (n_k, n_m) groupings of n_t antennas that can feed n_rf chains,
/// ordered by ascending group size n_k.
pub fn factor_pairs(n_t: usize, n_rf: usize) -> Vec<(usize, usize)> {
    (1..=n_t)
        .filter(|k| n_t % k == 0)
        .map(|k| (k, n_t / k))
        .filter(|&(_, m)| m >= n_rf)
        .collect()
}

/// Channel-averaged optimized rate of one grouping at one grid point;
/// `is_best` marks the cell's argmax (first listed pair wins ties).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSelectRow {
    pub n_r: usize,
    pub snr_db: f64,
    pub n_k: usize,
    pub n_m: usize,
    pub m_alphabet: u64,
    pub r_cf_mean: f64,
    pub is_best: bool,
    pub n_channels: usize,
}

impl CsvRow for ParamSelectRow {
    const HEADER: &'static str = "n_r,snr_db,n_k,n_m,m_alphabet,r_cf_mean,is_best,n_channels";

    fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.n_r,
            self.snr_db,
            self.n_k,
            self.n_m,
            self.m_alphabet,
            self.r_cf_mean,
            self.is_best,
            self.n_channels
        )
    }
}

/// Grouping selection: optimizes the precoder for every admissible
/// (n_k, n_m) grouping on every channel and marks the grouping with the
/// highest average optimized rate per (n_r, SNR) cell.
pub fn run_param_select(spec: &ExperimentSpec) -> Result<Vec<ParamSelectRow>> {
    spec.validate()?;
    let pairs = factor_pairs(spec.n_t, spec.n_rf);
    if pairs.is_empty() {
        return Err(gensm_core::Error::InvalidConfig(format!(
            "no (n_k, n_m) grouping of {} antennas admits {} RF chains",
            spec.n_t, spec.n_rf
        )));
    }
    let mut rows = Vec::new();
    for &n_r in &spec.nr {
        let channels = sample_channels(spec, n_r)?;
        let tables: Vec<(SystemConfig, AgcTable)> = pairs
            .iter()
            .map(|&(n_k, n_m)| {
                let cfg =
                    SystemConfig::new(spec.n_t, n_r, n_k, n_m, spec.n_rf, 1.0, 1.0)?;
                let agc = AgcTable::for_config(&cfg)?;
                Ok((cfg, agc))
            })
            .collect::<Result<_>>()?;
        for (si, &snr_db) in spec.snr_db.iter().enumerate() {
            let cell_start = rows.len();
            for (pi, (base_cfg, agc)) in tables.iter().enumerate() {
                let cfg = base_cfg.with_snr_db(snr_db);
                let rates = exec::map_indexed(channels.len(), |k| -> Result<f64> {
                    let trace = optimize(
                        &channels[k],
                        &cfg,
                        agc,
                        &spec.optimizer,
                        opt_seed(spec.seed, n_r, si, k, pi as u64),
                    )?;
                    Ok(trace.best_r_cf)
                });
                let mut sum = 0.0;
                for r in rates {
                    sum += r?;
                }
                rows.push(ParamSelectRow {
                    n_r,
                    snr_db,
                    n_k: pairs[pi].0,
                    n_m: pairs[pi].1,
                    m_alphabet: compute_num_agcs(pairs[pi].1, spec.n_rf)?,
                    r_cf_mean: sum / channels.len() as f64,
                    is_best: false,
                    n_channels: channels.len(),
                });
            }
            let best = (cell_start..rows.len())
                .max_by(|&a, &b| {
                    rows[a]
                        .r_cf_mean
                        .partial_cmp(&rows[b].r_cf_mean)
                        .expect("rates are finite")
                })
                .expect("at least one pair per cell");
            rows[best].is_best = true;
        }
    }
    Ok(rows)
}

/// Everything `optimize-one` writes: the channel realization, the full
/// optimizer trace, its one-row summary, and the rate report of the
/// optimized precoder.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOneArtifacts {
    pub channel_json: String,
    pub trace_json: String,
    pub summary_csv: String,
    pub report_csv: String,
    pub report: RateReport,
}

/// Single-channel debug run at the first SNR grid point: draws channel 0,
/// optimizes, and packages all artifacts.
pub fn run_optimize_one(spec: &ExperimentSpec) -> Result<OptimizeOneArtifacts> {
    spec.validate()?;
    let n_r = spec.n_r;
    let snr_db = spec.snr_db[0];
    let cfg = spec.config_at(n_r, snr_db)?;
    let agc = AgcTable::for_config(&cfg)?;
    let master = channel_master(spec.seed, n_r);
    let mut rng = substream(master, 0);
    let (paths, h) = sample_channel(&cfg, spec.paths, &mut rng)?;
    let record = ChannelRecord::from_parts(master, &paths, &h);

    let trace = optimize(&h, &cfg, &agc, &spec.optimizer, opt_seed(spec.seed, n_r, 0, 0, 0))?;
    let report = rate_true_mc(
        &h,
        &trace.best_psi,
        &cfg,
        &agc,
        spec.mc_samples,
        mc_seed(spec.seed, n_r, 0, 0, 0),
    )?;

    let mut summary_csv = String::from(gensm_core::OptimizerTrace::CSV_HEADER);
    summary_csv.push('\n');
    summary_csv.push_str(&trace.csv_row());
    summary_csv.push('\n');

    let mut report_csv = String::from(RateReport::CSV_HEADER);
    report_csv.push('\n');
    report_csv.push_str(&report.csv_row(cfg.fingerprint(), spec.seed, snr_db));
    report_csv.push('\n');

    Ok(OptimizeOneArtifacts {
        channel_json: record.to_json()?,
        trace_json: trace.to_json()?,
        summary_csv,
        report_csv,
        report,
    })
}
