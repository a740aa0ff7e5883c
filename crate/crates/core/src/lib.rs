//! Simulation and optimization toolkit for generalized spatial modulation
//! over mmWave MIMO links with a diagonal unit-modulus analog precoder.
//!
//! The crate models a transmitter whose antennas are partitioned into groups,
//! a subset of which is activated per symbol (the space-domain information),
//! while active antennas carry Gaussian-input symbols through per-antenna
//! phase shifters. It provides:
//!
//! - the system configuration and antenna-group combinatorics ([`config`],
//!   [`agc`], [`precoding`], [`model`]);
//! - seeded Saleh-Valenzuela channel realizations ([`channel`]);
//! - spectral-efficiency evaluation: a closed-form approximation, its
//!   Monte-Carlo oracle, and the bound pieces they share ([`rate`],
//!   [`covariance`]);
//! - phase-only precoder optimization by full and reduced-complexity
//!   gradient iterations, plus baseline schemes ([`optimizer`]).
//!
//! Randomness is counter-seeded: every channel index, Monte-Carlo chunk, and
//! restart owns a named substream, so results are reproducible bit for bit
//! regardless of thread count. The `parallel` feature (on by default) routes
//! bulk loops through a work-stealing pool; disabling it yields a sequential
//! build with identical outputs.

pub mod agc;
pub mod channel;
pub mod config;
pub mod covariance;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod model;
pub mod optimizer;
pub mod precoding;
pub mod rate;
pub mod rng;

pub use agc::{compute_num_agcs, AgcTable};
pub use channel::{sample_channel, ChannelMatrix, ChannelRecord, PathSet};
pub use config::SystemConfig;
pub use covariance::{effective_covariance, CovarianceSet};
pub use error::{Error, Result};
pub use model::TransmissionModel;
pub use optimizer::{
    baseline_rate, gradient_full, gradient_reduced, optimize, waterfilling_capacity,
    BaselineScheme, GradientKind, InitKind, OptimizerOptions, OptimizerTrace,
};
pub use precoding::{wrap_angle, PhaseVector};
pub use rate::{
    apm_mi, rate_closed_form, rate_true_mc, spatial_bound_offset, spatial_mi_lower_bound,
    spatial_mi_monte_carlo, RateReport,
};
