use thiserror::Error;

/// Errors raised by the link model and the precoder optimizer.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration violates its structural constraints.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Operands do not have mutually consistent dimensions.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The reduced gradient hit a non-invertible per-group Gram matrix.
    /// Happens whenever the channel rank falls below the RF-chain count.
    #[error("antenna-group combination {agc_index}: effective channel is rank deficient")]
    RankDeficient { agc_index: usize },

    /// A factorization or log-domain evaluation broke down.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
