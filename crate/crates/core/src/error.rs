use thiserror::Error;

/// Errors surfaced by the design, evaluation and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid index: {0}")]
    InvalidIndex(String),

    #[error("zero channel vector has no direction")]
    ZeroChannel,

    #[error("overlapping clusters")]
    OverlappingClusters,

    #[error("RSMA subsets need at least two UEs (got K = {0})")]
    TooFewUes(usize),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("negative interference-plus-noise power {0:e}")]
    NegativeDenominator(f64),

    #[error("subproblem solver failed at MM iterate {iterate}: {reason}")]
    Solver { iterate: usize, reason: String },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
