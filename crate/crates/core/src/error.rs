use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("tabulated schedule has {len} entries, index {index} out of range")]
    ScheduleOutOfRange { index: u64, len: usize },

    #[error("horizon {horizon} too small (minimum {minimum})")]
    HorizonTooSmall { horizon: u64, minimum: u64 },

    #[error("drift produced a non-finite value at sample {sample}")]
    NonFiniteDrift { sample: usize },

    #[error("hypothesis fails at sample {sample}: normalized violation {violation:e}")]
    HypothesisFailed { sample: usize, violation: f64 },

    #[error("inconsistent constants: {0}")]
    InconsistentConstants(String),

    #[error("unsupported transport from property {from} to property {to}")]
    UnsupportedTransport { from: &'static str, to: &'static str },

    #[error("step factor 1 - c*gamma_n is negative at n = {n}")]
    NegativeStepFactor { n: u64 },

    #[error("certificate unavailable: {0}")]
    CertificateUnavailable(String),

    #[error("burn-in index N exceeds horizon {horizon}")]
    BurnInExceedsHorizon { horizon: u64 },

    #[error("non-finite state at step {n}")]
    Divergence { n: u64 },

    #[error("{count} of {total} trajectories diverged")]
    EnsembleDivergence { count: usize, total: usize },

    #[error("checkpoint {0} missing from trajectory")]
    MissingCheckpoint(u64),

    #[error("mean gradient unavailable and estimation disabled")]
    MeanGradientUnavailable,

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("matrix is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),

    #[error("second-moment matrix singular or ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),

    #[error("schedule not admissible for k = {k}")]
    NotAdmissible { k: u32 },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
