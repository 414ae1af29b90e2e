use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed circuit, wire index out of range, shape mismatch.
    #[error("structural error: {0}")]
    Structural(String),

    /// The requested operation needs a dense representation larger than the configured cap.
    #[error("{what} needs n = {n} but the dense cap is n_max_dense = {limit}")]
    Capability {
        what: &'static str,
        n: usize,
        limit: usize,
    },

    #[error("postselection exhausted after {trials} trials (best peakedness {best:.3e}); the acceptance probability is too small, see the bounds module")]
    Exhausted { trials: u64, best: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("ill-conditioned node set (condition estimate {condition:.3e} > {threshold:.1e}); use Chebyshev nodes or lower the degree")]
    IllConditioned { condition: f64, threshold: f64 },

    #[error("polynomial fit residual {residual:.3e} exceeds tolerance {tolerance:.1e}")]
    FitResidual { residual: f64, tolerance: f64 },

    #[error("degenerate channel: depolarizing strength must be < 1")]
    DegenerateChannel,

    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("path mismatch at block {block}: {reason}")]
    PathMismatch { block: usize, reason: String },

    #[error("commitment mismatch")]
    CommitmentMismatch,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
