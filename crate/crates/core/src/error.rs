use thiserror::Error;

/// Errors produced by simulation, verification and iteration routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("diverging moment: {0}")]
    DivergingMoment(String),

    #[error("importance weights degenerate: ess {ess:.1} of {n_paths} paths at iteration {iteration}")]
    WeightDegeneracy {
        iteration: usize,
        ess: f64,
        n_paths: usize,
        trace: Vec<String>,
    },

    #[error("iteration failed to converge: {0}")]
    NonConvergence(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Whether the error indicates bad configuration rather than a numerical failure.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::InvalidArgument(_) | Error::Domain(_))
    }
}
