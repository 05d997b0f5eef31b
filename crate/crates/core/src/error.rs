use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid construction parameters (grid sizes, step sizes, orders, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Inputs that are individually valid but do not fit together.
    #[error("usage error: {0}")]
    Usage(String),

    /// An iterative diagnostic did not converge; carries the partial estimate.
    #[error("diagnostic did not converge after {iterations} iterations (partial estimate {estimate:.6e})")]
    NotConverged { iterations: usize, estimate: f64 },

    #[error("evolution aborted at t = {time:.4}: {reason}")]
    Evolution { time: f64, reason: String },

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    /// A decomposition failure inside a tracked series, tagged with the snapshot index.
    #[error("tracking failed at snapshot {index}: {source}")]
    Tracking {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("experiment error: {0}")]
    Experiment(String),

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}
