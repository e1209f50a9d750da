use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A is numerically rank deficient: sigma_min / sigma_max below the cutoff.
    #[error("matrix is numerically rank deficient (sigma_min/sigma_max = {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("singular system in {context}")]
    Singular { context: &'static str },

    #[error("degenerate instance: {0}")]
    Degenerate(String),

    /// phi(0) < 0: the secular equation has no root on gamma >= 0.
    #[error("secular equation has no nonnegative root (phi(0) = {phi0:e})")]
    NoRoot { phi0: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
        /// Last (or best) iterate, when the algorithm has one.
        last: Option<Vec<f64>>,
    },

    #[error("{path}:{line}: {message}")]
    Csv {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
