use thiserror::Error;

/// Errors raised by the tensor autoregression library.
#[derive(Debug, Error)]
pub enum TenArError {
    #[error("mode {mode} out of range for an order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("model is not causal (companion spectral radius {radius})")]
    NotCausal { radius: f64 },

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    #[error("covariance is not positive semi-definite: {0}")]
    NotPositiveDefinite(String),

    #[error("no convergence after {iterations} iterations (best estimate {best})")]
    NoConvergence { iterations: usize, best: f64 },

    #[error("objective moved in the wrong direction at sweep {sweep}: {previous} -> {current}")]
    Divergence {
        sweep: usize,
        previous: f64,
        current: f64,
    },

    #[error("degenerate random draw: {0}")]
    DegenerateDraw(String),

    #[error("{path}: {message}")]
    Format { path: String, message: String },

    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: String, expected: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl TenArError {
    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            TenArError::NotCausal { .. }
                | TenArError::Singular(_)
                | TenArError::NotPositiveDefinite(_)
                | TenArError::NoConvergence { .. }
                | TenArError::Divergence { .. }
                | TenArError::DegenerateDraw(_)
        )
    }

    pub(crate) fn format(path: impl Into<String>, message: impl Into<String>) -> Self {
        TenArError::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, TenArError>;
