use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument, configuration or incompatible inputs.
    #[error("usage error: {0}")]
    Usage(String),

    /// A pivot or residual variance went negative beyond round-off.
    #[error("matrix is not positive semidefinite: value {value:e} at position {index} (threshold {threshold:e})")]
    NotPsd {
        index: usize,
        value: f64,
        threshold: f64,
    },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// Numerical failures map to exit code 2 in the CLI, everything else to 1.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NotPsd { .. } | Error::NumericalBreakdown(_))
    }
}
