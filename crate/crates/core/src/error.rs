use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error in {function}: {detail}")]
    Domain {
        function: &'static str,
        detail: String,
    },

    #[error("scale matrix is not positive definite ({context})")]
    IllConditionedScale { context: String },

    #[error("skewness matrix yields a non positive-definite Lambda ({context})")]
    InvalidSkewness { context: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("orthant probability underflow ({value:e}): {context}")]
    Underflow { value: f64, context: String },

    #[error("truncation region has negligible probability ({c1:e})")]
    DegenerateTruncation { c1: f64 },

    #[error("second moment undefined for nu = {nu} (requires nu > 2)")]
    MomentUndefined { nu: f64 },

    #[error("observation {row} has zero density under every kernel")]
    ZeroDensity { row: usize },

    #[error("kernel {kernel} collapsed: total responsibility {mass:e}")]
    DegenerateCluster { kernel: usize, mass: f64 },

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("model document error: {0}")]
    Document(String),

    #[error("unsupported model format version {found:?} (expected {expected:?})")]
    FormatVersion { found: String, expected: String },

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn domain(function: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            function,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    /// True for the failures the trainer reports as numerical (as opposed to
    /// bad input data or bad configuration).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IllConditionedScale { .. }
                | Error::InvalidSkewness { .. }
                | Error::Underflow { .. }
                | Error::DegenerateTruncation { .. }
                | Error::MomentUndefined { .. }
                | Error::ZeroDensity { .. }
                | Error::DegenerateCluster { .. }
                | Error::Initialization(_)
        )
    }
}
