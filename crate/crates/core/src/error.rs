use thiserror::Error;

/// Errors raised by the segmentation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty input")]
    EmptyInput,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("rotation matrix is not orthonormal (deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("label class '{label}' has {rows} row(s); at least 2 are required")]
    ClassTooSmall { label: String, rows: usize },

    #[error("covariance of component {component} is not positive definite")]
    SingularCovariance { component: usize },

    #[error("non-finite log-likelihood at EM iteration {iteration}")]
    NonFiniteLogLikelihood { iteration: usize },

    #[error("synthetic trajectory diverged at frame {frame} (state norm {norm:e})")]
    Diverged { frame: usize, norm: f64 },

    #[error("no mapping rule for label '{0}'")]
    UnmappedLabel(String),

    #[error("segment {segment} ('{label}') needs split boundaries: {message}")]
    MissingBoundary {
        segment: usize,
        label: String,
        message: String,
    },

    #[error("rejection budget exhausted: {0}")]
    RejectionBudget(String),
}

impl Error {
    /// True for failures of the numerical routines rather than of the input data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularCovariance { .. }
                | Error::NonFiniteLogLikelihood { .. }
                | Error::Diverged { .. }
                | Error::RejectionBudget(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
