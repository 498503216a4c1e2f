use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix `{name}` is not positive definite (minimum eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { name: String, min_eigenvalue: f64 },

    #[error("numeric range exceeded at term {k}")]
    NumericRange { k: usize },

    #[error(
        "series bound {target:e} not reached within {n_max} terms (best bound {best_bound:e})"
    )]
    ConvergenceFailure {
        n_max: usize,
        best_bound: f64,
        target: f64,
    },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("degenerate measurement: {0}")]
    DegenerateMeasurement(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by bad user input rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::NotPositiveDefinite { .. }
                | Error::DegenerateGeometry(_)
                | Error::DegenerateMeasurement(_)
                | Error::InsufficientData(_)
                | Error::Validation(_)
                | Error::Parse(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
