/// Errors produced by the toolkit.
///
/// `Validation` covers rejected inputs and configurations, `Parse` covers
/// malformed data files, `NonConvergence` and `Numeric` cover solver and
/// training failures, and `ModelFormat` covers rejected model files.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("solver did not converge after {iterations} iterations (last objective {objective:.6e})")]
    NonConvergence { iterations: usize, objective: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("model file rejected: {0}")]
    ModelFormat(String),
}

impl Error {
    pub(crate) fn validation(message: impl Into<String>) -> Self {
        Error::Validation(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
