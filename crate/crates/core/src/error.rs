use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Input bytes or text that do not follow the documented file format.
    #[error("malformed {format}: {message}")]
    Format { format: &'static str, message: String },

    /// Well-formed input that violates a precondition.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("empty tumor: volume contains no AT or non-AT voxels")]
    EmptyTumor,

    /// The numerical routine could not produce a usable answer.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Degenerate data for which the quantity is undefined (for example, all subjects censored).
    #[error("degenerate data: {0}")]
    Degenerate(String),
}

impl Error {
    pub(crate) fn format(format: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            format,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::Invalid(message.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category, used for error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Invalid(_) => "invalid",
            Error::EmptyTumor => "empty_tumor",
            Error::Numerical(_) => "numerical",
            Error::Degenerate(_) => "degenerate",
        }
    }

    /// True for failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::Degenerate(_))
    }
}
