use std::path::PathBuf;

use ctas_core::Issue;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// Malformed or invalid input data, configuration or report.
    #[error("{}: {source}", path.display())]
    Input {
        path: PathBuf,
        source: ctas_core::Error,
    },
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("fit report does not match the model: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Core(#[from] ctas_core::Error),
    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn input(path: impl Into<PathBuf>, source: ctas_core::Error) -> Self {
        Error::Input {
            path: path.into(),
            source,
        }
    }

    /// Failures caused by what was read in, as opposed to what was computed.
    pub fn is_ingestion(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Input { .. } | Error::Config { .. } | Error::Mismatch(_)
        )
    }

    /// Every validation finding carried by the error, for line-per-issue reporting.
    pub fn issues(&self) -> &[Issue] {
        match self {
            Error::Input {
                source: ctas_core::Error::Validation(v),
                ..
            }
            | Error::Core(ctas_core::Error::Validation(v)) => v,
            _ => &[],
        }
    }
}
