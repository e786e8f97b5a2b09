use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("coordinate out of domain: lat={lat}, lng={lng}")]
    Coordinate { lat: f64, lng: f64 },

    #[error("invalid cell: {0}")]
    Cell(String),

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: row {row}: {message}")]
    Row {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("unit error: {0}")]
    UnitDomain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the caller's inputs rather than by the
    /// program itself.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Internal(_))
    }
}
