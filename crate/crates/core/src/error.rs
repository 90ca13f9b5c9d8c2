use std::io;
use std::path::PathBuf;

/// Errors produced by the engine. Each variant maps onto one of the
/// process exit codes used by the command-line front end.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("format error in field `{field}`: {detail}")]
    Format { field: &'static str, detail: String },

    #[error("alignment error: {records} records but {rows} embedding rows")]
    Alignment { records: usize, rows: usize },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(field: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            field,
            detail: detail.into(),
        }
    }

    /// Process exit code: 2 input, 3 format, 4 parameter.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Io { .. } | Error::Input(_) | Error::Evaluation(_) => 2,
            Error::Format { .. } | Error::Alignment { .. } => 3,
            Error::Geometry(_) | Error::Parameter(_) => 4,
            Error::Internal(_) => 1,
        }
    }
}
