use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid location: {0}")]
    InvalidLocation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("duplicate entity id `{0}`")]
    DuplicateEntity(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("corrupt input: {0}")]
    CorruptInput(String),

    #[error("numeric failure in layer {layer}: {detail}")]
    Numeric { layer: usize, detail: String },

    #[error("schema violation in {path}: {detail}")]
    Schema { path: PathBuf, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::Schema { .. } | Error::CorruptInput(_) => 4,
            Error::Config(_) | Error::Argument(_) => 5,
            Error::InvalidLocation(_) | Error::DuplicateEntity(_) | Error::Input(_) => 6,
            Error::Numeric { .. } => 7,
        }
    }

    /// Short machine-readable tag, printed on the `error:` line of the CLI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidLocation(_) => "invalid-location",
            Error::Config(_) => "config",
            Error::DuplicateEntity(_) => "duplicate-entity",
            Error::Argument(_) => "argument",
            Error::Input(_) => "input",
            Error::CorruptInput(_) => "corrupt-input",
            Error::Numeric { .. } => "numeric",
            Error::Schema { .. } => "schema",
            Error::Io { .. } => "io",
        }
    }
}
