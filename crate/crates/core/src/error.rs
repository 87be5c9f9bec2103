use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {op} got {left} and {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("line {line}, field {field}: cannot parse {value:?} as a number")]
    Parse {
        line: usize,
        field: usize,
        value: String,
    },

    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("model file line {line}: {message}")]
    ModelFormat { line: usize, message: String },

    #[error("unsupported model format version {found} (this build reads version {expected})")]
    Version { found: u32, expected: u32 },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("unknown config key {key:?} on line {line}")]
    UnknownKey { line: usize, key: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, left: impl ToString, right: impl ToString) -> Self {
        Error::Shape {
            op,
            left: left.to_string(),
            right: right.to_string(),
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
