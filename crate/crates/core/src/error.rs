use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operand shapes disagree.
    #[error("rejected input: {0}")]
    Shape(String),

    /// Invalid network, layer, or pipeline configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// API misuse, e.g. an empty batch or backward without a retained forward.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("version mismatch: expected {expected}, found {found}")]
    Version { expected: String, found: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error at line {line}: {message}")]
    Validation { line: usize, message: String },

    #[error("unresolved image files: {}", .missing.join(", "))]
    Resolution { missing: Vec<String> },

    #[error("triplet stream error: source `{source_name}` failed {attempts} consecutive draws")]
    Stream { source_name: String, attempts: usize },

    #[error("image error for {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-parsable class name, stable across releases.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Shape(_) => "rejected-input",
            Error::Config(_) => "config",
            Error::Usage(_) => "usage",
            Error::Format(_) => "format",
            Error::Version { .. } => "version",
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::Resolution { .. } => "missing-artifact",
            Error::Stream { .. } => "stream",
            Error::Image { .. } => "image",
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                "missing-artifact"
            }
            Error::Io { .. } => "io",
        }
    }
}
