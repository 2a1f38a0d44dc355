use std::path::PathBuf;

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("vector norm {norm:e} is at or below the zero threshold")]
    NearZeroNorm { norm: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid synthetic spec: {0}")]
    Spec(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no regions supplied{}", .class_id.map(|c| format!(" for class {c}")).unwrap_or_default())]
    EmptyClass { class_id: Option<u32> },

    #[error("unknown class id {0}")]
    UnknownClass(u32),

    #[error("class {0} is not tagged base or novel")]
    UnknownGroup(u32),

    #[error("need at least 2 base classes, found {0}")]
    InsufficientClasses(usize),

    #[error("novel-nearest pair selection requires novel targets")]
    MissingTargets,

    #[error("empty group: {0}")]
    EmptyGroup(&'static str),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
