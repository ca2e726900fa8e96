use std::path::PathBuf;

/// Crate-wide error type. CLI exit codes are derived from these variants:
/// configuration problems map to 2, missing prerequisites to 3, everything
/// else to 4.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),

    #[error("invalid draw of {draw_liters} L for a {volume_liters} L tank")]
    InvalidDraw { draw_liters: f64, volume_liters: f64 },

    #[error("numeric fault: {0}")]
    NumericFault(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("feature {index} is constant; cannot normalize")]
    DegenerateFeature { index: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("failed to load model from {path}: {reason}")]
    ModelLoad { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
