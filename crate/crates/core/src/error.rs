use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value or violated precondition.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Incompatible tensor or model shapes.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A class label outside `[0, num_classes)`.
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    /// A numeric operation produced NaN or infinity.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Malformed data file; `line` is 1-based.
    #[error("{path}:{line}: {msg}")]
    MalformedData {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
