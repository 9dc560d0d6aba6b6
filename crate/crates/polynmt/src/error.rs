use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for the requested op.
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    /// A row fed to softmax consists entirely of masked (-inf) entries, so
    /// the distribution would be undefined.
    #[error("softmax row {row} is fully masked")]
    DegenerateSoftmaxRow { row: usize },

    /// Dropout keep-probability would be zero or negative.
    #[error("dropout rate {rate} is outside [0, 1)")]
    InvalidDropoutRate { rate: f64 },

    /// A token id fell outside the embedding table.
    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: usize, vocab_size: usize },

    /// A target language was requested that the sharing plan does not cover.
    #[error("unknown target language '{0}'")]
    UnknownTarget(String),

    /// A sharing plan failed validation against the model configuration.
    #[error("invalid sharing plan: {0}")]
    InvalidPlan(String),

    /// A configuration value is inconsistent or out of range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Input data (corpus, vocabulary, subword model, ...) is malformed.
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A checkpoint file is corrupt or does not match the running setup.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// A gradient or parameter became NaN/inf during optimization.
    #[error("non-finite value in {context} at step {step}")]
    NonFinite { context: String, step: u64 },

    /// Numerical preconditions of an op were violated.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Attach a file path to a raw io error.
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }
}
