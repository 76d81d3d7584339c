use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("directory {0:?} is not a member of the configured class set")]
    UnknownClass(String),

    #[error("cannot decode image {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("class folder {0:?} contains no images")]
    EmptyClass(String),

    #[error("class {class:?} has {count} record(s); at least 2 are required to stratify")]
    TooFewToStratify { class: String, count: usize },

    #[error("image {path} is {width}x{height}, expected {expected}x{expected}")]
    WrongSize {
        path: PathBuf,
        width: u32,
        height: u32,
        expected: u32,
    },

    #[error("generated image {path} does not belong to {expected}: {reason}")]
    ClassMismatch {
        path: PathBuf,
        expected: String,
        reason: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("gradient unavailable: {0}")]
    GradientUnavailable(String),

    #[error(
        "non-finite loss at epoch {epoch}, step {step}: generator loss {g_loss}, \
         discriminator/critic loss {d_loss}"
    )]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        g_loss: f64,
        d_loss: f64,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checkpoint fingerprint mismatch for {role}: expected {expected}, found {found}")]
    FingerprintMismatch {
        role: String,
        expected: String,
        found: String,
    },

    #[error("pretrained weights for {backbone} not found at {path}\n{instructions}")]
    MissingPretrainedWeights {
        backbone: String,
        path: PathBuf,
        instructions: String,
    },

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("missing dataset variant {variant}: {reason}")]
    MissingVariant { variant: String, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Torch(#[from] tch::TchError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
