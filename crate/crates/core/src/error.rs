use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pixel ({u}, {v}) outside {width}x{height} image")]
    OutOfBounds {
        u: i64,
        v: i64,
        width: usize,
        height: usize,
    },

    #[error("pixel ({u}, {v}) is background")]
    Background { u: i64, v: i64 },

    #[error("point has non-positive depth {z}")]
    DegenerateDepth { z: f64 },

    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("cannot train on an empty sample set")]
    EmptyTraining,

    #[error("mask has no foreground pixels")]
    EmptyMask,

    #[error("distance map has no positive maximum")]
    DegenerateMask,

    #[error("image contains no hand pixels")]
    NoHand,

    #[error("degenerate pose: {0}")]
    DegeneratePose(String),

    #[error("sample {sample}: {reason}")]
    Data { sample: String, reason: String },

    #[error("skeleton mismatch: expected {expected} joints, found {found}")]
    SkeletonMismatch { expected: usize, found: usize },

    #[error("unknown subject {0}")]
    UnknownSubject(u32),

    #[error("{}: malformed data at byte {offset}: {reason}", path.display())]
    Format {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    #[error("{}: line {line}: {reason}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("unsupported model version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }
}
