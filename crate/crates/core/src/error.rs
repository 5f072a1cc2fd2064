use std::path::PathBuf;

use thiserror::Error;

use crate::inpaint::InpaintError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed image {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("unsupported bit depth {depth} in {path}")]
    UnsupportedBitDepth { path: PathBuf, depth: u8 },

    #[error("{path} is a color image; convert it to grayscale first")]
    ColorImage { path: PathBuf },

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("crispness is undefined for an edge map with zero total mass")]
    UndefinedCrispness,

    #[error("every pixel falls in the ignored confidence band; loss is undefined")]
    AllPixelsIgnored,

    #[error("empty input: {0}")]
    Empty(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error(transparent)]
    Inpaint(#[from] InpaintError),

    #[error("edge detector failed: {0}")]
    Detector(InpaintError),

    #[error("json error: {0}")]
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
