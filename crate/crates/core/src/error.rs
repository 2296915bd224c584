use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} at index {index} does not fit in 12 bits")]
    Range { index: usize, value: u16 },

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("degenerate histogram: all samples fall into a single bin")]
    DegenerateHistogram,

    #[error("found {found} regions but {needed} were requested")]
    InsufficientRegions { needed: usize, found: usize },

    #[error("no dish circle survived the radius band [{r_min:.1}, {r_max:.1}]")]
    NoDishFound { r_min: f64, r_max: f64 },

    #[error("affine estimation failed: {0}")]
    EstimationFailed(String),

    #[error("white references not found: {0}")]
    ReferenceNotFound(String),

    #[error("invalid reference at row {row}, channel {channel}: white {white} <= dark {dark}")]
    InvalidReference {
        row: usize,
        channel: usize,
        white: f64,
        dark: f64,
    },

    #[error("expected 4 chessboards, found {found}")]
    ChessboardCount { found: usize },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("expected {expected} markers, found {found} (ids {ids:?})")]
    MarkerCount {
        expected: usize,
        found: usize,
        ids: Vec<u16>,
    },

    #[error("grid orientation failed: {0}")]
    Orientation(String),

    #[error("grid incomplete: {0}")]
    GridIncomplete(String),

    #[error("tracking failed: {0}")]
    Tracking(String),

    #[error("segmentation produced an empty mask")]
    EmptyMask,

    #[error("every channel of the pixel is zero")]
    DeadPixel,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
