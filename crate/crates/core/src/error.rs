use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid coordinate ({x}, {y})")]
    InvalidCoordinate { x: f64, y: f64 },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid flow field: {0}")]
    InvalidFlow(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("image too small: {0}")]
    TooSmall(String),

    #[error("patch rejected: {fraction:.4} of pixels saturated (limit {limit})")]
    Rejected { fraction: f64, limit: f64 },

    #[error("intra flow required for the {0} variant")]
    MissingIntraFlow(&'static str),

    #[error("no valid trajectories")]
    NoValidTrajectories,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed {format} data: {reason}")]
    Format { format: &'static str, reason: String },

    #[error("{path}: {source}")]
    Path {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Png(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn format(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            format,
            reason: reason.into(),
        }
    }

    pub(crate) fn dims(what: impl Into<String>) -> Self {
        Error::DimensionMismatch(what.into())
    }

    /// Attach a file path to an error raised while reading or writing it.
    pub fn at(self, path: impl Into<PathBuf>) -> Self {
        Error::Path {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// True for failures that come from the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerical(_) | Error::NoValidTrajectories => true,
            Error::Path { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
