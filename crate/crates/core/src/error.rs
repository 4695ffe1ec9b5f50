use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("missing upstream artifacts: {}", .0.join(", "))]
    MissingArtifacts(Vec<String>),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("payload size mismatch: header implies {expected} bytes, found {actual}")]
    SizeMismatch { expected: u64, actual: u64 },

    #[error("duplicate band name {0:?}")]
    DuplicateBandName(String),

    #[error("invalid raster header: {0}")]
    InvalidHeader(String),

    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected:?}, found {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("task {task_id} is incomplete: {have} answers, {need} required")]
    IncompleteTask {
        task_id: String,
        have: usize,
        need: usize,
    },

    #[error("unknown segment id {0}")]
    UnknownSegment(i32),

    #[error("unknown task {0}")]
    UnknownTask(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    /// Short category tag, stable across releases, used for exit codes and
    /// machine-readable error lines.
    pub fn category(&self) -> &'static str {
        match self {
            Error::MissingFile(_) | Error::MissingArtifacts(_) | Error::Io { .. } => "io",
            Error::Json { .. } | Error::Csv(_) | Error::Schema(_) => "schema",
            Error::Image(_) => "image",
            Error::SizeMismatch { .. } | Error::DuplicateBandName(_) | Error::InvalidHeader(_) => {
                "format"
            }
            Error::OutOfBounds(_)
            | Error::InvalidParameter(_)
            | Error::DimensionMismatch { .. } => "parameter",
            Error::IncompleteTask { .. }
            | Error::UnknownSegment(_)
            | Error::UnknownTask(_)
            | Error::Empty(_)
            | Error::Invariant(_) => "data",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
