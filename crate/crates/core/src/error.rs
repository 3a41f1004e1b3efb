use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: parse error at {location}: {message}")]
    Parse {
        path: PathBuf,
        /// Human readable position, e.g. `line 12` or `byte offset 4096`.
        location: String,
        message: String,
    },

    #[error("non-finite coordinate at {location}")]
    NonFinite { location: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scan has no sensor origin; ray casting needs one")]
    MissingOrigin,

    #[error("octree resolution mismatch: {0} vs {1}")]
    ResolutionMismatch(f64, f64),

    #[error("ICP diverged: {0}")]
    Divergence(String),

    #[error("pose graph is disconnected: {0}")]
    Disconnected(String),

    #[error("singular normal equations at block {block} ({node})")]
    Singular { block: usize, node: String },

    #[error("no ground plane hypothesis within {max_angle_deg:.1} deg of vertical")]
    NoGroundPlane { max_angle_deg: f64 },

    #[error("segment too small: {got} points, need at least {need}")]
    SegmentTooSmall { got: usize, need: usize },

    #[error("descriptor row {row}: expected {expected} values, got {got}")]
    DescriptorDimension { row: usize, expected: usize, got: usize },

    #[error("unknown segment id {0}")]
    UnknownSegment(u64),

    #[error("unknown object id {0}")]
    UnknownObject(u32),

    #[error("requested {k} clusters from {n} descriptors")]
    TooManyClusters { k: usize, n: usize },

    #[error("cloud has no per-point labels")]
    MissingLabels,

    #[error("describe failed for {} segment(s): {}", .0.len(), format_indexed(.0))]
    Batch(Vec<(usize, Error)>),

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

fn format_indexed(errors: &[(usize, Error)]) -> String {
    errors
        .iter()
        .map(|(i, e)| format!("[{i}] {e}"))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(
        path: impl Into<PathBuf>,
        location: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            path: path.into(),
            location: location.into(),
            message: message.into(),
        }
    }

    /// Wraps an error with the name of the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
