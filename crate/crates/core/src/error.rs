use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point is behind the camera (depth {depth:.3e} m)")]
    BehindCamera { depth: f64 },

    #[error("point falls outside the grid at cell ({col}, {row})")]
    OutOfGrid { col: i64, row: i64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("no plane found: best inlier fraction {fraction:.3} below required {required:.3}")]
    NoPlaneFound { fraction: f64, required: f64 },

    #[error("label id {0} has no class table entry")]
    UnknownLabel(u8),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("class tables differ between inputs")]
    ClassTableMismatch,

    #[error("requested {requested} frames but only {available} are available")]
    NotEnoughFrames { requested: usize, available: usize },

    #[error("degenerate cluster: {0}")]
    DegenerateCluster(String),

    #[error("raster specs differ")]
    SpecMismatch,

    #[error("empty geometry")]
    EmptyGeometry,

    #[error("coordinate frames differ: {pred:?} vs {gt:?}")]
    FrameMismatch { pred: String, gt: String },

    #[error("invalid scene spec: {}", .0.join("; "))]
    InvalidSpec(Vec<String>),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),

    #[error("frame {frame}: camera/LiDAR time offset {offset:.4} s exceeds {tolerance:.4} s")]
    SyncViolation { frame: String, offset: f64, tolerance: f64 },

    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            return Error::MissingInput(path);
        }
        Error::Io { path, source }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code for the command-line tool: 2 input, 3 config, 4 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::InvalidSpec(_) => 3,
            Error::Internal(_) => 4,
            _ => 2,
        }
    }
}
