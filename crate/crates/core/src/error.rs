use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A participating core reported an elapsed time at or below the clock
    /// epsilon; the update round must be skipped.
    #[error("degenerate timing on core {core}: elapsed {elapsed_s:e} s")]
    DegenerateTiming { core: usize, elapsed_s: f64 },

    #[error("ratio update needs at least two participating cores, got {0}")]
    InsufficientParticipants(usize),

    #[error("failed to pin worker to core {core_id}: {reason}")]
    PinningFailed { core_id: usize, reason: String },

    #[error("cannot create worker thread: {0}")]
    ResourceExhausted(String),

    #[error("sub-task on core {core_index} panicked: {message}")]
    TaskFailed { core_index: usize, message: String },

    #[error("thread pool has been shut down")]
    PoolClosed,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("profile has {got} factors but the pool has {expected} cores")]
    CountMismatch { expected: usize, got: usize },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("static and dynamic runs produced different outputs")]
    OutputMismatch,

    #[error("invalid file format: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than runtime failure.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::Parse { .. }
                | Error::CountMismatch { .. }
                | Error::DimensionMismatch(_)
        )
    }
}
