use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("random walk left the workspace on all {retries} attempts")]
    SpawnFailed { retries: usize },

    #[error("cannot step a world whose status is {0}")]
    NotRunning(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate episode: final contact coincides with the pinned end")]
    DegenerateEpisode,

    #[error("final step has no extractable contact")]
    NoFinalContact,

    #[error("{0}: bad magic bytes")]
    BadMagic(String),

    #[error("{what}: unsupported version {found} (expected {expected})")]
    VersionMismatch {
        what: String,
        found: u32,
        expected: u32,
    },

    #[error("{0}: truncated stream")]
    Truncated(String),

    #[error("{what}: length mismatch (expected {expected}, found {found})")]
    LengthMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("dataset inconsistency: {0}")]
    Consistency(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },

    #[error("no successful demonstration for preset {preset} after {attempts} attempts")]
    DemoCapExhausted { preset: String, attempts: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by malformed or inconsistent on-disk data.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::BadMagic(_)
                | Error::VersionMismatch { .. }
                | Error::Truncated(_)
                | Error::LengthMismatch { .. }
                | Error::Consistency(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::NoFinalContact
                | Error::DegenerateEpisode
        )
    }
}
