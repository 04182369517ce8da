use std::path::PathBuf;

/// Errors produced anywhere in the nowcasting pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("domain error at index {index}: {msg}")]
    Domain { index: usize, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("fetch error for vintage {tag}: {msg}")]
    Fetch {
        tag: String,
        msg: String,
        retryable: bool,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("conditioning error at t={t}: {msg}")]
    Conditioning { t: usize, msg: String },

    #[error("estimation error: {msg} (trace: {trace:?})")]
    Estimation { msg: String, trace: Vec<f64> },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training diverged at epoch {epoch}: {msg}")]
    Divergence { epoch: usize, msg: String },

    #[error("windowing error: {0}")]
    Windowing(String),

    #[error("degenerate test: {0}")]
    Degenerate(String),

    #[error("run error: {0}")]
    Run(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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

    /// Whether retrying the same operation may succeed (network hiccups).
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Fetch { retryable: true, .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
