use std::path::PathBuf;

/// Errors produced anywhere in the feature, regression and evaluation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum VqaError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed y4m stream: {0}")]
    Format(String),

    #[error("y4m stream truncated inside frame {frame}")]
    Truncated { frame: usize },

    #[error("unsupported video format: {0}")]
    UnsupportedFormat(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// All samples handed to a distribution fit were identical.
    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("validation error: {0}")]
    Validation(String),

    /// Inputs do not match what a trained model expects.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("subject {subject} has zero score variance in session {session}")]
    DegenerateSubject { subject: String, session: u8 },

    #[error("video {video} has {count} rating(s); at least {required} required")]
    Coverage {
        video: String,
        count: usize,
        required: usize,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl VqaError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        VqaError::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the failure came from the filesystem rather than from the data.
    pub fn is_io(&self) -> bool {
        match self {
            VqaError::Io { .. } => true,
            VqaError::Csv(e) => e.is_io_error(),
            VqaError::Json(e) => e.is_io(),
            _ => false,
        }
    }
}

pub type Result<T, E = VqaError> = std::result::Result<T, E>;
