use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Structurally malformed input (out-of-range indices, self-loops, length mismatches).
    #[error("validation error: {0}")]
    Validation(String),

    /// A standing assumption of the control design does not hold
    /// (disconnected graph, singular `L + B`, non-positive input gain, ...).
    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("index {index} out of range for {len} agents")]
    Index { index: usize, len: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("integration diverged at t = {time}: {reason}")]
    Divergence { time: f64, reason: String },

    #[error("training diverged: {0}")]
    TrainingDivergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
