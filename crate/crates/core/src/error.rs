use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("position penetrates an obstacle by {depth} m")]
    Penetration { depth: f64 },
    #[error("robots {0} and {1} are coincident")]
    CoincidentRobots(usize, usize),
    #[error("degenerate geometry: {0}")]
    Degenerate(&'static str),
    #[error("invalid obstacle: {0}")]
    InvalidObstacle(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite loss, update aborted")]
    NonFiniteLoss,
    #[error("scenario generation failed after {0} attempts")]
    SamplingExhausted(usize),
    #[error("unsupported checkpoint version {0}")]
    CheckpointVersion(u32),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
}
