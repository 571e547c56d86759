use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("stage LP infeasible at iteration {iteration}")]
    InfeasibleStage { iteration: usize },

    #[error("stage LP failed at iteration {iteration}: {status}")]
    StageFailure { iteration: usize, status: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unknown {kind} id `{id}`")]
    UnknownId { kind: &'static str, id: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
