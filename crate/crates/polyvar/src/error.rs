use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] polyvar_core::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{failed} of {total} replications failed at n = {n}")]
    TooManyFailures { n: usize, failed: usize, total: usize },
}

impl HarnessError {
    /// Process exit code: 2 for invalid input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Core(e) if !e.is_validation() => 3,
            HarnessError::TooManyFailures { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
