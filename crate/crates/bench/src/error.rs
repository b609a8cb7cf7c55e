use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Mechanism(#[from] dpmean::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl BenchError {
    /// Process exit code: 2 for bad configuration, 3 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Mechanism(dpmean::Error::InvalidBudget(_) | dpmean::Error::InvalidArgument(_)) => 2,
            _ => 3,
        }
    }
}
