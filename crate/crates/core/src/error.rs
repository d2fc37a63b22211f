use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("model state: {0}")]
    State(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("degenerate clustering: {0}")]
    DegenerateClustering(String),

    #[error("degenerate range: {0}")]
    DegenerateRange(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for data problems, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) | Error::DegenerateClustering(_) | Error::DegenerateRange(_) => 3,
            _ => 2,
        }
    }
}

pub(crate) fn ensure_finite(value: f64, what: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what} is not finite ({value})")))
    }
}
