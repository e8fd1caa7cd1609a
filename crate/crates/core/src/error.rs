use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value or combination.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data.
    #[error("input error: {0}")]
    Input(String),

    /// A non-finite or otherwise unusable numeric value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A caller broke a documented precondition (shape mismatch and the like).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Degenerate or non-finite box geometry.
    #[error("invalid box: {0}")]
    InvalidBox(String),

    /// Nothing to evaluate.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 for input problems, 2 for configuration problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            _ => 1,
        }
    }
}
