use qsnash_core::Error as CoreError;

/// Harness-level failures, split by exit code: configuration problems
/// exit with 1, numerical failures with 2.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }

    /// Classifies a core error raised while running (not validating).
    pub fn from_run(e: CoreError) -> Self {
        match e {
            CoreError::NumericalBlowUp
            | CoreError::BlowUpAt { .. }
            | CoreError::NoConvergence { .. }
            | CoreError::CflViolation { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}
