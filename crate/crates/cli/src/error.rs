use thiserror::Error;

/// Command failures, mapped onto the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or malformed input files and inconsistent options.
    #[error("input error: {0}")]
    Input(String),

    /// Output could not be produced or written.
    #[error("output error: {0}")]
    Output(String),

    #[error(transparent)]
    Core(#[from] spatcens::Error),
}

impl CliError {
    /// 2 for validation problems, 3 for numerical breakdown.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}
