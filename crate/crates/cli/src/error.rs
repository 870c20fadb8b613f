use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] ltc_core::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("selftest failed: {0}")]
    SelftestFailed(String),
}

impl CliError {
    /// Process exit code: 0 success, 1 config error, 2 runtime numeric error,
    /// 3 selftest failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Core(ltc_core::Error::Config(_)) => 1,
            CliError::SelftestFailed(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
