//! Command-line experiments: config parsing, file output, subcommands and
//! the acceptance suite behind `conjray selftest`.
pub mod acceptance;
pub mod commands;
pub mod config;
pub mod output;

use config::ConfigError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] conjray_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical guards, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Core(conjray_core::Error::InvalidArgument(_)) => 2,
            CliError::Core(e) if e.is_numerical_guard() => 3,
            _ => 1,
        }
    }
}
