//! Config-driven runs of the verification suite and drive studies.

pub mod config;
pub mod output;
pub mod studies;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    /// Unreadable, malformed or inconsistent configuration; exit status 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// A numerical failure during the run; exit status 1.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 1,
        }
    }
}
