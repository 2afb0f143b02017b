use std::path::Path;

use sgdtime::ErrorClass;
use thiserror::Error;

/// Everything a command can fail with, already split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Model(String),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Model(_) => 2,
        }
    }

    pub(crate) fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Input(format!("{}: {err}", path.display()))
    }
}

impl From<sgdtime::Error> for CliError {
    fn from(e: sgdtime::Error) -> Self {
        match e.class() {
            ErrorClass::Input => CliError::Input(e.to_string()),
            ErrorClass::Model => CliError::Model(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
