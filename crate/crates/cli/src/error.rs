use std::fmt;

use sll_core::SllError;

pub const EXIT_NOT_CONVERGED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn mismatch(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_MISMATCH,
            message: message.into(),
        }
    }

    /// Attaches the file a library error came from.
    pub fn with_path(err: SllError, path: &std::path::Path) -> Self {
        let mut e = CliError::from(err);
        e.message = format!("{}: {}", path.display(), e.message);
        e
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<SllError> for CliError {
    fn from(e: SllError) -> Self {
        let code = match &e {
            SllError::InvalidConfig(_) | SllError::Io(_) => EXIT_CONFIG,
            SllError::NotConverged { .. } => EXIT_NOT_CONVERGED,
            _ => EXIT_MISMATCH,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::config(e.to_string())
    }
}
