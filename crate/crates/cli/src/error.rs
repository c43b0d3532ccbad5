//! Errors of the command-line tool and their exit codes.

use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] tfb_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("{failed} of {total} verification checks failed")]
    Verification { failed: usize, total: usize },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl std::fmt::Display) -> Self {
        Self::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Process exit status: 2 for validation and input problems, 3 for
    /// numerical failures, 4 for failed verification checks.
    pub fn exit_code(&self) -> i32 {
        use tfb_core::Error as E;
        match self {
            CliError::Core(
                E::NonFinite(_)
                | E::Diverged { .. }
                | E::NotPositiveDefinite { .. }
                | E::RankDeficient { .. },
            ) => 3,
            CliError::Verification { .. } => 4,
            _ => 2,
        }
    }
}
