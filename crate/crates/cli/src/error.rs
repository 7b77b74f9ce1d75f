use std::path::{Path, PathBuf};

use halo_choice::ChoiceError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Choice(#[from] ChoiceError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn csv(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Csv {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }

    pub fn from_clap(err: clap::Error) -> Self {
        let text = err.to_string();
        let first = text.lines().next().unwrap_or_default();
        CliError::Usage(first.trim_start_matches("error: ").to_string())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Choice(e) => e.kind(),
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Csv { .. } => "csv",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// `error: <kind>: <message>` on a single line.
    pub fn single_line(&self) -> String {
        let message = self.to_string().replace(['\n', '\r'], " ");
        format!("error: {}: {}", self.kind(), message)
    }
}
