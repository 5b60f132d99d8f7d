use std::path::PathBuf;

use thiserror::Error;

/// Exit status for configuration problems. Usage errors exit with 2 via clap.
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_RUNTIME: u8 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] pognac_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed manifest: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("rerun differs from the manifest in: {}", .0.join(", "))]
    Mismatch(Vec<String>),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(
                pognac_core::Error::Config(_) | pognac_core::Error::Parse(_) | pognac_core::Error::Pole { .. },
            ) => EXIT_CONFIG,
            CliError::Manifest { .. } => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
