use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid value for `{key}`: {message}")]
    Usage { key: String, message: String },
    #[error(transparent)]
    Cli(#[from] clap::Error),
    #[error(transparent)]
    Core(#[from] qsdc_core::Error),
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot encode report: {0}")]
    Encode(String),
}

impl SimError {
    pub fn usage(key: &str, message: impl Into<String>) -> Self {
        Self::Usage {
            key: key.to_string(),
            message: message.into(),
        }
    }

    /// 2 for usage errors, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage { .. } => 2,
            Self::Cli(e) => e.exit_code(),
            _ => 1,
        }
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
