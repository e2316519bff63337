use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] volcon_core::Error),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing input {}; run `volcon {stage}` first", path.display())]
    MissingInput { path: PathBuf, stage: &'static str },

    #[error("malformed input {}: {message}", path.display())]
    Malformed { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for usage and configuration errors, 3 when a hypothesis of the
    /// contraction theorem fails, 1 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        use volcon_core::Error as E;
        match self {
            CliError::Core(E::Hypothesis(_) | E::Uncertified | E::DerivationFailure { .. }) => 3,
            CliError::Io { .. } => 1,
            _ => 2,
        }
    }
}
