//! Command implementations behind the `branchtrack` binary.
//!
//! Every command is a plain function over paths and a loaded
//! [`PipelineConfig`], so tests can drive them without spawning processes.

pub mod args;
pub mod commands;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] branchtrack::Error),
    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// Process exit status: 1 usage, 2 validation, 3 runtime.
    pub fn exit_code(&self) -> u8 {
        use branchtrack::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e {
                E::InvalidConfig(_)
                | E::InvalidInput(_)
                | E::Shape(_)
                | E::UnknownMode(_)
                | E::Schema(_)
                | E::Manifest(_)
                | E::Json(_) => 2,
                E::Diverged { .. } | E::Io { .. } => 3,
            },
            CliError::Csv { .. } => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
