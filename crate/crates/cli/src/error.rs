use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// The config did not parse or failed validation; the message names the field.
    #[error("config error: {0}")]
    Config(String),

    #[error("solver failure: {0}")]
    Solver(oraclepriv::Error),

    #[error(transparent)]
    Library(oraclepriv::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("plot: {0}")]
    Plot(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Solver(_) => 3,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl From<oraclepriv::Error> for CliError {
    fn from(e: oraclepriv::Error) -> Self {
        match e {
            oraclepriv::Error::SolverFailure { .. } | oraclepriv::Error::InstanceTooLarge { .. } => CliError::Solver(e),
            other => CliError::Library(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
