use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Data(String),

    #[error("run {run} (seed {seed}): {source}")]
    Run { run: usize, seed: u64, source: lhe_core::Error },
}

impl CliError {
    /// 0 success, 1 usage, 2 data, 3 numerical divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Run { source: lhe_core::Error::Diverged { .. }, .. } => 3,
            CliError::Run { source: lhe_core::Error::InvalidSpec(_) | lhe_core::Error::InvalidRate(_), .. } => 1,
            CliError::Run { .. } => 2,
        }
    }
}

impl From<lhe_core::Error> for CliError {
    fn from(e: lhe_core::Error) -> Self {
        match e {
            lhe_core::Error::InvalidSpec(_) | lhe_core::Error::InvalidRate(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

pub(crate) fn io_error(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}
