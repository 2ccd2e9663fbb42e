use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] ancient_flows::Error),
    #[error("cannot write `{path}`: {source}")]
    Output {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for bad input, 1 for failures inside a run.
    pub fn exit_code(&self) -> u8 {
        use ancient_flows::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::InvalidArgument(_) | E::UnknownName { .. } | E::InadmissibleArrival(_)) => 2,
            CliError::Core(_) | CliError::Output { .. } => 1,
        }
    }
}
