use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] jcoupling_core::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 2 for configuration and input problems, 3 for numerical failures,
    /// 4 when the sampler does not converge.
    pub fn exit_code(&self) -> i32 {
        use jcoupling_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Read { .. } => 2,
            CliError::Core(e) => match e {
                E::NonConvergence(_) => 4,
                E::Numerical(_) | E::RegimeGuard(_) | E::InvalidState(_) => 3,
                _ => 2,
            },
        }
    }
}
