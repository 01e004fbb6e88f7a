use std::path::Path;

use tomcat_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("corrupt checkpoint {path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error("{0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Input(format!("{}: {e}", path.display()))
    }

    /// 1 input or configuration error, 2 corrupt artifact, 3 numerical abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(CoreError::NonFiniteGradient | CoreError::NonFiniteLoss { .. } | CoreError::DegenerateSample(_)) => 3,
            CliError::Corrupt { .. } => 2,
            CliError::Core(_) | CliError::Input(_) => 1,
        }
    }
}
