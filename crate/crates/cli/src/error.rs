use std::path::Path;
use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("convergence gate failed: {0}")]
    Gate(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Validation(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Validation(_) => ExitCode::from(2),
            CliError::Gate(_) => ExitCode::from(3),
        }
    }
}

impl From<outbreak_core::Error> for CliError {
    fn from(e: outbreak_core::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}
