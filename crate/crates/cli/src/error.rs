use std::path::PathBuf;

use thiserror::Error;

/// Failures of a CLI command, each mapped to an exit code and a short tag.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Ingestion { path: PathBuf, message: String },

    #[error(transparent)]
    Model(#[from] vimech::Error),

    #[error("{0}")]
    CheckFailed(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn ingestion(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Ingestion {
            path: path.into(),
            message: message.into(),
        }
    }

    /// 2 for bad input, 3 for solver failures, 4 for failed checks.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } | CliError::Ingestion { .. } => 2,
            CliError::Model(e) => match e.root() {
                vimech::Error::NewtonDiverged { .. }
                | vimech::Error::SingularKkt { .. }
                | vimech::Error::InfeasibleStart { .. } => 3,
                _ => 2,
            },
            CliError::CheckFailed(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Ingestion { .. } => "ingestion",
            CliError::Model(e) => match e.root() {
                vimech::Error::NewtonDiverged { .. } => "newton_diverged",
                vimech::Error::SingularKkt { .. } => "singular_kkt",
                vimech::Error::InfeasibleStart { .. } => "infeasible_start",
                vimech::Error::ModelDefinition(_) => "model_definition",
                _ => "invalid_input",
            },
            CliError::CheckFailed(_) => "check_failed",
        }
    }

    /// `error code=N kind=TAG: message` on one line.
    pub fn report_line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error code={} kind={}: {msg}", self.exit_code(), self.kind())
    }
}
