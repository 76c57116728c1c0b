use thiserror::Error;

/// Failures mapped onto the documented process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error in stage {stage}: {message}")]
    Data { stage: String, message: String },
    #[error("training diverged in stage {stage}: {message}")]
    Divergence { stage: String, message: String },
    #[error("i/o error in stage {stage}: {message}")]
    Io { stage: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data { .. } => 3,
            CliError::Divergence { .. } => 4,
            CliError::Io { .. } => 5,
        }
    }

    /// Attaches the failing stage to a core error.
    pub fn from_core(stage: &str, e: trb_core::Error) -> Self {
        let stage = stage.to_string();
        let message = e.to_string();
        match e {
            trb_core::Error::Config(m) => CliError::Config(format!("{stage}: {m}")),
            trb_core::Error::Divergence { .. } => CliError::Divergence { stage, message },
            trb_core::Error::Io(_) => CliError::Io { stage, message },
            _ => CliError::Data { stage, message },
        }
    }

    pub fn io(stage: &str, e: std::io::Error) -> Self {
        CliError::Io {
            stage: stage.into(),
            message: e.to_string(),
        }
    }
}
