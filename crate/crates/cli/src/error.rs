use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("infeasible window at step {start_step}: {reason}")]
    Infeasible { start_step: usize, reason: String },
    #[error("solver budget exhausted after {nodes} nodes")]
    Budget { nodes: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible { .. } => 3,
            CliError::Budget { .. } => 4,
            CliError::Io { .. } | CliError::Json { .. } | CliError::Csv { .. } => 1,
        }
    }
}

impl From<fmbc_core::Error> for CliError {
    fn from(e: fmbc_core::Error) -> Self {
        use fmbc_core::Error;
        match e {
            Error::InfeasibleWindow { start_step, reason } => CliError::Infeasible { start_step, reason },
            Error::EffortExceeded { nodes, .. } => CliError::Budget { nodes },
            Error::Contract(m) | Error::InvalidScenario(m) => CliError::Config(m),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
