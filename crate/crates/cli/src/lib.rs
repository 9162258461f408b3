//! Command-line front end: scenario files in, CSV trajectories and JSONL
//! summaries out.

pub mod commands;
pub mod config;
pub mod output;
pub mod quantity;

use nemqubit::dynamics::DynamicsError;
use nemqubit::protocols::ProtocolError;
use thiserror::Error;

pub use config::ScenarioConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("integration quality: {0}")]
    Quality(String),
    #[error("{0}")]
    Acceptance(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Quality(_) => 3,
            CliError::Acceptance(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::NormDrift { .. } => CliError::Quality(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Dynamics(d) => d.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}
