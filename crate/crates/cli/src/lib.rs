//! Configuration-driven front end: parses strict JSON configs (or shipped
//! presets), runs one command over its parameter grid and writes CSV/JSON
//! outputs plus a manifest.

pub mod commands;
pub mod config;
pub mod output;
pub mod presets;

use serde::{Deserialize, Serialize};

pub use commands::{run, RunContext};
pub use config::Config;

/// Subcommands of the tool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Spectrum,
    Walk,
    Sweep,
    Boundaries,
    Scaling,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Walk => "walk",
            Command::Sweep => "sweep",
            Command::Boundaries => "boundaries",
            Command::Scaling => "scaling",
            Command::Check => "check",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid configuration or command line; exit code 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// A computation failed or a check did not pass; exit code 1.
    #[error("computation failed: {0}")]
    Compute(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<qpssh_core::Error> for CliError {
    fn from(e: qpssh_core::Error) -> Self {
        match e {
            qpssh_core::Error::Io(io) => CliError::Io(io),
            qpssh_core::Error::InvalidParameter { .. } | qpssh_core::Error::Boundary { .. } => {
                CliError::Config(e.to_string())
            }
            other => CliError::Compute(other.to_string()),
        }
    }
}
