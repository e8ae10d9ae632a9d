pub mod eval;
pub mod gen;
pub mod ph;
pub mod sweep;
pub mod train;

use crate::CliError;

/// Anything that goes wrong before work starts is a config error (exit 2).
pub fn config_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Config(e.into())
}

/// Failures mid-run (exit 1).
pub fn runtime_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(e.into())
}
