//! The `geostack` command line. [`run`] executes one parsed command and
//! returns its human-readable summary; `main` maps errors to exit codes.

mod args;
mod commands;

use geostack_core::GeoError;

pub use args::*;
pub use commands::run;

use crate::store::StoreError;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Core(#[from] GeoError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) | CliError::Store(StoreError::Invalid(e)) if e.is_numerical() => EXIT_NUMERICAL,
            CliError::Core(_) | CliError::Store(_) => EXIT_DATA,
        }
    }
}
