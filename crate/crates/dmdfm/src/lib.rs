//! File formats, configuration, parallel Monte Carlo and the command-line
//! driver around [`dmdfm_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod parallel;
pub mod run;

pub use error::{Category, CliError, Result};
pub use manifest::{Job, RunManifest};
pub use run::execute;
