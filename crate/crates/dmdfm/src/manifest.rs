//! `run-manifest.json`: the fully resolved recipe of a run. Replaying a
//! manifest reproduces every output byte for byte; the output directory and
//! worker count are deliberately not part of it.

use std::path::{Path, PathBuf};

use dmdfm_core::pipeline::ErrorFactorPath;
use dmdfm_core::simulation::SimulationConfig;
use dmdfm_core::DmdfmConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io;

pub const MANIFEST_FILE: &str = "run-manifest.json";
pub const TOOL: &str = "dmdfm";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case", deny_unknown_fields)]
pub enum Job {
    Estimate {
        input: PathBuf,
        estimation: DmdfmConfig,
        /// Exit with a numerical failure when the outer iteration hits its cap.
        strict_convergence: bool,
    },
    Simulate {
        simulation: SimulationConfig,
    },
    Montecarlo {
        /// Settings shared by every cell; `n` and `t` come from `cells`.
        simulation: SimulationConfig,
        cells: Vec<(usize, usize)>,
        estimation: DmdfmConfig,
        keep_estimates: bool,
    },
    Forecast {
        /// Observed panel whose last `horizon` periods are held out; a
        /// simulated panel when absent.
        input: Option<PathBuf>,
        simulation: SimulationConfig,
        estimation: DmdfmConfig,
        horizon: usize,
        error_factor_path: ErrorFactorPath,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub job: Job,
}

impl RunManifest {
    pub fn new(seed: u64, job: Job) -> Self {
        Self {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            job,
        }
    }

    pub fn command(&self) -> &'static str {
        match self.job {
            Job::Estimate { .. } => "estimate",
            Job::Simulate { .. } => "simulate",
            Job::Montecarlo { .. } => "montecarlo",
            Job::Forecast { .. } => "forecast",
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let manifest: Self = io::read_json(path)
            .map_err(|e| CliError::new(e.category, "BadManifest", e.message))?;
        if manifest.tool != TOOL {
            return Err(CliError::new(
                crate::error::Category::Data,
                "BadManifest",
                format_args!("manifest was written by `{}`", manifest.tool),
            ));
        }
        if manifest.version != env!("CARGO_PKG_VERSION") {
            log::warn!(
                "manifest version {} differs from {}; outputs may differ",
                manifest.version,
                env!("CARGO_PKG_VERSION")
            );
        }
        Ok(manifest)
    }
}
