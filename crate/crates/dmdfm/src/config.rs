//! Structured configuration file (TOML): one section per module, every key
//! optional. Command-line flags override file values, which override defaults.
//!
//! ```toml
//! seed = 7
//!
//! [estimation]
//! variance_threshold = 0.8
//! gmm_steps = "two"
//!
//! [simulation]
//! burn_in = 15
//!
//! [montecarlo]
//! cells = ["20x5", "100x10"]
//! reps = 200
//!
//! [forecast]
//! horizon = 20
//! error_factor_path = "hold"
//! ```

use std::fs;
use std::path::Path;

use dmdfm_core::pipeline::ErrorFactorPath;
use dmdfm_core::simulation::SimulationConfig;
use dmdfm_core::DmdfmConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Desk-scale Monte Carlo grid and replication count.
pub const DESK_CELLS: [(usize, usize); 4] = [(20, 5), (50, 5), (100, 10), (200, 10)];
pub const DESK_REPS: usize = 200;
/// The full ten-cell grid with 2000 replications, behind `--full`.
pub const FULL_CELLS: [(usize, usize); 10] = [
    (20, 5),
    (50, 5),
    (50, 10),
    (100, 5),
    (100, 10),
    (100, 20),
    (200, 5),
    (200, 10),
    (200, 20),
    (200, 50),
];
pub const FULL_REPS: usize = 2000;
pub const DEFAULT_HORIZON: usize = 20;
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloSection {
    /// Cells as `NxT` strings; empty selects the desk grid.
    pub cells: Vec<String>,
    pub reps: Option<usize>,
    /// Keep per-replication estimates in the JSON report.
    pub keep_estimates: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSection {
    pub horizon: usize,
    pub error_factor_path: ErrorFactorPath,
}

impl Default for ForecastSection {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
            error_factor_path: ErrorFactorPath::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub estimation: DmdfmConfig,
    pub simulation: SimulationConfig,
    pub montecarlo: MonteCarloSection,
    pub forecast: ForecastSection,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::new(crate::error::Category::Usage, "BadConfig", e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }
}

/// Parses `AxB[,CxD...]` into `(n, t)` pairs.
pub fn parse_cells(spec: &str) -> Result<Vec<(usize, usize)>> {
    spec.split(',')
        .map(|cell| {
            let cell = cell.trim();
            let (n, t) = cell
                .split_once(['x', 'X'])
                .ok_or_else(|| CliError::usage(format_args!("cell `{cell}` is not of the form NxT")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::usage(format_args!("cell `{cell}` is not of the form NxT")))
            };
            Ok((parse(n)?, parse(t)?))
        })
        .collect()
}
