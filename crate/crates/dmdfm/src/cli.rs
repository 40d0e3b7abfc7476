//! Argument parsing and resolution of flags, config file and defaults into a
//! [`RunManifest`].

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{ArgAction, Parser, Subcommand};

use crate::config::{self, FileConfig};
use crate::error::{CliError, Result};
use crate::manifest::{Job, RunManifest};
use crate::run::execute;

#[derive(Debug, Parser)]
#[command(name = "dmdfm", version, about = "Dynamic mixed double factor model for panel data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML file with `[estimation]`, `[simulation]`, `[montecarlo]` and
    /// `[forecast]` sections.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Directory receiving every artifact and `run-manifest.json`.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub output_dir: PathBuf,

    /// Seed for every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for Monte Carlo replications (output does not depend on it).
    #[arg(long, global = true, value_name = "K")]
    pub jobs: Option<usize>,

    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    /// Only errors on stderr.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a long-format panel CSV (`individual,period,y,x1,...,xp`).
    Estimate {
        input: PathBuf,
        /// Treat an outer iteration that reaches its cap as a numerical failure.
        #[arg(long)]
        strict_convergence: bool,
    },
    /// Generate one panel from the simulation design.
    Simulate {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        t: Option<usize>,
    },
    /// Bias and RMSE of the estimator over a grid of panel sizes.
    Montecarlo {
        /// Cells as `NxT[,NxT...]`.
        #[arg(long, value_name = "AxB[,CxD...]")]
        cells: Option<String>,
        #[arg(long)]
        reps: Option<usize>,
        /// Single cell size, when `--cells` is not given.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        t: Option<usize>,
        /// The full ten-cell grid with 2000 replications.
        #[arg(long)]
        full: bool,
        /// Keep per-replication estimates in `montecarlo.json`.
        #[arg(long)]
        keep_estimates: bool,
    },
    /// Rolling one-step forecasts, on a panel CSV (last `horizon` periods held
    /// out) or on a simulated panel.
    Forecast {
        input: Option<PathBuf>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        t: Option<usize>,
    },
    /// Re-run the recipe stored in a `run-manifest.json`.
    Replay { manifest: PathBuf },
}

/// Combines flags, the config file and defaults into a manifest.
pub fn resolve(cli: &Cli) -> Result<RunManifest> {
    if let Command::Replay { manifest } = &cli.command {
        return RunManifest::load(manifest);
    }
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut simulation = file.simulation.clone();
    let seed = cli.seed.or(file.seed).unwrap_or(simulation.seed);
    simulation.seed = seed;
    let estimation = file.estimation.clone();
    estimation.validate()?;

    let job = match &cli.command {
        Command::Estimate {
            input,
            strict_convergence,
        } => Job::Estimate {
            input: input.clone(),
            estimation,
            strict_convergence: *strict_convergence,
        },
        Command::Simulate { n, t } => {
            simulation.n = n.unwrap_or(simulation.n);
            simulation.t = t.unwrap_or(simulation.t);
            simulation.reps = 1;
            simulation.validate()?;
            Job::Simulate { simulation }
        }
        Command::Montecarlo {
            cells,
            reps,
            n,
            t,
            full,
            keep_estimates,
        } => {
            let cells = if let Some(spec) = cells {
                config::parse_cells(spec)?
            } else if *full {
                config::FULL_CELLS.to_vec()
            } else if n.is_some() || t.is_some() {
                vec![(n.unwrap_or(simulation.n), t.unwrap_or(simulation.t))]
            } else if !file.montecarlo.cells.is_empty() {
                config::parse_cells(&file.montecarlo.cells.join(","))?
            } else {
                config::DESK_CELLS.to_vec()
            };
            let full_reps = full.then_some(config::FULL_REPS);
            simulation.reps = reps
                .or(full_reps)
                .or(file.montecarlo.reps)
                .unwrap_or(config::DESK_REPS);
            for &(n, t) in &cells {
                dmdfm_core::simulation::SimulationConfig { n, t, ..simulation.clone() }.validate()?;
            }
            Job::Montecarlo {
                simulation,
                cells,
                estimation,
                keep_estimates: *keep_estimates || file.montecarlo.keep_estimates,
            }
        }
        Command::Forecast { input, horizon, n, t } => {
            simulation.n = n.unwrap_or(simulation.n);
            simulation.t = t.unwrap_or(simulation.t);
            simulation.reps = 1;
            let horizon = horizon.unwrap_or(file.forecast.horizon);
            if horizon == 0 {
                return Err(CliError::usage("horizon must be at least 1"));
            }
            simulation.validate()?;
            Job::Forecast {
                input: input.clone(),
                simulation,
                estimation,
                horizon,
                error_factor_path: file.forecast.error_factor_path,
            }
        }
        Command::Replay { .. } => unreachable!("handled above"),
    };
    Ok(RunManifest::new(seed, job))
}

fn init_logging(cli: &Cli) {
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else {
        match cli.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            2 => log::LevelFilter::Debug,
            _ => log::LevelFilter::Trace,
        }
    };
    // a second initialisation (library callers, tests) keeps the first logger
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 1 for usage errors, 2 for data errors, 3 for numerical failures. Failures
/// print one `error kind=... message="..."` line on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = err.print();
                return 0;
            }
            let _ = err.print();
            let first = err.to_string();
            let first = first.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", CliError::usage(first).diagnostic_line());
            return 1;
        }
    };
    init_logging(&cli);
    let result = resolve(&cli).and_then(|manifest| {
        log::info!("running {}", manifest.command());
        execute(&manifest, &cli.output_dir, cli.jobs.unwrap_or_else(default_jobs))
    });
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("{}", err.diagnostic_line());
            err.exit_code()
        }
    }
}
