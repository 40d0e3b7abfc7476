//! Executes a resolved [`Job`] into an output directory.

use std::fs;
use std::path::{Path, PathBuf};

use dmdfm_core::math;
use dmdfm_core::pipeline::{rolling_forecast, ForecastOptions, StopReason};
use dmdfm_core::simulation::{
    cell_grid, generate_panel, run_forecast_experiment, DmdfmEstimator, SimulationConfig,
};
use dmdfm_core::{estimate, DmdfmConfig};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Category, CliError, Result};
use crate::io;
use crate::manifest::{Job, RunManifest, MANIFEST_FILE};
use crate::parallel::run_monte_carlo_parallel;

/// Output directory that refuses to overwrite the run's input file.
struct Outputs {
    dir: PathBuf,
    input: Option<PathBuf>,
}

impl Outputs {
    fn create(dir: &Path, input: Option<&Path>) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let input = input.and_then(|p| fs::canonicalize(p).ok());
        Ok(Self {
            dir: dir.to_path_buf(),
            input,
        })
    }

    fn path(&self, name: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let (Some(input), Ok(target)) = (&self.input, fs::canonicalize(&path)) {
            if *input == target {
                return Err(CliError::usage(format_args!(
                    "output {} would overwrite the input file",
                    path.display()
                )));
            }
        }
        Ok(path)
    }
}

/// Files written by a run, relative to the output directory.
pub fn artifact_names(job: &Job) -> &'static [&'static str] {
    match job {
        Job::Estimate { .. } => &["fit.json", "fitted.csv", "residuals.csv", "scores.csv", MANIFEST_FILE],
        Job::Simulate { .. } => &["panel.csv", "truth.json", "factors.csv", MANIFEST_FILE],
        Job::Montecarlo { .. } => &["montecarlo.csv", "montecarlo.json", MANIFEST_FILE],
        Job::Forecast { .. } => &["forecast.csv", "forecast.json", MANIFEST_FILE],
    }
}

/// Runs `manifest` and writes its artifacts plus the manifest itself.
/// `jobs` only affects the Monte Carlo thread count, never the output.
pub fn execute(manifest: &RunManifest, output_dir: &Path, jobs: usize) -> Result<()> {
    let input = match &manifest.job {
        Job::Estimate { input, .. } => Some(input.as_path()),
        Job::Forecast { input, .. } => input.as_deref(),
        _ => None,
    };
    let out = Outputs::create(output_dir, input)?;
    let status = match &manifest.job {
        Job::Estimate {
            input,
            estimation,
            strict_convergence,
        } => run_estimate(&out, input, estimation, *strict_convergence),
        Job::Simulate { simulation } => run_simulate(&out, simulation),
        Job::Montecarlo {
            simulation,
            cells,
            estimation,
            keep_estimates,
        } => run_montecarlo(&out, simulation, cells, estimation, *keep_estimates, jobs),
        Job::Forecast {
            input,
            simulation,
            estimation,
            horizon,
            error_factor_path,
        } => {
            let options = ForecastOptions {
                error_factor_path: *error_factor_path,
            };
            match input {
                Some(path) => run_forecast_observed(&out, path, estimation, *horizon, &options),
                None => run_forecast_simulated(&out, simulation, estimation, *horizon, &options),
            }
        }
    };
    // the manifest is written even when the run ends in a numerical failure
    // after producing its files, so the failure can be replayed
    match &status {
        Ok(()) => io::write_json(&out.path(MANIFEST_FILE)?, manifest)?,
        Err(e) if e.category == Category::Numerical => {
            io::write_json(&out.path(MANIFEST_FILE)?, manifest)?
        }
        Err(_) => {}
    }
    status
}

fn run_estimate(out: &Outputs, input: &Path, config: &DmdfmConfig, strict: bool) -> Result<()> {
    let data = io::read_panel(input)?;
    let fit = estimate(&data, config)?;
    io::write_json(&out.path("fit.json")?, &fit.summary())?;
    io::write_file(&out.path("fitted.csv")?, |w| {
        io::write_period_matrix(w, &data, &fit.fitted, "fitted", 1)
    })?;
    io::write_file(&out.path("residuals.csv")?, |w| {
        io::write_period_matrix(w, &data, &fit.residuals, "residual", 1)
    })?;
    io::write_file(&out.path("scores.csv")?, |w| {
        io::write_stacked_factors(w, &data, &fit.regressor_factors.scores)
    })?;
    let d = &fit.diagnostics;
    if d.stop_reason == StopReason::IterationCap {
        log::warn!("outer iteration reached its cap of {} passes", d.iterations);
        if strict {
            return Err(dmdfm_core::Error::NonConvergence {
                iterations: d.iterations,
            }
            .into());
        }
    }
    Ok(())
}

fn run_simulate(out: &Outputs, config: &SimulationConfig) -> Result<()> {
    let sim = generate_panel(config, 0)?;
    io::write_file(&out.path("panel.csv")?, |w| io::write_panel(w, &sim.data))?;
    io::write_file(&out.path("factors.csv")?, |w| {
        io::write_stacked_factors(w, &sim.data, &sim.truth.factors)
    })?;
    io::write_json(&out.path("truth.json")?, &sim.truth.summary())
}

fn run_montecarlo(
    out: &Outputs,
    base: &SimulationConfig,
    cells: &[(usize, usize)],
    config: &DmdfmConfig,
    keep_estimates: bool,
    jobs: usize,
) -> Result<()> {
    config.validate()?;
    let grid = cell_grid(base, cells);
    let estimator = DmdfmEstimator {
        config: config.clone(),
    };
    let report = run_monte_carlo_parallel(&grid, &estimator, keep_estimates, jobs)?;
    for cell in report.cells.iter().filter(|c| !c.valid) {
        log::warn!(
            "cell ({}, {}): {} of {} replications failed",
            cell.n,
            cell.t,
            cell.failures,
            cell.reps
        );
    }
    io::write_file(&out.path("montecarlo.csv")?, |w| io::write_mc_report(w, &report))?;
    io::write_json(&out.path("montecarlo.json")?, &report)
}

/// Accuracy summary stored next to a forecast table.
#[derive(Debug, Clone, PartialEq, Serialize)]
struct ForecastSummary {
    periods: Vec<String>,
    mae: f64,
    /// Percent, over cells with non-zero truth.
    mape: f64,
    average_true: Vec<f64>,
    average_pred: Vec<f64>,
    average_correlation: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    sampled_individuals: Vec<usize>,
}

fn column_means(m: &DMatrix<f64>) -> Vec<f64> {
    m.column_iter().map(|c| c.sum() / m.nrows() as f64).collect()
}

fn summarize(periods: Vec<String>, truth: &DMatrix<f64>, pred: &DMatrix<f64>) -> ForecastSummary {
    let errors = pred - truth;
    let mae = errors.iter().map(|e| e.abs()).sum::<f64>() / errors.len().max(1) as f64;
    let (mut ape, mut count) = (0.0, 0usize);
    for (e, y) in errors.iter().zip(truth.iter()) {
        if *y != 0.0 {
            ape += (e / y).abs();
            count += 1;
        }
    }
    let average_true = column_means(truth);
    let average_pred = column_means(pred);
    ForecastSummary {
        periods,
        mae,
        mape: if count == 0 { 0.0 } else { 100.0 * ape / count as f64 },
        average_correlation: math::correlation(&average_true, &average_pred),
        average_true,
        average_pred,
        sampled_individuals: Vec::new(),
    }
}

fn run_forecast_observed(
    out: &Outputs,
    input: &Path,
    config: &DmdfmConfig,
    horizon: usize,
    options: &ForecastOptions,
) -> Result<()> {
    if horizon == 0 {
        return Err(CliError::usage("horizon must be at least 1"));
    }
    let data = io::read_panel(input)?;
    let t = data.n_periods();
    if horizon >= t {
        return Err(dmdfm_core::Error::TooFewPeriods {
            found: t,
            required: horizon + 4,
        }
        .into());
    }
    let fit = estimate(&data.head(t - horizon)?, config)?;
    let pred = rolling_forecast(&fit, &data, horizon, options)?;
    let truth = data.y().columns(t - horizon, horizon).into_owned();
    let periods = data.period_ids()[t - horizon..].to_vec();
    io::write_file(&out.path("forecast.csv")?, |w| {
        io::write_forecast(w, data.individual_ids(), &periods, &truth, &pred)
    })?;
    io::write_json(&out.path("forecast.json")?, &summarize(periods, &truth, &pred))
}

fn run_forecast_simulated(
    out: &Outputs,
    simulation: &SimulationConfig,
    config: &DmdfmConfig,
    horizon: usize,
    options: &ForecastOptions,
) -> Result<()> {
    let table = run_forecast_experiment(simulation, horizon, 0, config, options)?;
    let to_matrix = |rows: &[Vec<f64>]| DMatrix::from_fn(rows.len(), horizon, |i, h| rows[i][h]);
    let (truth, pred) = (to_matrix(&table.y_true), to_matrix(&table.y_pred));
    let individuals: Vec<String> = (0..simulation.n).map(|i| i.to_string()).collect();
    let periods: Vec<String> = table.periods.iter().map(|p| p.to_string()).collect();
    io::write_file(&out.path("forecast.csv")?, |w| {
        io::write_forecast(w, &individuals, &periods, &truth, &pred)
    })?;
    let mut summary = summarize(periods, &truth, &pred);
    summary.sampled_individuals = table.sampled_individuals;
    io::write_json(&out.path("forecast.json")?, &summary)
}
