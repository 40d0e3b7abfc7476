use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{generate_panel, SimulationConfig};
use crate::error::{Error, Result};
use crate::math;
use crate::pipeline::{estimate, rolling_forecast, DmdfmConfig, ForecastOptions};
use crate::rng::substream;

/// Substream for picking the individual trajectories to report.
const SAMPLE_STREAM: u64 = 100;
/// Individual trajectories reported alongside the cross-sectional average.
const SAMPLED_INDIVIDUALS: usize = 5;

/// Rolling one-step forecasts against the simulated truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastTable {
    /// Panel period index of each forecast column (the training sample
    /// occupies `0..t`).
    pub periods: Vec<usize>,
    /// `N x horizon`, row-major by individual.
    pub y_true: Vec<Vec<f64>>,
    pub y_pred: Vec<Vec<f64>>,
    /// Cross-individual averages per forecast period.
    pub average_true: Vec<f64>,
    pub average_pred: Vec<f64>,
    /// Individuals whose trajectories are singled out for plotting.
    pub sampled_individuals: Vec<usize>,
    pub mae: f64,
    /// Mean absolute percentage error over cells with non-zero truth, in percent.
    pub mape: f64,
    /// Correlation of the average predicted and average true series;
    /// `None` when either is constant.
    pub average_correlation: Option<f64>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn column_means(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows() as f64;
    m.column_iter().map(|c| c.sum() / n).collect()
}

/// Fits on the first `config.t` periods of a panel of `config.t + horizon`
/// periods and forecasts the held-out periods one step at a time.
pub fn run_forecast_experiment(
    config: &SimulationConfig,
    horizon: usize,
    rep_index: usize,
    fit_config: &DmdfmConfig,
    options: &ForecastOptions,
) -> Result<ForecastTable> {
    if horizon == 0 {
        return Err(Error::InvalidConfig("horizon must be at least 1".into()));
    }
    let full = SimulationConfig {
        t: config.t + horizon,
        ..config.clone()
    };
    let sim = generate_panel(&full, rep_index)?;
    let training = sim.data.head(config.t)?;
    let fit = estimate(&training, fit_config)?;
    let pred = rolling_forecast(&fit, &sim.data, horizon, options)?;
    let truth = sim.data.y().columns(config.t, horizon).into_owned();

    let errors = &pred - &truth;
    let mae = errors.iter().map(|e| math::abs(*e)).sum::<f64>() / errors.len() as f64;
    let (mut ape, mut count) = (0.0, 0usize);
    for (e, y) in errors.iter().zip(truth.iter()) {
        if *y != 0.0 {
            ape += math::abs(e / y);
            count += 1;
        }
    }
    let mape = if count == 0 { 0.0 } else { 100.0 * ape / count as f64 };
    let average_true = column_means(&truth);
    let average_pred = column_means(&pred);
    let average_correlation = math::correlation(&average_true, &average_pred);

    let n = config.n;
    let mut rng = substream(config.seed, rep_index as u64, SAMPLE_STREAM);
    let mut sampled_individuals = index::sample(&mut rng, n, SAMPLED_INDIVIDUALS.min(n)).into_vec();
    sampled_individuals.sort_unstable();

    Ok(ForecastTable {
        periods: (config.t..config.t + horizon).collect(),
        y_true: rows(&truth),
        y_pred: rows(&pred),
        average_true,
        average_pred,
        sampled_individuals,
        mae,
        mape,
        average_correlation,
    })
}
