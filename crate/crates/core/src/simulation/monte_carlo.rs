use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{generate_panel, SimulatedPanel, SimulationConfig};
use crate::error::Result;
use crate::math;
use crate::pipeline::{align_coefficients, estimate, DmdfmConfig, StopReason};

/// Share of failed replications above which a cell is flagged invalid.
const MAX_FAILURE_RATE: f64 = 0.10;

/// Anything that turns a simulated panel into `(beta_l1, beta_f1, beta_f2)`.
///
/// Returning `Err` marks the replication as failed; the message is kept for
/// reporting.
pub trait Estimator: Sync {
    fn estimate(&self, panel: &SimulatedPanel) -> core::result::Result<[f64; 3], String>;
}

/// The full pipeline, with factor coefficients mapped into the coordinates of
/// the true factors (least squares of `F_hat beta_hat` on `[1, F]`).
#[derive(Debug, Clone, Default)]
pub struct DmdfmEstimator {
    pub config: DmdfmConfig,
}

impl Estimator for DmdfmEstimator {
    fn estimate(&self, panel: &SimulatedPanel) -> core::result::Result<[f64; 3], String> {
        let fit = estimate(&panel.data, &self.config).map_err(|e| e.to_string())?;
        if fit.diagnostics.stop_reason == StopReason::IterationCap {
            return Err("outer iteration did not converge".into());
        }
        let beta = align_coefficients(&fit.regressor_factors.scores, &fit.beta_f, &panel.truth.factors)
            .ok_or_else(|| String::from("could not align factor coefficients"))?;
        Ok([fit.beta_l, beta[0], beta[1]])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ReplicationOutcome {
    Estimate([f64; 3]),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCell {
    pub n: usize,
    pub t: usize,
    pub reps: usize,
    pub failures: usize,
    pub failure_rate: f64,
    /// `false` when more than 10% of replications failed.
    pub valid: bool,
    /// Mean error `(beta_l1, beta_f1, beta_f2)` over successful replications.
    pub bias: [f64; 3],
    pub rmse: [f64; 3],
    /// Per-replication estimates, in replication order, when retained.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimates: Option<Vec<Option<[f64; 3]>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub cells: Vec<McCell>,
}

/// One replication of a cell.
pub fn run_replication<E: Estimator + ?Sized>(
    config: &SimulationConfig,
    rep_index: usize,
    estimator: &E,
) -> ReplicationOutcome {
    match generate_panel(config, rep_index) {
        Ok(panel) => match estimator.estimate(&panel) {
            Ok(est) if est.iter().all(|v| v.is_finite()) => ReplicationOutcome::Estimate(est),
            Ok(_) => ReplicationOutcome::Failed("non-finite estimate".into()),
            Err(msg) => ReplicationOutcome::Failed(msg),
        },
        Err(e) => ReplicationOutcome::Failed(e.to_string()),
    }
}

/// Bias and RMSE from outcomes listed in replication order.
pub fn aggregate_cell(
    config: &SimulationConfig,
    outcomes: &[ReplicationOutcome],
    keep_estimates: bool,
) -> McCell {
    let truth = config.true_coefficients();
    let mut sum = [0.0; 3];
    let mut sq = [0.0; 3];
    let mut ok = 0usize;
    for outcome in outcomes {
        if let ReplicationOutcome::Estimate(est) = outcome {
            ok += 1;
            for j in 0..3 {
                let e = est[j] - truth[j];
                sum[j] += e;
                sq[j] += e * e;
            }
        }
    }
    let failures = outcomes.len() - ok;
    let failure_rate = if outcomes.is_empty() {
        0.0
    } else {
        failures as f64 / outcomes.len() as f64
    };
    let (bias, rmse) = if ok == 0 {
        ([f64::NAN; 3], [f64::NAN; 3])
    } else {
        let m = ok as f64;
        (sum.map(|s| s / m), sq.map(|s| math::sqrt(s / m)))
    };
    let estimates = keep_estimates.then(|| {
        outcomes
            .iter()
            .map(|o| match o {
                ReplicationOutcome::Estimate(e) => Some(*e),
                ReplicationOutcome::Failed(_) => None,
            })
            .collect()
    });
    McCell {
        n: config.n,
        t: config.t,
        reps: outcomes.len(),
        failures,
        failure_rate,
        valid: ok > 0 && failure_rate <= MAX_FAILURE_RATE,
        bias,
        rmse,
        estimates,
    }
}

/// Sequential Monte Carlo over a grid of cells.
pub fn run_monte_carlo<E: Estimator + ?Sized>(
    grid: &[SimulationConfig],
    estimator: &E,
    keep_estimates: bool,
) -> Result<McReport> {
    let mut cells = Vec::with_capacity(grid.len());
    for config in grid {
        config.validate()?;
        let outcomes: Vec<_> = (0..config.reps)
            .map(|rep| run_replication(config, rep, estimator))
            .collect();
        cells.push(aggregate_cell(config, &outcomes, keep_estimates));
    }
    Ok(McReport { cells })
}

/// One config per `(n, t)` cell, sharing every other setting of `base`.
pub fn cell_grid(base: &SimulationConfig, cells: &[(usize, usize)]) -> Vec<SimulationConfig> {
    cells
        .iter()
        .map(|&(n, t)| SimulationConfig {
            n,
            t,
            ..base.clone()
        })
        .collect()
}
