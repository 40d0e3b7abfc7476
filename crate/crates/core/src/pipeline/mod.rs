//! The alternating estimation procedure:
//!
//! 1. principal components of the stacked regressors give the factor scores `F`;
//! 2. first-difference GMM of `Y` on `(Y_-1, F)`;
//! 3. principal components of the level residuals `u = Y - rho Y_-1 - F beta`
//!    give the interactive effect `mu_i + G_t' Gamma_i`;
//! 4. GMM again with the interactive effect removed from the response.
//!
//! Steps 2-4 repeat until the coefficients settle. The factor counts `r` and
//! `s` are chosen on the first pass and then held fixed.

mod diagnostics;
mod forecast;

pub use diagnostics::{residual_diagnostics, DiagnosticThresholds, IndividualDiagnostics, ResidualReport};
pub use forecast::{forecast, forecast_with, rolling_forecast, ErrorFactorPath, ForecastOptions};

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::{
    pca, select_r_pooled, select_r_regressors, select_r_scree, select_s_errors, FactorDecomposition,
    SelectionCriterion, SelectionReport,
};
use crate::gmm::{
    build_instruments, gmm_solve, two_step_from, FactorInstruments, GmmEstimate, GmmProblem,
    GmmSummary, InstrumentOptions, WeightPattern,
};
use crate::math;
use crate::panel::PanelDataset;

/// Periods after the base period up to which every available lag is used
/// under [`LagDepth::Auto`].
const AUTO_UNBOUNDED_PERIODS: usize = 8;
/// Lag cap applied by [`LagDepth::Auto`] on longer panels.
const AUTO_LAG_DEPTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GmmSteps {
    One,
    #[default]
    Two,
}

/// How the regressor factor count is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RSelection {
    /// Cumulative variance share of per-period decompositions; the binding
    /// (largest) count across periods wins.
    #[default]
    PerPeriod,
    /// Cumulative variance share of the pooled decomposition.
    Pooled,
    /// Largest drop in the pooled eigenvalue spectrum.
    Scree,
}

/// Cap on the number of response lags per instrument block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagDepth {
    /// All lags for short panels, the most recent four otherwise.
    #[default]
    Auto,
    Unbounded,
    Max(usize),
}

impl LagDepth {
    /// Concrete cap for a panel with `n_periods` observed periods.
    pub fn resolve(self, n_periods: usize) -> Option<usize> {
        match self {
            LagDepth::Auto if n_periods.saturating_sub(1) <= AUTO_UNBOUNDED_PERIODS => None,
            LagDepth::Auto => Some(AUTO_LAG_DEPTH),
            LagDepth::Unbounded => None,
            LagDepth::Max(d) => Some(d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmdfmConfig {
    pub variance_threshold: f64,
    pub kmax_r: usize,
    pub kmax_s: usize,
    pub r_selection: RSelection,
    pub s_criterion: SelectionCriterion,
    pub gmm_steps: GmmSteps,
    pub max_lag_depth: LagDepth,
    pub factor_instruments: FactorInstruments,
    pub weight_pattern: WeightPattern,
    pub max_outer_iterations: usize,
    pub convergence_tol: f64,
    /// End the iteration, keeping the previous iterate, when the GMM
    /// objective rises between passes.
    pub stop_on_objective_increase: bool,
    /// Use this many regressor factors instead of selecting.
    pub force_r: Option<usize>,
    /// Use this many error factors instead of selecting.
    pub force_s: Option<usize>,
    /// Hold the lag coefficient at this value instead of estimating it.
    pub fixed_lag: Option<f64>,
}

impl Default for DmdfmConfig {
    fn default() -> Self {
        Self {
            variance_threshold: 0.8,
            kmax_r: 4,
            kmax_s: 4,
            r_selection: RSelection::default(),
            s_criterion: SelectionCriterion::Icp1,
            gmm_steps: GmmSteps::default(),
            max_lag_depth: LagDepth::default(),
            factor_instruments: FactorInstruments::default(),
            weight_pattern: WeightPattern::default(),
            max_outer_iterations: 10,
            convergence_tol: 1e-6,
            stop_on_objective_increase: true,
            force_r: None,
            force_s: None,
            fixed_lag: None,
        }
    }
}

impl DmdfmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !(self.variance_threshold > 0.0 && self.variance_threshold <= 1.0) {
            return bad("variance_threshold must lie in (0, 1]");
        }
        if !(self.convergence_tol > 0.0) {
            return bad("convergence_tol must be positive");
        }
        if self.max_outer_iterations == 0 {
            return bad("max_outer_iterations must be at least 1");
        }
        if self.kmax_r == 0 {
            return bad("kmax_r must be at least 1");
        }
        if !matches!(self.s_criterion, SelectionCriterion::Pcp1 | SelectionCriterion::Icp1) {
            return bad("s_criterion must be pcp1 or icp1");
        }
        if self.max_lag_depth == LagDepth::Max(0) && self.fixed_lag.is_none() {
            return bad("max_lag_depth must be at least 1 unless fixed_lag is set");
        }
        if self.fixed_lag.is_some_and(|v| !v.is_finite()) {
            return bad("fixed_lag must be finite");
        }
        Ok(())
    }
}

/// Why the outer iteration ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Coefficient change fell below the tolerance.
    Converged,
    /// The GMM objective rose; the previous iterate was kept.
    ObjectiveIncrease,
    /// `max_outer_iterations` was reached without convergence.
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub r_selection: SelectionReport,
    pub s_selection: SelectionReport,
    /// GMM objective of every accepted iterate, first stage first.
    pub objective_trace: Vec<f64>,
    /// Coefficients `(rho, beta_f)` of every accepted iterate.
    pub coefficient_trace: Vec<Vec<f64>>,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub moment_count: usize,
    pub max_lag_depth: Option<usize>,
}

impl FitDiagnostics {
    pub fn converged(&self) -> bool {
        self.stop_reason != StopReason::IterationCap
    }
}

/// A completed fit.
///
/// Level quantities (`interactive_term`, `fitted`, `residuals`,
/// `first_stage_residuals`) are `N x (T - 1)` and cover periods `1..T`;
/// period 0 only serves as the first lag.
#[derive(Debug, Clone)]
pub struct DmdfmFit {
    pub config: DmdfmConfig,
    /// Pooled decomposition of the stacked regressors; scores are `F`.
    pub regressor_factors: FactorDecomposition,
    /// Decomposition of the transposed level residuals: means are `mu_i`,
    /// scores are `G_t`, loadings are `Gamma_i`.
    pub error_factors: FactorDecomposition,
    pub beta_l: f64,
    pub beta_f: Vec<f64>,
    pub interactive_term: DMatrix<f64>,
    pub fitted: DMatrix<f64>,
    pub residuals: DMatrix<f64>,
    pub first_stage_residuals: DMatrix<f64>,
    pub first_stage: GmmEstimate,
    pub gmm: GmmEstimate,
    pub diagnostics: FitDiagnostics,
    pub n_periods: usize,
}

impl DmdfmFit {
    pub fn r(&self) -> usize {
        self.beta_f.len()
    }

    pub fn s(&self) -> usize {
        self.error_factors.n_factors()
    }

    /// `(beta_l, beta_f...)`.
    pub fn coefficients(&self) -> Vec<f64> {
        core::iter::once(self.beta_l).chain(self.beta_f.iter().copied()).collect()
    }

    /// `N x T` regressor factor scores for factor `k`.
    pub fn factor_scores_matrix(&self, k: usize) -> DMatrix<f64> {
        let t = self.n_periods;
        let n = self.regressor_factors.scores.nrows() / t;
        DMatrix::from_fn(n, t, |i, s| self.regressor_factors.scores[(i * t + s, k)])
    }

    /// `F_it' beta_f` as `N x T`.
    pub fn factor_contribution(&self) -> DMatrix<f64> {
        let t = self.n_periods;
        let scores = &self.regressor_factors.scores;
        let n = scores.nrows() / t;
        let beta = DVector::from_column_slice(&self.beta_f);
        let stacked = scores * beta;
        DMatrix::from_fn(n, t, |i, s| stacked[i * t + s])
    }

    pub fn summary(&self) -> FitSummary {
        FitSummary {
            beta_l: self.beta_l,
            beta_f: self.beta_f.clone(),
            r: self.r(),
            s: self.s(),
            gmm: self.gmm.summary(),
            first_stage: self.first_stage.summary(),
            diagnostics: self.diagnostics.clone(),
            config: self.config.clone(),
        }
    }
}

/// Serializable digest of a [`DmdfmFit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub beta_l: f64,
    pub beta_f: Vec<f64>,
    pub r: usize,
    pub s: usize,
    pub gmm: GmmSummary,
    pub first_stage: GmmSummary,
    pub diagnostics: FitDiagnostics,
    pub config: DmdfmConfig,
}

fn select_r(data: &PanelDataset, config: &DmdfmConfig) -> Result<SelectionReport> {
    let kmax = config.kmax_r.min(data.n_regressors()).min(data.n_individuals());
    if kmax == 0 {
        return Err(Error::InvalidConfig("panel has no regressors".into()));
    }
    match config.r_selection {
        RSelection::PerPeriod => select_r_regressors(data, config.variance_threshold, kmax),
        RSelection::Pooled => select_r_pooled(data, config.variance_threshold, kmax),
        RSelection::Scree => select_r_scree(data, kmax),
    }
}

fn solve(problem: &GmmProblem, steps: GmmSteps) -> Result<GmmEstimate> {
    let first = gmm_solve(problem, problem.cached_one_step())?;
    match steps {
        GmmSteps::One => Ok(first),
        GmmSteps::Two => two_step_from(problem, first),
    }
}

/// `u_it = y_it - rho y_i,t-1 - F_it' beta` for `t = 1..T`, as `N x (T - 1)`.
fn level_residuals(y: &DMatrix<f64>, contribution: &DMatrix<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
    let (n, t) = y.shape();
    DMatrix::from_fn(n, t - 1, |i, s| {
        y[(i, s + 1)] - theta[0] * y[(i, s)] - contribution[(i, s + 1)]
    })
}

/// `F_it' beta` for stacked scores, as `N x T`.
fn contribution(scores: &DMatrix<f64>, theta: &DVector<f64>, n: usize, t: usize) -> DMatrix<f64> {
    let beta = theta.rows(1, theta.len() - 1);
    let stacked = scores * beta;
    DMatrix::from_fn(n, t, |i, s| stacked[i * t + s])
}

/// `mu_i + G_t' Gamma_i` as `N x (T - 1)` from a decomposition of `u'`.
fn interactive(decomp: &FactorDecomposition) -> DMatrix<f64> {
    decomp.fitted().transpose()
}

/// Estimates the model on a balanced panel.
///
/// Numerical failures of the GMM step are returned as errors; an outer
/// iteration that does not settle within `max_outer_iterations` still yields a
/// fit, flagged through [`FitDiagnostics::stop_reason`].
pub fn estimate(data: &PanelDataset, config: &DmdfmConfig) -> Result<DmdfmFit> {
    config.validate()?;
    let (n, t) = (data.n_individuals(), data.n_periods());
    if t < 4 {
        return Err(Error::TooFewPeriods {
            found: t,
            required: 4,
        });
    }

    // step 1: regressor factors
    let r_selection = select_r(data, config)?;
    let r = config.force_r.unwrap_or(r_selection.chosen_k);
    let regressor_factors = pca(data.x(), r)?;
    let scores = &regressor_factors.scores;

    let max_lag_depth = config.max_lag_depth.resolve(t);
    let options = InstrumentOptions {
        max_lag_depth,
        factor_instruments: config.factor_instruments,
        weight_pattern: config.weight_pattern,
    };
    let mut base = build_instruments(data, scores, &options)?;
    base.fixed_lag = config.fixed_lag;
    let y = data.y();

    // step 2: first-stage GMM
    let first_stage = solve(&base, config.gmm_steps)?;
    let first_stage_residuals = level_residuals(
        y,
        &contribution(scores, &first_stage.coefficients, n, t),
        &first_stage.coefficients,
    );

    // step 3 on the first pass fixes s
    let kmax_s = config.kmax_s.min(n).min(t - 1);
    let s_selection = select_s_errors(&first_stage_residuals, kmax_s, config.s_criterion)?;
    let s = match config.force_s {
        Some(s) if s > n.min(t - 1) => {
            return Err(Error::KTooLarge {
                k: s,
                max: n.min(t - 1),
            })
        }
        Some(s) => s,
        None => s_selection.chosen_k,
    };

    let mut current = first_stage.clone();
    let mut objective_trace = alloc::vec![current.objective_value];
    let mut coefficient_trace = alloc::vec![current.coefficients.iter().copied().collect::<Vec<_>>()];
    let mut stop_reason = StopReason::IterationCap;
    let mut iterations = 0;
    let mut u = first_stage_residuals.clone();

    for _ in 0..config.max_outer_iterations {
        // step 3: interactive effect from the current level residuals
        let error_factors = pca(&u.transpose(), s)?;
        let mut offset = DMatrix::zeros(n, t);
        offset.columns_mut(1, t - 1).copy_from(&interactive(&error_factors));
        // step 4: GMM with the interactive effect removed
        let problem = base.with_response(&(y - &offset))?;
        let next = solve(&problem, config.gmm_steps)?;
        iterations += 1;

        let previous = *objective_trace.last().expect("trace starts non-empty");
        if config.stop_on_objective_increase
            && iterations > 1
            && next.objective_value > previous + config.convergence_tol * previous.max(1.0) {
            stop_reason = StopReason::ObjectiveIncrease;
            break;
        }
        let change = (&next.coefficients - &current.coefficients).abs().max();
        objective_trace.push(next.objective_value);
        coefficient_trace.push(next.coefficients.iter().copied().collect());
        current = next;
        u = level_residuals(y, &contribution(scores, &current.coefficients, n, t), &current.coefficients);
        if change < config.convergence_tol {
            stop_reason = StopReason::Converged;
            break;
        }
    }
    if stop_reason == StopReason::IterationCap {
        log::warn!(
            "outer iteration stopped after {iterations} passes without reaching tolerance {}",
            config.convergence_tol
        );
    }

    // final interactive effect consistent with the reported coefficients
    let error_factors = pca(&u.transpose(), s)?;
    let interactive_term = interactive(&error_factors);
    let factor_part = contribution(scores, &current.coefficients, n, t);
    let fitted = DMatrix::from_fn(n, t - 1, |i, s| {
        current.coefficients[0] * y[(i, s)] + factor_part[(i, s + 1)] + interactive_term[(i, s)]
    });
    let residuals = DMatrix::from_fn(n, t - 1, |i, s| y[(i, s + 1)] - fitted[(i, s)]);

    let beta_l = current.coefficients[0];
    let beta_f = current.coefficients.iter().skip(1).copied().collect();
    Ok(DmdfmFit {
        config: config.clone(),
        regressor_factors,
        error_factors,
        beta_l,
        beta_f,
        interactive_term,
        fitted,
        residuals,
        first_stage_residuals,
        first_stage,
        gmm: current,
        diagnostics: FitDiagnostics {
            r_selection,
            s_selection,
            objective_trace,
            coefficient_trace,
            iterations,
            stop_reason,
            moment_count: base.moment_count,
            max_lag_depth,
        },
        n_periods: t,
    })
}

/// Least-squares map of fitted factor contributions onto reference factors:
/// regresses `F_est beta_est` on `[1, F_ref]` and returns the slopes, i.e. the
/// coefficient vector expressed in the reference coordinates.
///
/// Both score matrices are stacked `(N*T) x k`.
pub fn align_coefficients(
    estimated_scores: &DMatrix<f64>,
    beta: &[f64],
    reference: &DMatrix<f64>,
) -> Option<Vec<f64>> {
    if estimated_scores.nrows() != reference.nrows() || estimated_scores.ncols() != beta.len() {
        return None;
    }
    let target = estimated_scores * DVector::from_column_slice(beta);
    let k = reference.ncols();
    let design = DMatrix::from_fn(reference.nrows(), k + 1, |row, j| {
        if j == 0 {
            1.0
        } else {
            reference[(row, j - 1)]
        }
    });
    math::least_squares(&design, &target).map(|c| c.iter().skip(1).copied().collect())
}
