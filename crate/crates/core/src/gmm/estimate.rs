use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{GmmProblem, WeightPattern};
use crate::error::{Error, Result};
use crate::math;

/// Condition number (after diagonal scaling) above which the normal matrix
/// `X'Z A Z'X` is treated as singular.
const MAX_DESIGN_CONDITION: f64 = 1e12;

/// A GMM weighting matrix and whether it came from a pseudo-inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct Weight {
    pub matrix: DMatrix<f64>,
    pub regularized: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EstimateFlags {
    /// A pseudo-inverse was used for some weighting matrix.
    pub weight_regularized: bool,
    /// Two-step estimation fell back to the first-step coefficients.
    pub second_step_skipped: bool,
}

#[derive(Debug, Clone)]
pub struct GmmEstimate {
    /// `(rho, beta_f)`.
    pub coefficients: DVector<f64>,
    /// `N x B` differenced residuals.
    pub residuals: DMatrix<f64>,
    pub weight_used: DMatrix<f64>,
    /// `gbar' A gbar` with `gbar = N^-1 sum Z_i e_i`.
    pub objective_value: f64,
    /// Objective at the first step, for two-step estimates.
    pub first_step_objective: Option<f64>,
    /// Asymptotic covariance of the coefficients, when the design allows it.
    pub avar: Option<DMatrix<f64>>,
    pub moment_count: usize,
    pub flags: EstimateFlags,
    /// Scaled condition number of the normal matrix.
    pub design_condition: f64,
}

impl GmmEstimate {
    pub fn rho_hat(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn beta_f_hat(&self) -> Vec<f64> {
        self.coefficients.iter().skip(1).copied().collect()
    }

    /// Square roots of the `avar` diagonal.
    pub fn standard_errors(&self) -> Option<Vec<f64>> {
        self.avar
            .as_ref()
            .map(|v| (0..v.nrows()).map(|j| math::sqrt(v[(j, j)].max(0.0))).collect())
    }

    pub fn summary(&self) -> GmmSummary {
        GmmSummary {
            coefficients: self.coefficients.iter().copied().collect(),
            standard_errors: self.standard_errors(),
            objective_value: self.objective_value,
            first_step_objective: self.first_step_objective,
            moment_count: self.moment_count,
            flags: self.flags,
        }
    }
}

/// Serializable digest of a [`GmmEstimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmSummary {
    /// `(rho, beta_f...)`.
    pub coefficients: Vec<f64>,
    pub standard_errors: Option<Vec<f64>>,
    pub objective_value: f64,
    pub first_step_objective: Option<f64>,
    pub moment_count: usize,
    pub flags: EstimateFlags,
}

fn pattern_matrix(pattern: WeightPattern, blocks: usize) -> DMatrix<f64> {
    match pattern {
        WeightPattern::Identity => DMatrix::identity(blocks, blocks),
        WeightPattern::FirstDifference => DMatrix::from_fn(blocks, blocks, |a, b| {
            if a == b {
                2.0
            } else if a.abs_diff(b) == 1 {
                -1.0
            } else {
                0.0
            }
        }),
    }
}

/// `(N^-1 sum_i Z_i U Z_i')^-1`, or its pseudo-inverse when singular.
pub fn one_step_weight(problem: &GmmProblem) -> Weight {
    let n = problem.n_individuals();
    let l = problem.moment_count;
    let blocks = problem.n_blocks();
    if l == 0 {
        return Weight {
            matrix: DMatrix::zeros(0, 0),
            regularized: false,
        };
    }
    let u = pattern_matrix(problem.weight_pattern, blocks);
    // U = R R' so that sum Z U Z' = W W' with W = [Z_1 R, ..., Z_N R]
    let root = u
        .clone()
        .cholesky()
        .map(|c| c.l())
        .expect("difference pattern is positive definite");
    let mut stacked = DMatrix::zeros(l, n * blocks);
    for (i, z) in problem.instruments.iter().enumerate() {
        stacked.columns_mut(i * blocks, blocks).copy_from(&(z * &root));
    }
    let s = math::symmetrize(&stacked * stacked.transpose() / n as f64);
    let (matrix, regularized) = math::psd_inverse(&s);
    if regularized {
        log::warn!("one-step GMM weight is singular; using the pseudo-inverse");
    }
    Weight {
        matrix,
        regularized,
    }
}

/// `N^-1 sum_i Z_i X_i` and `N^-1 sum_i Z_i dy_i` over the free coefficients.
fn cross_moments(problem: &GmmProblem) -> (DMatrix<f64>, DVector<f64>) {
    let n = problem.n_individuals();
    let k = problem.n_coefficients() - usize::from(problem.fixed_lag.is_some());
    let mut zx = DMatrix::zeros(problem.moment_count, k);
    let mut zy = DVector::zeros(problem.moment_count);
    for (i, z) in problem.instruments.iter().enumerate() {
        zx += z * problem.free_regressors(i);
        zy += z * problem.free_response(i);
    }
    (zx / n as f64, zy / n as f64)
}

/// Full `(rho, beta_f)` vector from the free coefficients.
fn embed(problem: &GmmProblem, free: DVector<f64>) -> DVector<f64> {
    match problem.fixed_lag {
        None => free,
        Some(rho) => {
            let mut full = DVector::zeros(problem.n_coefficients());
            full[0] = rho;
            full.rows_mut(1, free.len()).copy_from(&free);
            full
        }
    }
}

fn scaled_condition(m: &DMatrix<f64>) -> f64 {
    let k = m.nrows();
    let mut d = DVector::zeros(k);
    for j in 0..k {
        let v = m[(j, j)];
        if v <= 0.0 {
            return f64::INFINITY;
        }
        d[j] = 1.0 / math::sqrt(v);
    }
    let scaled = DMatrix::from_fn(k, k, |a, b| m[(a, b)] * d[a] * d[b]);
    math::condition_number_sym(&scaled)
}

/// Mean sample moment `N^-1 sum_i Z_i e_i` for an `N x B` residual matrix.
pub(crate) fn mean_moment(problem: &GmmProblem, residuals: &DMatrix<f64>) -> DVector<f64> {
    let mut g = DVector::zeros(problem.moment_count);
    for (i, z) in problem.instruments.iter().enumerate() {
        g += z * residuals.row(i).transpose();
    }
    g / problem.n_individuals() as f64
}

/// Objective `gbar' A gbar` at an arbitrary coefficient vector `(rho, beta_f)`.
pub fn gmm_objective(problem: &GmmProblem, weight: &DMatrix<f64>, theta: &[f64]) -> f64 {
    let theta = DVector::from_column_slice(theta);
    let mut e = problem.dy.clone();
    for i in 0..problem.n_individuals() {
        let fit = problem.regressors(i) * &theta;
        for (b, v) in fit.iter().enumerate() {
            e[(i, b)] -= v;
        }
    }
    let g = mean_moment(problem, &e);
    (g.transpose() * weight * &g)[(0, 0)]
}

/// Closed-form GMM estimate for a given weighting matrix:
/// `theta = (X'Z A Z'X)^-1 X'Z A Z'dy`.
pub fn gmm_solve(problem: &GmmProblem, weight: &Weight) -> Result<GmmEstimate> {
    let l = problem.moment_count;
    if weight.matrix.shape() != (l, l) {
        return Err(Error::DimensionMismatch(alloc::format!(
            "weight is {:?}, expected {l} x {l}",
            weight.matrix.shape()
        )));
    }
    let (zx, zy) = cross_moments(problem);
    let azx = &weight.matrix * &zx;
    let normal = math::symmetrize(zx.transpose() * &azx);
    let condition = scaled_condition(&normal);
    if !(condition <= MAX_DESIGN_CONDITION) {
        return Err(Error::RankDeficientDesign {
            condition_number: condition,
        });
    }
    let rhs = azx.transpose() * &zy;
    let free = if normal.nrows() == 0 {
        DVector::zeros(0)
    } else {
        normal
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or(Error::RankDeficientDesign {
                condition_number: condition,
            })?
    };
    let coefficients = embed(problem, free);

    let n = problem.n_individuals();
    let mut residuals = problem.dy.clone();
    for i in 0..n {
        let fitted = problem.regressors(i) * &coefficients;
        for (b, v) in fitted.iter().enumerate() {
            residuals[(i, b)] -= v;
        }
    }
    let g = mean_moment(problem, &residuals);
    let objective_value = (g.transpose() * &weight.matrix * &g)[(0, 0)].max(0.0);
    let mut estimate = GmmEstimate {
        coefficients,
        residuals,
        weight_used: weight.matrix.clone(),
        objective_value,
        first_step_objective: None,
        avar: None,
        moment_count: l,
        flags: EstimateFlags {
            weight_regularized: weight.regularized,
            second_step_skipped: false,
        },
        design_condition: condition,
    };
    estimate.avar = variance_with(problem, &estimate.residuals, &zx).ok();
    Ok(estimate)
}

/// `(N^-1 sum_i Z_i e_i e_i' Z_i')^-1` from first-step residuals, or `None`
/// when the residuals vanish.
fn residual_weight(problem: &GmmProblem, residuals: &DMatrix<f64>) -> Option<Weight> {
    let scale = problem.dy.iter().fold(1.0_f64, |a, v| a.max(math::abs(*v)));
    let res_max = residuals.iter().fold(0.0_f64, |a, v| a.max(math::abs(*v)));
    if res_max <= 1e-12 * scale {
        return None;
    }
    let n = problem.n_individuals();
    let mut stacked = DMatrix::zeros(problem.moment_count, n);
    for (i, z) in problem.instruments.iter().enumerate() {
        stacked.set_column(i, &(z * residuals.row(i).transpose()));
    }
    let v = math::symmetrize(&stacked * stacked.transpose() / n as f64);
    let (matrix, regularized) = math::psd_inverse(&v);
    Some(Weight {
        matrix,
        regularized,
    })
}

/// Two-step GMM starting from the problem's one-step weight.
pub fn two_step(problem: &GmmProblem) -> Result<GmmEstimate> {
    let first = gmm_solve(problem, problem.cached_one_step())?;
    two_step_from(problem, first)
}

/// Second step given a first-step estimate on the same problem.
pub fn two_step_from(problem: &GmmProblem, first: GmmEstimate) -> Result<GmmEstimate> {
    let skip = |mut est: GmmEstimate| {
        est.first_step_objective = Some(est.objective_value);
        est.flags.weight_regularized = true;
        est.flags.second_step_skipped = true;
        est
    };
    let Some(weight) = residual_weight(problem, &first.residuals) else {
        return Ok(skip(first));
    };
    match gmm_solve(problem, &weight) {
        Ok(mut second) => {
            second.first_step_objective = Some(first.objective_value);
            second.flags.weight_regularized |= first.flags.weight_regularized;
            Ok(second)
        }
        Err(Error::RankDeficientDesign { condition_number }) => {
            log::warn!(
                "second-step design singular (condition {condition_number:e}); keeping first step"
            );
            Ok(skip(first))
        }
        Err(e) => Err(e),
    }
}

/// `sigma2 / N * (Zx' A_O Zx)^-1` with the problem's one-step weight `A_O`,
/// where `sigma2 = |d eps|^2 / (2 N B)`.
pub fn asymptotic_variance(estimate: &GmmEstimate, problem: &GmmProblem) -> Result<DMatrix<f64>> {
    let (zx, _) = cross_moments(problem);
    variance_with(problem, &estimate.residuals, &zx)
}

fn variance_with(
    problem: &GmmProblem,
    residuals: &DMatrix<f64>,
    zx: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = problem.n_individuals();
    let count = residuals.len();
    if count == 0 || residuals.shape() != problem.dy.shape() {
        return Err(Error::DimensionMismatch("residuals do not match the problem".into()));
    }
    let sigma2 = math::frobenius_sq(residuals) / (2.0 * count as f64);
    let a = &problem.cached_one_step().matrix;
    let normal = math::symmetrize(zx.transpose() * a * zx);
    let condition = scaled_condition(&normal);
    if !(condition <= MAX_DESIGN_CONDITION) {
        return Err(Error::RankDeficientDesign {
            condition_number: condition,
        });
    }
    let inv = if normal.nrows() == 0 {
        DMatrix::zeros(0, 0)
    } else {
        normal.try_inverse().ok_or(Error::RankDeficientDesign {
            condition_number: condition,
        })?
    };
    let free = math::symmetrize(inv * (sigma2 / n as f64));
    Ok(match problem.fixed_lag {
        None => free,
        Some(_) => {
            let k = problem.n_coefficients();
            let mut full = DMatrix::zeros(k, k);
            full.view_mut((1, 1), (k - 1, k - 1)).copy_from(&free);
            full
        }
    })
}
