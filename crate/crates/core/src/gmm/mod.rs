//! First-difference GMM for the dynamic factor equation
//! `dY_it = rho * dY_i,t-1 + dF_it' beta + d eps_it`.
//!
//! Period bookkeeping: with `P` observed periods `0..P`, column 0 is the base
//! period `Y_i0`. The differenced equation is available for `t = 2..P`, which
//! gives `P - 2` instrument blocks. Block `t` holds the lags
//! `Y_i0 .. Y_i,t-2` and the factor scores `F_i1 .. F_i,P-1`, so with
//! `T = P - 1` periods after the base the uncollapsed moment count is
//! `T(T-1)/2 + r T (T-1)`.

mod estimate;

pub use estimate::{
    asymptotic_variance, gmm_objective, gmm_solve, one_step_weight, two_step, two_step_from,
    EstimateFlags, GmmEstimate, GmmSummary, Weight,
};

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::PanelDataset;

/// Covariance pattern `U` of the differenced errors used by the one-step weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPattern {
    /// `tridiag(-1, 2, -1)`: differenced i.i.d. errors.
    #[default]
    FirstDifference,
    Identity,
}

/// Which factor scores enter each instrument block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorInstruments {
    /// Scores of every post-base period in every block (strict exogeneity).
    #[default]
    AllPeriods,
    /// Only the block's own differenced scores `dF_it`.
    Contemporaneous,
    /// Every post-base period except `t - 1` and `t`, whose scores enter the
    /// block's regressor `dF_it`. Robust to measurement error in the scores
    /// that is independent over time.
    ExcludeAdjacent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InstrumentOptions {
    /// Keep only the most recent `max_lag_depth` response lags per block.
    /// Zero drops them, which only identifies a model with the lag fixed.
    pub max_lag_depth: Option<usize>,
    pub factor_instruments: FactorInstruments,
    pub weight_pattern: WeightPattern,
}

/// Differenced data, per-individual instrument matrices and the one-step weight.
#[derive(Debug, Clone)]
pub struct GmmProblem {
    /// `N x B`, `dy[i][b] = y[i][b+2] - y[i][b+1]`.
    pub dy: DMatrix<f64>,
    /// `N x B`, the lagged difference.
    pub dy_lag: DMatrix<f64>,
    /// One `N x B` matrix per factor.
    pub df: Vec<DMatrix<f64>>,
    /// `Z_i` as `moment_count x B`; column `b` carries block `b`'s instruments.
    pub instruments: Arc<Vec<DMatrix<f64>>>,
    pub block_sizes: Vec<usize>,
    pub moment_count: usize,
    pub weight_pattern: WeightPattern,
    /// When set, the lag coefficient is held at this value and only `beta_f`
    /// is estimated.
    pub fixed_lag: Option<f64>,
    one_step: Arc<Weight>,
}

impl GmmProblem {
    /// Assembles a problem from explicit parts and computes its one-step weight.
    pub fn from_parts(
        dy: DMatrix<f64>,
        dy_lag: DMatrix<f64>,
        df: Vec<DMatrix<f64>>,
        instruments: Vec<DMatrix<f64>>,
        weight_pattern: WeightPattern,
    ) -> Result<Self> {
        let (n, blocks) = dy.shape();
        if n < 2 {
            return Err(Error::TooFewIndividuals { found: n });
        }
        if dy_lag.shape() != (n, blocks) || df.iter().any(|m| m.shape() != (n, blocks)) {
            return Err(Error::DimensionMismatch(
                "differenced series must share one N x B shape".into(),
            ));
        }
        if instruments.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} instrument matrices for {n} individuals",
                instruments.len()
            )));
        }
        let moment_count = instruments.first().map_or(0, |z| z.nrows());
        if instruments
            .iter()
            .any(|z| z.nrows() != moment_count || z.ncols() != blocks)
        {
            return Err(Error::DimensionMismatch(format!(
                "every Z_i must be {moment_count} x {blocks}"
            )));
        }
        let mut problem = Self {
            dy,
            dy_lag,
            df,
            instruments: Arc::new(instruments),
            block_sizes: Vec::new(),
            moment_count,
            weight_pattern,
            fixed_lag: None,
            one_step: Arc::new(Weight {
                matrix: DMatrix::zeros(0, 0),
                regularized: false,
            }),
        };
        problem.one_step = Arc::new(one_step_weight(&problem));
        Ok(problem)
    }

    pub fn n_individuals(&self) -> usize {
        self.dy.nrows()
    }

    pub fn n_blocks(&self) -> usize {
        self.dy.ncols()
    }

    pub fn n_factors(&self) -> usize {
        self.df.len()
    }

    /// Number of coefficients, `1 + r`.
    pub fn n_coefficients(&self) -> usize {
        1 + self.df.len()
    }

    /// The cached one-step weight `(N^-1 sum Z_i U Z_i')^-1`.
    pub fn cached_one_step(&self) -> &Weight {
        &self.one_step
    }

    /// Regressor matrix `X_i = (dY_i,-1, dF_i)`, `B x (1 + r)`.
    pub fn regressors(&self, i: usize) -> DMatrix<f64> {
        let b = self.n_blocks();
        DMatrix::from_fn(b, self.n_coefficients(), |t, k| {
            if k == 0 {
                self.dy_lag[(i, t)]
            } else {
                self.df[k - 1][(i, t)]
            }
        })
    }

    /// Columns of [`Self::regressors`] whose coefficients are estimated.
    pub(crate) fn free_regressors(&self, i: usize) -> DMatrix<f64> {
        let full = self.regressors(i);
        match self.fixed_lag {
            None => full,
            Some(_) => full.columns(1, self.df.len()).into_owned(),
        }
    }

    /// `dy_i` net of any fixed lag contribution, as a column.
    pub(crate) fn free_response(&self, i: usize) -> nalgebra::DVector<f64> {
        let mut out = self.dy.row(i).transpose();
        if let Some(rho) = self.fixed_lag {
            out -= self.dy_lag.row(i).transpose() * rho;
        }
        out
    }

    /// Same instruments and regressors with the dependent variable
    /// replaced by the difference of `y - offset` (`offset` is `N x P`).
    pub fn with_response(&self, y_minus_offset: &DMatrix<f64>) -> Result<Self> {
        let (n, b) = self.dy.shape();
        if y_minus_offset.shape() != (n, b + 2) {
            return Err(Error::DimensionMismatch(format!(
                "response must be {n} x {}",
                b + 2
            )));
        }
        let mut out = self.clone();
        out.dy = DMatrix::from_fn(n, b, |i, t| {
            y_minus_offset[(i, t + 2)] - y_minus_offset[(i, t + 1)]
        });
        Ok(out)
    }

    /// Problem with every `Z_i` replaced by `C Z_i`.
    pub fn transform_instruments(&self, c: &DMatrix<f64>) -> Result<Self> {
        if c.ncols() != self.moment_count {
            return Err(Error::DimensionMismatch(format!(
                "transform has {} columns, {} moments",
                c.ncols(),
                self.moment_count
            )));
        }
        let z = self.instruments.iter().map(|z| c * z).collect();
        let mut out = Self::from_parts(
            self.dy.clone(),
            self.dy_lag.clone(),
            self.df.clone(),
            z,
            self.weight_pattern,
        )?;
        out.fixed_lag = self.fixed_lag;
        Ok(out)
    }
}

/// Uncollapsed moment count `T(T-1)/2 + rT(T-1)` for `T = t_after_base` periods after the base period.
pub fn uncollapsed_moment_count(t_after_base: usize, r: usize) -> usize {
    let t = t_after_base;
    t * t.saturating_sub(1) / 2 + r * t * t.saturating_sub(1)
}

/// Builds the differenced equation and block-diagonal instruments.
///
/// `f_scores` is stacked `(N*T) x r` (row `i*T + t`), aligned with `data`.
pub fn build_instruments(
    data: &PanelDataset,
    f_scores: &DMatrix<f64>,
    options: &InstrumentOptions,
) -> Result<GmmProblem> {
    build_from_matrices(data.y(), f_scores, options)
}

pub(crate) fn build_from_matrices(
    y: &DMatrix<f64>,
    f_scores: &DMatrix<f64>,
    options: &InstrumentOptions,
) -> Result<GmmProblem> {
    let (n, periods) = y.shape();
    if periods < 3 {
        return Err(Error::TooFewPeriods {
            found: periods,
            required: 3,
        });
    }
    if f_scores.nrows() != n * periods {
        return Err(Error::DimensionMismatch(format!(
            "factor scores have {} rows, expected N*T = {}",
            f_scores.nrows(),
            n * periods
        )));
    }
    let r = f_scores.ncols();
    let blocks = periods - 2;
    let f = |i: usize, t: usize, k: usize| f_scores[(i * periods + t, k)];

    // block b <-> period t = b + 2
    let lag_range = |t: usize| {
        let hi = t - 1; // exclusive: lags 0..=t-2
        let lo = options.max_lag_depth.map_or(0, |d| hi.saturating_sub(d));
        lo..hi
    };
    let f_len = match options.factor_instruments {
        FactorInstruments::AllPeriods => r * (periods - 1),
        FactorInstruments::Contemporaneous => r,
        FactorInstruments::ExcludeAdjacent => r * (periods - 3),
    };
    let block_sizes: Vec<usize> = (0..blocks).map(|b| lag_range(b + 2).len() + f_len).collect();
    let moment_count: usize = block_sizes.iter().sum();

    let mut instruments = Vec::with_capacity(n);
    for i in 0..n {
        let mut z = DMatrix::zeros(moment_count, blocks);
        let mut row = 0;
        for b in 0..blocks {
            let t = b + 2;
            for lag in lag_range(t) {
                z[(row, b)] = y[(i, lag)];
                row += 1;
            }
            match options.factor_instruments {
                FactorInstruments::AllPeriods => {
                    for s in 1..periods {
                        for k in 0..r {
                            z[(row, b)] = f(i, s, k);
                            row += 1;
                        }
                    }
                }
                FactorInstruments::Contemporaneous => {
                    for k in 0..r {
                        z[(row, b)] = f(i, t, k) - f(i, t - 1, k);
                        row += 1;
                    }
                }
                FactorInstruments::ExcludeAdjacent => {
                    for s in (1..periods).filter(|&s| s + 1 != t && s != t) {
                        for k in 0..r {
                            z[(row, b)] = f(i, s, k);
                            row += 1;
                        }
                    }
                }
            }
        }
        instruments.push(z);
    }

    let dy = DMatrix::from_fn(n, blocks, |i, b| y[(i, b + 2)] - y[(i, b + 1)]);
    let dy_lag = DMatrix::from_fn(n, blocks, |i, b| y[(i, b + 1)] - y[(i, b)]);
    let df = (0..r)
        .map(|k| DMatrix::from_fn(n, blocks, |i, b| f(i, b + 2, k) - f(i, b + 1, k)))
        .collect();
    let mut problem = GmmProblem::from_parts(dy, dy_lag, df, instruments, options.weight_pattern)?;
    problem.block_sizes = block_sizes;
    Ok(problem)
}
