//! Forecasts from a fitted model:
//! `y_hat_i,t+1 = beta_l y_it + F_i,t+1' beta_f + mu_i + G_t+1' Gamma_i`.
//!
//! Future regressor factors come from projecting supplied future `X` rows on
//! the fitted loadings. Future error factors are unobservable; they are held
//! at their last in-sample value or extrapolated with a fitted AR(1).

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::DmdfmFit;
use crate::error::{Error, Result};
use crate::factor::factor_scores;
use crate::panel::PanelDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorFactorPath {
    /// `G_T+h = G_T`.
    #[default]
    Hold,
    /// `G_T+h = phi^h G_T` with `phi` fitted per factor in sample.
    Ar1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ForecastOptions {
    pub error_factor_path: ErrorFactorPath,
}

/// Per-factor AR(1) coefficients of the in-sample error factors (no intercept;
/// the scores are centred).
fn ar1_coefficients(g: &DMatrix<f64>) -> Vec<f64> {
    g.column_iter()
        .map(|col| {
            let (mut num, mut den) = (0.0, 0.0);
            for w in 1..col.len() {
                num += col[w] * col[w - 1];
                den += col[w - 1] * col[w - 1];
            }
            if den > 0.0 {
                num / den
            } else {
                0.0
            }
        })
        .collect()
}

/// Interactive effect for every individual `h >= 1` periods past the sample.
fn future_interactive(fit: &DmdfmFit, h: usize, options: &ForecastOptions) -> DVector<f64> {
    let ef = &fit.error_factors;
    let s = ef.n_factors();
    let mut g_future = DVector::zeros(s);
    if s > 0 {
        let last = ef.scores.nrows() - 1;
        let phi = match options.error_factor_path {
            ErrorFactorPath::Hold => alloc::vec![1.0; s],
            ErrorFactorPath::Ar1 => ar1_coefficients(&ef.scores),
        };
        for j in 0..s {
            g_future[j] = ef.scores[(last, j)] * libm::pow(phi[j], h as f64);
        }
    }
    &ef.means + &ef.loadings * g_future
}

/// `F_it' beta_f` for every individual at period `t` of `data`.
fn factor_term(fit: &DmdfmFit, data: &PanelDataset, t: usize) -> Result<DVector<f64>> {
    if fit.r() == 0 {
        return Ok(DVector::zeros(data.n_individuals()));
    }
    let scores = factor_scores(&fit.regressor_factors, &data.x_period(t))?;
    Ok(scores * DVector::from_column_slice(&fit.beta_f))
}

fn check_shape(fit: &DmdfmFit, data: &PanelDataset, horizon: usize) -> Result<()> {
    let n = fit.interactive_term.nrows();
    if data.n_individuals() != n {
        return Err(Error::DimensionMismatch(alloc::format!(
            "fit has {n} individuals, data has {}",
            data.n_individuals()
        )));
    }
    if data.n_periods() < fit.n_periods {
        return Err(Error::DimensionMismatch(alloc::format!(
            "data must contain the {} fitted periods",
            fit.n_periods
        )));
    }
    if fit.r() > 0 && data.n_regressors() != fit.regressor_factors.loadings.nrows() {
        return Err(Error::DimensionMismatch("regressor count differs from the fit".into()));
    }
    let supplied = data.n_periods() - fit.n_periods;
    if fit.r() > 0 && horizon > supplied {
        return Err(Error::MissingFutureRegressors { horizon, supplied });
    }
    Ok(())
}

/// Multi-step forecast with the default options.
pub fn forecast(fit: &DmdfmFit, data: &PanelDataset, horizon: usize) -> Result<DMatrix<f64>> {
    forecast_with(fit, data, horizon, &ForecastOptions::default())
}

/// Recursive forecast `horizon` periods past the fitted sample, feeding each
/// prediction back as the next lag.
///
/// `data` holds the fitted periods followed by at least `horizon` periods of
/// future regressors (their responses are ignored). Returns `N x horizon`.
pub fn forecast_with(
    fit: &DmdfmFit,
    data: &PanelDataset,
    horizon: usize,
    options: &ForecastOptions,
) -> Result<DMatrix<f64>> {
    let n = data.n_individuals();
    check_shape(fit, data, horizon)?;
    let mut out = DMatrix::zeros(n, horizon);
    let mut previous: DVector<f64> = data.y().column(fit.n_periods - 1).into_owned();
    for h in 1..=horizon {
        let t = fit.n_periods - 1 + h;
        let factor = factor_term(fit, data, t)?;
        let next = &previous * fit.beta_l + factor + future_interactive(fit, h, options);
        out.set_column(h - 1, &next);
        previous = next;
    }
    Ok(out)
}

/// One-step-ahead forecasts for the `horizon` periods after the fitted
/// sample, each using the observed previous response. The model is not
/// refitted; error factors follow `options` from the end of the sample.
pub fn rolling_forecast(
    fit: &DmdfmFit,
    data: &PanelDataset,
    horizon: usize,
    options: &ForecastOptions,
) -> Result<DMatrix<f64>> {
    check_shape(fit, data, horizon)?;
    let supplied = data.n_periods() - fit.n_periods;
    if horizon > supplied {
        return Err(Error::MissingFutureRegressors { horizon, supplied });
    }
    let n = data.n_individuals();
    let y = data.y();
    let mut out = DMatrix::zeros(n, horizon);
    for h in 1..=horizon {
        let t = fit.n_periods - 1 + h;
        let previous = y.column(t - 1) * fit.beta_l;
        let next = previous + factor_term(fit, data, t)? + future_interactive(fit, h, options);
        out.set_column(h - 1, &next);
    }
    Ok(out)
}
