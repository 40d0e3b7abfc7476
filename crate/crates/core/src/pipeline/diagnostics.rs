//! Per-individual residual checks: a mean far from zero or first-order
//! autocorrelation far from zero suggests structure the model missed.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::DmdfmFit;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticThresholds {
    /// Flag `|mean| > mean_z * sd / sqrt(T)`.
    pub mean_z: f64,
    /// Flag `|acf_1| > acf_z / sqrt(T)`.
    pub acf_z: f64,
}

impl Default for DiagnosticThresholds {
    fn default() -> Self {
        Self {
            mean_z: 2.0,
            acf_z: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndividualDiagnostics {
    pub mean: f64,
    pub variance: f64,
    pub autocorrelation: f64,
    pub mean_flag: bool,
    pub autocorrelation_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub thresholds: DiagnosticThresholds,
    pub individuals: Vec<IndividualDiagnostics>,
}

impl ResidualReport {
    pub fn mean_flag_rate(&self) -> f64 {
        self.rate(|d| d.mean_flag)
    }

    pub fn autocorrelation_flag_rate(&self) -> f64 {
        self.rate(|d| d.autocorrelation_flag)
    }

    fn rate(&self, pick: impl Fn(&IndividualDiagnostics) -> bool) -> f64 {
        if self.individuals.is_empty() {
            return 0.0;
        }
        self.individuals.iter().filter(|d| pick(d)).count() as f64 / self.individuals.len() as f64
    }

    /// Checks every row of an `N x T` residual matrix.
    pub fn from_residuals(residuals: &DMatrix<f64>, thresholds: DiagnosticThresholds) -> Self {
        let t = residuals.ncols();
        let root_t = math::sqrt(t.max(1) as f64);
        let individuals = residuals
            .row_iter()
            .map(|row| {
                let mean = if t == 0 { 0.0 } else { row.sum() / t as f64 };
                let ss: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum();
                let variance = if t > 1 { ss / (t - 1) as f64 } else { 0.0 };
                let autocorrelation = if ss > 0.0 {
                    (1..t)
                        .map(|w| (row[w] - mean) * (row[w - 1] - mean))
                        .sum::<f64>()
                        / ss
                } else {
                    0.0
                };
                IndividualDiagnostics {
                    mean,
                    variance,
                    autocorrelation,
                    mean_flag: math::abs(mean) > thresholds.mean_z * math::sqrt(variance) / root_t,
                    autocorrelation_flag: math::abs(autocorrelation) > thresholds.acf_z / root_t,
                }
            })
            .collect();
        Self {
            thresholds,
            individuals,
        }
    }
}

/// Residual report for a fit with the default thresholds.
pub fn residual_diagnostics(fit: &DmdfmFit) -> ResidualReport {
    ResidualReport::from_residuals(&fit.residuals, DiagnosticThresholds::default())
}
