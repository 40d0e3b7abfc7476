//! Balanced panel container plus the lag and first-difference primitives.
//!
//! Regressors are stored "stacked": row `i * T + t` of the `(N*T) x p` matrix
//! holds `X_it`. Period indices are 0-based; column 0 of `y` is the base
//! period that anchors the lag instruments.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_INDIVIDUALS: usize = 2;
pub const MIN_PERIODS: usize = 3;

/// One row of a long-format panel file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRecord {
    pub individual: String,
    pub period: String,
    pub y: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    y: DMatrix<f64>,
    x: DMatrix<f64>,
    individual_ids: Vec<String>,
    period_ids: Vec<String>,
}

impl PanelDataset {
    /// Builds a panel from an `N x T` response matrix and stacked `(N*T) x p` regressors.
    pub fn new(
        y: DMatrix<f64>,
        x: DMatrix<f64>,
        individual_ids: Vec<String>,
        period_ids: Vec<String>,
    ) -> Result<Self> {
        let (n, t) = y.shape();
        if n < MIN_INDIVIDUALS {
            return Err(Error::TooFewIndividuals { found: n });
        }
        if t < MIN_PERIODS {
            return Err(Error::TooFewPeriods {
                found: t,
                required: MIN_PERIODS,
            });
        }
        if x.nrows() != n * t {
            return Err(Error::DimensionMismatch(format!(
                "regressors have {} rows, expected N*T = {}",
                x.nrows(),
                n * t
            )));
        }
        if individual_ids.len() != n || period_ids.len() != t {
            return Err(Error::DimensionMismatch(format!(
                "{} individual ids and {} period ids for a {n} x {t} panel",
                individual_ids.len(),
                period_ids.len()
            )));
        }
        Ok(Self {
            y,
            x,
            individual_ids,
            period_ids,
        })
    }

    /// Builds a panel with generated labels `0..N` and `0..T`.
    pub fn from_matrices(y: DMatrix<f64>, x: DMatrix<f64>) -> Result<Self> {
        let ids = (0..y.nrows()).map(|i| i.to_string()).collect();
        let periods = (0..y.ncols()).map(|t| t.to_string()).collect();
        Self::new(y, x, ids, periods)
    }

    /// Assembles a balanced panel from long-format records in any order.
    ///
    /// Individuals and periods are sorted by label (numerically when the label
    /// is an integer), so the result does not depend on record order.
    pub fn from_long(records: &[LongRecord]) -> Result<Self> {
        let p = records.first().map_or(0, |r| r.x.len());
        if let Some(bad) = records.iter().find(|r| r.x.len() != p) {
            return Err(Error::DimensionMismatch(format!(
                "record ({}, {}) has {} regressors, expected {p}",
                bad.individual,
                bad.period,
                bad.x.len()
            )));
        }
        let mut individuals: Vec<&str> = records.iter().map(|r| r.individual.as_str()).collect();
        let mut periods: Vec<&str> = records.iter().map(|r| r.period.as_str()).collect();
        individuals.sort_by(|a, b| label_order(a, b));
        individuals.dedup();
        periods.sort_by(|a, b| label_order(a, b));
        periods.dedup();

        let ind_index: BTreeMap<&str, usize> =
            individuals.iter().enumerate().map(|(k, v)| (*v, k)).collect();
        let per_index: BTreeMap<&str, usize> =
            periods.iter().enumerate().map(|(k, v)| (*v, k)).collect();
        let (n, t) = (individuals.len(), periods.len());

        let mut cells: Vec<Option<&LongRecord>> = alloc::vec![None; n * t];
        for rec in records {
            let i = ind_index[rec.individual.as_str()];
            let s = per_index[rec.period.as_str()];
            let slot = &mut cells[i * t + s];
            if slot.is_some() {
                return Err(Error::DuplicateCell {
                    individual: rec.individual.clone(),
                    period: rec.period.clone(),
                });
            }
            *slot = Some(rec);
        }

        let mut y = DMatrix::zeros(n, t);
        let mut x = DMatrix::zeros(n * t, p);
        for i in 0..n {
            for s in 0..t {
                let rec = cells[i * t + s].ok_or_else(|| Error::MissingCell {
                    individual: individuals[i].to_string(),
                    period: periods[s].to_string(),
                })?;
                y[(i, s)] = rec.y;
                for (j, v) in rec.x.iter().enumerate() {
                    x[(i * t + s, j)] = *v;
                }
            }
        }
        Self::new(
            y,
            x,
            individuals.into_iter().map(String::from).collect(),
            periods.into_iter().map(String::from).collect(),
        )
    }

    /// Long-format records sorted by individual then period.
    pub fn to_long(&self) -> Vec<LongRecord> {
        let (n, t) = self.y.shape();
        let mut out = Vec::with_capacity(n * t);
        for i in 0..n {
            for s in 0..t {
                out.push(LongRecord {
                    individual: self.individual_ids[i].clone(),
                    period: self.period_ids[s].clone(),
                    y: self.y[(i, s)],
                    x: self.x.row(i * t + s).iter().copied().collect(),
                });
            }
        }
        out
    }

    pub fn n_individuals(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_periods(&self) -> usize {
        self.y.ncols()
    }

    pub fn n_regressors(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    /// Stacked `(N*T) x p` regressor matrix.
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn x_at(&self, i: usize, t: usize, j: usize) -> f64 {
        self.x[(i * self.n_periods() + t, j)]
    }

    /// Cross-section of regressors for one period (`N x p`).
    pub fn x_period(&self, t: usize) -> DMatrix<f64> {
        let periods = self.n_periods();
        DMatrix::from_fn(self.n_individuals(), self.n_regressors(), |i, j| {
            self.x[(i * periods + t, j)]
        })
    }

    pub fn individual_ids(&self) -> &[String] {
        &self.individual_ids
    }

    pub fn period_ids(&self) -> &[String] {
        &self.period_ids
    }

    /// Panel restricted to the first `periods` periods.
    pub fn head(&self, periods: usize) -> Result<Self> {
        if periods > self.n_periods() {
            return Err(Error::DimensionMismatch(format!(
                "cannot take {periods} of {} periods",
                self.n_periods()
            )));
        }
        let t = self.n_periods();
        let x = DMatrix::from_fn(self.n_individuals() * periods, self.n_regressors(), |r, j| {
            let (i, s) = (r / periods, r % periods);
            self.x[(i * t + s, j)]
        });
        Self::new(
            self.y.columns(0, periods).into_owned(),
            x,
            self.individual_ids.clone(),
            self.period_ids[..periods].to_vec(),
        )
    }
}

/// Label ordering: integer labels numerically and before any other label,
/// everything else lexicographically.
fn label_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

/// Response aligned with its first `h` lags.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedView {
    pub lag_order: usize,
    /// `N x (T-h)`, column `t` is period `t + h`.
    pub y_current: DMatrix<f64>,
    /// `y_lagged[j]` is lag `j + 1`, each `N x (T-h)`.
    pub y_lagged: Vec<DMatrix<f64>>,
}

/// Splits the response into current values and `h` lags.
pub fn lag_view(data: &PanelDataset, h: usize) -> Result<LaggedView> {
    let t = data.n_periods();
    let max = t.saturating_sub(2);
    if h == 0 || h > max {
        return Err(Error::LagTooLarge { h, max });
    }
    let y = data.y();
    let cols = t - h;
    let y_current = y.columns(h, cols).into_owned();
    let y_lagged = (0..h)
        .map(|j| y.columns(h - 1 - j, cols).into_owned())
        .collect();
    Ok(LaggedView {
        lag_order: h,
        y_current,
        y_lagged,
    })
}

/// Row-wise first difference, `out[i][t] = series[i][t+1] - series[i][t]`.
pub fn first_difference(series: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, t) = series.shape();
    if t < 2 {
        return Err(Error::DimensionMismatch(format!(
            "first difference needs at least 2 periods, got {t}"
        )));
    }
    Ok(DMatrix::from_fn(n, t - 1, |i, s| {
        series[(i, s + 1)] - series[(i, s)]
    }))
}
