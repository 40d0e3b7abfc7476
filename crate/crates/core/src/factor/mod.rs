//! Principal-component factor extraction and factor-count selection.
//!
//! [`pca`] treats the rows of its input as observations and the columns as
//! variables. For regressor factors the input is the stacked `(N*T) x p`
//! regressor matrix, so loadings are `p x r`. For error-component factors the
//! input is the `T x N` residual matrix, loadings are the `N x s` individual
//! loadings and scores are the `T x s` time factors.

mod selection;

pub use selection::{
    icp1, pcp1, select_r_pooled, select_r_regressors, select_r_scree, select_s_errors,
    SelectionCriterion, SelectionReport,
};

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};
use crate::math;

/// Result of one principal-component pass.
///
/// Loadings are scaled so that `loadings' loadings / d = I_k`, scores carry the
/// inverse scale, and the input is recovered exactly as
/// `1 * means' + scores * loadings' + residuals`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorDecomposition {
    /// Column means removed before the decomposition (length `d`).
    pub means: DVector<f64>,
    /// `d x k`.
    pub loadings: DMatrix<f64>,
    /// `m x k`.
    pub scores: DMatrix<f64>,
    /// Covariance eigenvalues, descending, length `min(m, d)`.
    pub eigenvalues: Vec<f64>,
    /// `eigenvalues[j] / sum(eigenvalues)`.
    pub explained_share: Vec<f64>,
    /// Centred residual, `m x d`.
    pub residuals: DMatrix<f64>,
}

impl FactorDecomposition {
    pub fn n_factors(&self) -> usize {
        self.loadings.ncols()
    }

    /// `scores * loadings'` (the common component, without the means).
    pub fn common_component(&self) -> DMatrix<f64> {
        &self.scores * self.loadings.transpose()
    }

    /// `1 * means' + scores * loadings'`.
    pub fn fitted(&self) -> DMatrix<f64> {
        let mut out = self.common_component();
        for mut row in out.row_iter_mut() {
            row += self.means.transpose();
        }
        out
    }

    /// Recombines means, common component and residuals.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.fitted() + &self.residuals
    }

    pub fn cumulative_share(&self, k: usize) -> f64 {
        self.explained_share.iter().take(k).sum()
    }
}

/// Column means and the centred copy of `matrix`.
pub(crate) fn center_columns(matrix: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let m = matrix.nrows();
    let means = if m == 0 {
        DVector::zeros(matrix.ncols())
    } else {
        DVector::from_iterator(
            matrix.ncols(),
            matrix.column_iter().map(|c| c.iter().sum::<f64>() / m as f64),
        )
    };
    let mut centered = matrix.clone();
    for mut row in centered.row_iter_mut() {
        row -= means.transpose();
    }
    (means, centered)
}

/// Singular values of a matrix, sorted descending.
pub(crate) fn sorted_singular_values(matrix: &DMatrix<f64>) -> Vec<f64> {
    if matrix.nrows() == 0 || matrix.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = matrix.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Covariance eigenvalues of the column-centred matrix, descending.
pub fn eigen_spectrum(matrix: &DMatrix<f64>) -> Vec<f64> {
    let m = matrix.nrows().max(1) as f64;
    let (_, centered) = center_columns(matrix);
    sorted_singular_values(&centered)
        .into_iter()
        .map(|s| s * s / m)
        .collect()
}

fn shares(eigenvalues: &[f64]) -> Vec<f64> {
    let total: f64 = eigenvalues.iter().sum();
    if total > 0.0 {
        eigenvalues.iter().map(|v| v / total).collect()
    } else {
        alloc::vec![0.0; eigenvalues.len()]
    }
}

/// Extracts `k` principal-component factors from the rows of `matrix`.
///
/// Columns are centred first. Trailing zero eigenvalues are allowed; only
/// `k > min(m, d)` is an error.
pub fn pca(matrix: &DMatrix<f64>, k: usize) -> Result<FactorDecomposition> {
    let (m, d) = matrix.shape();
    let max = m.min(d);
    if k > max {
        return Err(Error::KTooLarge { k, max });
    }
    let (means, centered) = center_columns(matrix);

    let (eigenvalues, directions) = if max == 0 {
        (Vec::new(), DMatrix::zeros(d, 0))
    } else {
        let svd = SVD::new(centered.clone(), false, true);
        let v_t = svd.v_t.expect("right singular vectors requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        // stable sort keeps the original axis order for ties
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let eig = order
            .iter()
            .map(|&j| svd.singular_values[j] * svd.singular_values[j] / m as f64)
            .collect();
        let mut dirs = DMatrix::zeros(d, k);
        for (col, &j) in order.iter().take(k).enumerate() {
            let mut v: DVector<f64> = v_t.row(j).transpose();
            orient(&mut v);
            dirs.set_column(col, &v);
        }
        (eig, dirs)
    };

    let loadings = directions * math::sqrt(d as f64);
    let scores = project(&centered, &loadings);
    let residuals = &centered - &scores * loadings.transpose();
    let explained_share = shares(&eigenvalues);
    Ok(FactorDecomposition {
        means,
        loadings,
        scores,
        eigenvalues,
        explained_share,
        residuals,
    })
}

/// Sign convention: the entry of largest magnitude is positive (first on ties).
fn orient(v: &mut DVector<f64>) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if math::abs(*x) > math::abs(v[best]) {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Least-squares projection of centred rows onto loadings with `L'L = d I`.
fn project(centered: &DMatrix<f64>, loadings: &DMatrix<f64>) -> DMatrix<f64> {
    let d = loadings.nrows().max(1) as f64;
    (centered * loadings) / d
}

/// Regression-method factor scores for new observations.
pub fn factor_scores(decomp: &FactorDecomposition, new_rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = decomp.loadings.nrows();
    if new_rows.ncols() != d {
        return Err(Error::DimensionMismatch(alloc::format!(
            "rows have {} columns, loadings have {d} rows",
            new_rows.ncols()
        )));
    }
    let mut centered = new_rows.clone();
    for mut row in centered.row_iter_mut() {
        row -= decomp.means.transpose();
    }
    Ok(project(&centered, &decomp.loadings))
}
