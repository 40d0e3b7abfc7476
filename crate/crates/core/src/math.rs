//! Scalar helpers backed by `libm` (identical results with or without `std`)
//! and the few dense linear-algebra routines shared by the estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

/// Pivot ratio below which a Cholesky factorisation is treated as singular.
const CHOLESKY_PIVOT_TOL: f64 = 1e-12;

/// Inverse of a symmetric positive semi-definite matrix.
///
/// Returns the exact inverse when the matrix is numerically positive definite,
/// otherwise the Moore-Penrose pseudo-inverse. The flag is `true` when the
/// pseudo-inverse path was taken.
pub fn psd_inverse(m: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let n = m.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), false);
    }
    let max_diag = (0..n).map(|i| m[(i, i)]).fold(0.0_f64, f64::max);
    if max_diag > 0.0 {
        if let Some(chol) = m.clone().cholesky() {
            let l = chol.l_dirty();
            let min_pivot = (0..n).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
            if min_pivot > CHOLESKY_PIVOT_TOL * max_diag {
                return (symmetrize(chol.inverse()), false);
            }
        }
    }
    (pseudo_inverse_sym(m), true)
}

/// Moore-Penrose pseudo-inverse of a symmetric matrix via its eigen-decomposition.
pub fn pseudo_inverse_sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(symmetrize(m.clone()));
    let max_abs = eig.eigenvalues.iter().fold(0.0_f64, |a, &v| a.max(abs(v)));
    let tol = max_abs * (n as f64) * f64::EPSILON;
    let mut out = DMatrix::zeros(n, n);
    if max_abs == 0.0 {
        return out;
    }
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if abs(lambda) > tol {
            let v = eig.eigenvectors.column(j);
            out += (v * v.transpose()) / lambda;
        }
    }
    symmetrize(out)
}

/// Ratio of the largest to the smallest eigenvalue magnitude of a symmetric matrix.
pub fn condition_number_sym(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let eig = SymmetricEigen::new(symmetrize(m.clone()));
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for &v in eig.eigenvalues.iter() {
        lo = lo.min(abs(v));
        hi = hi.max(abs(v));
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Ordinary least squares `argmin ||y - X b||` through the normal equations.
/// Returns `None` when `X'X` is singular.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    xtx.cholesky().map(|c| c.solve(&xty))
}

/// Squared Frobenius norm.
pub fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Pearson correlation of two equal-length series; `None` if either is constant.
pub fn correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        None
    } else {
        Some(sab / sqrt(saa * sbb))
    }
}
