//! Small dense-matrix helpers used across the solvers.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Largest absolute entry (infinity norm over entries).
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, &v| a.max(v.abs()))
}

pub fn max_abs_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |a, &x| a.max(x.abs()))
}

/// In-place S <- (S + S^T)/2, suppressing asymmetry drift.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = max_abs(m).max(1.0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Lower-triangular factor L with L L^T = m for a symmetric positive
/// *semi*definite matrix. Pivots within `pivot_tol` (relative) of zero are
/// treated as exactly zero, so rank-deficient covariances are accepted;
/// a significantly negative pivot is an error.
pub fn psd_factor(m: &DMatrix<f64>, pivot_tol: f64) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "factorization needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !is_symmetric(m, 1e-10) {
        return Err(Error::InvalidSpec("matrix is not symmetric".into()));
    }
    let n = m.nrows();
    let scale = max_abs(m).max(1.0);
    let tol = pivot_tol * scale;
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d > tol {
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        } else if d > -tol {
            // zero pivot: rank-deficient direction, leave the column zero
        } else {
            return Err(Error::InvalidSpec(format!(
                "matrix is not positive semidefinite (pivot {d:.3e} at {j})"
            )));
        }
    }
    Ok(l)
}

/// Strict positive-definiteness via plain Cholesky.
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.is_square() && m.clone().cholesky().is_some()
}

/// Eigenvalue-based PSD check for validators (symmetric input assumed).
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &v| a.min(v))
}
