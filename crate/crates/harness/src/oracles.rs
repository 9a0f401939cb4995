//! Brute-force references used by the test suites and `pfb check`.
//!
//! Nothing here calls into the bound builders or the core linear algebra:
//! partition functions are enumerated directly and matrix work goes through
//! `nalgebra`.
//!
//! Tolerance ladder used throughout: enumeration 1e-12, finite differences
//! 1e-5, linear algebra 1e-8 (solves compared relatively) / 1e-10 (residuals).

use nalgebra::{DMatrix, DVector};
use pfbound::FeatureList;

pub const ENUMERATION_TOL: f64 = 1e-12;
pub const FD_TOL: f64 = 1e-5;
pub const LINALG_TOL: f64 = 1e-8;
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OracleError {
    #[error("matrix is not symmetric positive definite")]
    NotSpd,
    #[error("dimension mismatch")]
    Dimension,
}

/// `log sum_y exp(theta^T f(y))` by direct enumeration with a max shift.
pub fn exact_log_partition(theta: &[f64], features: &FeatureList) -> f64 {
    let mut scores = Vec::with_capacity(features.n());
    for y in 0..features.n() {
        let f = features.row(y);
        let mut s = 0.0;
        for i in 0..f.len() {
            s += theta[i] * f[i];
        }
        scores.push(s);
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in &scores {
        total += (s - max).exp();
    }
    max + total.ln()
}

/// Central differences `(fn(theta + h e_i) - fn(theta - h e_i)) / 2h`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "step must be positive");
    let mut probe = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            probe[i] = theta[i] + h;
            let up = f(&probe);
            probe[i] = theta[i] - h;
            let down = f(&probe);
            probe[i] = theta[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major `n x n`).
pub fn dense_spd_solve(a: &[f64], b: &[f64]) -> Result<Vec<f64>, OracleError> {
    let n = b.len();
    if a.len() != n * n {
        return Err(OracleError::Dimension);
    }
    let m = DMatrix::from_row_slice(n, n, a);
    let chol = m.cholesky().ok_or(OracleError::NotSpd)?;
    Ok(chol
        .solve(&DVector::from_column_slice(b))
        .as_slice()
        .to_vec())
}

/// Eigenvalues (ascending) and matching unit eigenvectors of a symmetric matrix.
pub fn dense_symmetric_eig(a: &[f64], n: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>), OracleError> {
    if a.len() != n * n {
        return Err(OracleError::Dimension);
    }
    let m = DMatrix::from_row_slice(n, n, a);
    let eig = m.symmetric_eigen();
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|i| {
            (
                eig.eigenvalues[i],
                eig.eigenvectors.column(i).iter().copied().collect(),
            )
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

/// Dense `sum_y w_y f(y) f(y)^T`-style helper: `x^T A x` for row-major `A`.
pub fn dense_quad_form(a: &[f64], x: &[f64]) -> f64 {
    let n = x.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += x[i] * a[i * n + j] * x[j];
        }
    }
    total
}
