//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Numerical rank with threshold `max(rows, cols) * eps * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Solves `(I - D) X = rhs` with partial-pivot LU.
pub fn solve_i_minus(d: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = d.nrows();
    let a = DMatrix::identity(n, n) - d;
    let lu = a.lu();
    let x = lu
        .solve(rhs)
        .ok_or_else(|| Error::Singular("I - D".into()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("I - D".into()));
    }
    Ok(x)
}

pub fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.nrows(), m.row_iter().map(|r| r.sum()))
}

pub fn with_zero_diagonal(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    out.fill_diagonal(0.0);
    out
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()))
}
