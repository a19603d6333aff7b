use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use crate::error::{invalid, Error, Result};
use crate::mask::Mask;
use crate::rng::rng_from_seed;

/// `||estimate - truth||_F^2 / ||truth||_F^2`.
pub fn nmse(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::DimensionMismatch { what: "estimate", expected: truth.len(), got: estimate.len() });
    }
    let t = truth.norm_squared();
    if !(t > 0.0) {
        return Err(invalid("truth has zero norm"));
    }
    Ok((estimate - truth).norm_squared() / t)
}

/// `1e-4 * max(truth)`.
pub fn default_threshold(truth: &DMatrix<f64>) -> f64 {
    1e-4 * truth.max()
}

/// Fraction of the pairs in `allowed` (diagonal excluded) where the
/// thresholded estimate `|estimate| > tau` disagrees with `truth > 0`.
/// An empty allowed set scores 0.
pub fn support_error(estimate: &DMatrix<f64>, truth: &DMatrix<f64>, tau: f64, allowed: &Mask) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(invalid(format!("threshold {tau} must be > 0")));
    }
    if estimate.shape() != truth.shape() {
        return Err(Error::DimensionMismatch { what: "estimate", expected: truth.len(), got: estimate.len() });
    }
    if (allowed.rows(), allowed.cols()) != truth.shape() {
        return Err(Error::DimensionMismatch { what: "allowed support", expected: truth.len(), got: allowed.rows() * allowed.cols() });
    }
    let mut total = 0usize;
    let mut wrong = 0usize;
    for (i, j) in allowed.pairs().filter(|&(i, j)| i != j) {
        total += 1;
        if (estimate[(i, j)].abs() > tau) != (truth[(i, j)] > 0.0) {
            wrong += 1;
        }
    }
    Ok(if total == 0 { 0.0 } else { wrong as f64 / total as f64 })
}

/// All off-diagonal pairs minus a random `p_known` fraction of the
/// off-diagonal zeros of `truth`. With a fixed seed the removed sets are
/// nested as `p_known` grows.
pub fn expose_support(truth: &Mask, p_known: f64, seed: u64) -> Result<Mask> {
    if !(0.0..=1.0).contains(&p_known) {
        return Err(invalid(format!("p_known = {p_known} outside [0, 1]")));
    }
    let n = truth.rows();
    if truth.cols() != n {
        return Err(Error::DimensionMismatch { what: "support", expected: n, got: truth.cols() });
    }
    let mut zeros: Vec<(usize, usize)> =
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| i != j && !truth.get(i, j)).collect();
    zeros.shuffle(&mut rng_from_seed(seed));
    let exposed = (p_known * zeros.len() as f64).round() as usize;
    let mut s = Mask::off_diagonal(n);
    for &(i, j) in &zeros[..exposed] {
        s.set(i, j, false);
    }
    Ok(s)
}
