use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// `-x ln x - (1 - x) ln(1 - x)`, zero at the endpoints.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(invalid(format!("entropy argument {x} outside [0, 1]")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.ln() - (1.0 - x) * (1.0 - x).ln())
}

fn entropy(x: f64) -> f64 {
    binary_entropy(x).unwrap_or(f64::NAN)
}

/// `(H(alpha) + beta' H(alpha / beta')) / (alpha ln(beta' / alpha))` for `beta' > alpha`.
pub fn theorem1_ratio(alpha: f64, beta_prime: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    if !(beta_prime > alpha && beta_prime <= 1.0) {
        return Err(invalid(format!("beta' = {beta_prime} must lie in (alpha, 1]")));
    }
    Ok((entropy(alpha) + beta_prime * entropy(alpha / beta_prime)) / (alpha * (beta_prime / alpha).ln()))
}

/// Budget condition `d > max(4, 1 + ratio(alpha, beta))`.
pub fn theorem1_budget_condition(alpha: f64, beta: f64, d: usize) -> Result<bool> {
    Ok(d > 4 && (d - 1) as f64 > theorem1_ratio(alpha, beta)?)
}

/// Smallest stubborn fraction `beta` meeting the budget condition for
/// row-sparsity fraction `alpha` and placement degree `d`.
///
/// Solves `d - 1 = ratio(alpha, beta')` by bisection. Without `n` the
/// asymptotic value `beta = beta'` is returned; with `n` the finite-size
/// offset gives `beta = beta' + d / n`.
pub fn theorem1_min_beta(alpha: f64, d: usize, n: Option<usize>) -> Result<f64> {
    if d <= 4 {
        return Err(invalid(format!("degree {d} must exceed 4")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    let target = (d - 1) as f64;
    let g = |b: f64| theorem1_ratio(alpha, b).map(|r| r - target);
    if g(1.0)? > 0.0 {
        return Err(Error::Infeasible(format!("no beta in (alpha, 1] for alpha = {alpha}, d = {d}")));
    }
    // g -> +inf as beta' -> alpha
    let (mut lo, mut hi) = (alpha, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let offset = match n {
        Some(0) => return Err(invalid("n must be positive")),
        Some(n) => d as f64 / n as f64,
        None => 0.0,
    };
    Ok(hi + offset)
}

/// Value condition `b_min (2d - 3) - 1 - 2 b_max > 0`; margins within
/// `1e-12` of zero count as zero.
pub fn theorem1_value_condition(b_min: f64, b_max: f64, d: usize) -> bool {
    b_min * (2.0 * d as f64 - 3.0) - 1.0 - 2.0 * b_max > 1e-12
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureBound {
    /// `(d / beta)^4 (d - 1) / n^2`.
    pub leading: f64,
    /// `2 - (d - 1)(d - 3)`: the remainder is `O(n^order_exponent)`.
    pub order_exponent: f64,
}

pub fn theorem1_failure_bound(d: usize, beta: f64, n: usize) -> Result<FailureBound> {
    if d < 4 || !(beta > 0.0) || n == 0 {
        return Err(invalid("need d >= 4, beta > 0 and n >= 1"));
    }
    let d = d as f64;
    let n = n as f64;
    Ok(FailureBound {
        leading: (d / beta).powi(4) * (d - 1.0) / (n * n),
        order_exponent: 2.0 - (d - 1.0) * (d - 3.0),
    })
}

/// Stubborn-to-ordinary ratio `n_s / (n - n_s)` needed in the large-network
/// limit for row-sparsity fraction `p`.
pub fn asymptotic_budget(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 0.5) {
        return Err(invalid(format!("sparsity fraction {p} outside (0, 0.5)")));
    }
    Ok(2.0 * p)
}

/// `b_min delta d_l - b_max (d_u - delta d_l) - (1 - d_l b_min)`; positive
/// means the sparse solution is unique.
pub fn corollary1_margin(b_min: f64, b_max: f64, d_l: f64, d_u: f64, delta: f64) -> f64 {
    b_min * delta * d_l - b_max * (d_u - delta * d_l) - (1.0 - d_l * b_min)
}
