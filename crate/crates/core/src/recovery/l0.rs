use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::nnls::nnls;
use super::objective::{fit_residual, row_gap, smooth_value};
use super::{Feasibility, RecoveryProblem, RecoveryResult};
use crate::combin::for_each_combination;
use crate::error::{Error, Result};

pub const MAX_ORDINARY: usize = 12;
pub const MAX_ROW_SUPPORT: usize = 20;

struct RowFit {
    b: Vec<(usize, f64)>,
    d: Vec<(usize, f64)>,
    residual: f64,
    solves: usize,
    met: bool,
}

fn fit_row(problem: &RecoveryProblem, i: usize, k_max: usize, eps: f64) -> RowFit {
    let kk = problem.y_hat.ncols();
    let omega = problem.allowed_b.row_indices(i);
    let cand = problem.allowed_d.row_indices(i);
    let ci = problem.c[i];
    // fit rows plus one row for the sum constraint
    let mut target = DVector::zeros(kk + 1);
    for t in 0..kk {
        target[t] = (1.0 - ci) * problem.y_hat[(i, t)];
    }
    target[kk] = 1.0 - ci;

    let mut best: Option<RowFit> = None;
    let mut solves = 0;
    for k in 0..=k_max.min(cand.len()) {
        for_each_combination(cand.len(), k, |sub| {
            let cols = omega.len() + k;
            let mut a = DMatrix::zeros(kk + 1, cols);
            for (c, &j) in omega.iter().enumerate() {
                for t in 0..kk {
                    a[(t, c)] = problem.z[(j, t)];
                }
                a[(kk, c)] = 1.0;
            }
            for (c, &s) in sub.iter().enumerate() {
                let j = cand[s];
                for t in 0..kk {
                    a[(t, omega.len() + c)] = problem.y_hat[(j, t)];
                }
                a[(kk, omega.len() + c)] = 1.0;
            }
            let (x, res) = nnls(&a, &target);
            solves += 1;
            let res2 = res * res;
            if best.as_ref().is_none_or(|b| res2 < b.residual) {
                best = Some(RowFit {
                    b: omega.iter().enumerate().map(|(c, &j)| (j, x[c])).collect(),
                    d: sub.iter().enumerate().map(|(c, &s)| (cand[s], x[omega.len() + c])).collect(),
                    residual: res2,
                    solves: 0,
                    met: res2 <= eps,
                });
            }
            true
        });
        if best.as_ref().is_some_and(|b| b.met) {
            break;
        }
    }
    let mut out = best.expect("at least the empty support is tried");
    out.solves = solves;
    out
}

/// Exhaustive search for the sparsest off-diagonal support of each row of
/// `D` that fits the data: supports are tried by increasing size up to
/// `k_max`, each with a nonnegative least-squares fit subject to the row-sum
/// constraint, and the first size whose best residual is at most `eps` is
/// kept. Rows that never reach `eps` keep their best fit at size `k_max` and
/// clear `converged`.
pub fn brute_force_l0(problem: &RecoveryProblem, k_max: usize, eps: f64) -> Result<RecoveryResult> {
    problem.validate()?;
    let n = problem.n_ord();
    if n > MAX_ORDINARY {
        return Err(Error::InstanceTooLarge(format!("{n} ordinary agents (limit {MAX_ORDINARY})")));
    }
    if let Some(i) = (0..n).find(|&i| problem.allowed_d.row_count(i) > MAX_ROW_SUPPORT) {
        return Err(Error::InstanceTooLarge(format!("row {i} has more than {MAX_ROW_SUPPORT} candidate neighbors")));
    }
    let fits: Vec<RowFit> = (0..n).into_par_iter().map(|i| fit_row(problem, i, k_max, eps)).collect();

    let mut b = DMatrix::zeros(n, problem.n_s());
    let mut d = DMatrix::zeros(n, n);
    for (i, f) in fits.iter().enumerate() {
        for &(j, v) in &f.b {
            b[(i, j)] = v;
        }
        for &(j, v) in &f.d {
            d[(i, j)] = v;
        }
        d[(i, i)] = problem.c[i];
    }
    let m = problem.response()?;
    let r = fit_residual(&m, &b, &d, &m);
    let objective = smooth_value(&r, &row_gap(&b, &d), 1.0);
    Ok(RecoveryResult {
        feasibility: Feasibility::of(&b, &d, problem),
        b_hat: b,
        d_hat: d,
        objective_trace: vec![objective],
        residual_trace: vec![r.norm()],
        iterations: fits.iter().map(|f| f.solves).sum(),
        converged: fits.iter().all(|f| f.met),
        lambda: 0.0,
        step: 0.0,
    })
}
