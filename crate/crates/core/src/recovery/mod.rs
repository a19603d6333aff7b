//! Recovery of the relative trust matrices from steady-state data.
//!
//! With `M = Y_hat Z^+` the smooth part of every formulation is
//!
//! ```text
//! f(B, D) = ||(I - D) M - B||_F^2 + gamma ||B 1 + D 1 - 1||^2
//! ```
//!
//! minimized over nonnegative `(B, D)` supported on `(Omega_B, S)` with
//! `diag(D) = c`, optionally with an l1 penalty on `D`.

mod fista;
mod l0;
mod nnls;
mod objective;

pub use fista::{fista_solve, solve_ls_full_support};
pub use l0::brute_force_l0;
pub use nnls::nnls;
pub use objective::{estimate_lipschitz, grad_f, objective_f, prox_project, soft_threshold, soft_threshold_one_sided};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::SteadyStateData;
use crate::error::{invalid, Error, Result};
use crate::mask::Mask;
use crate::matrix_io::rows;

/// Right pseudo-inverse `Z^+ = Z^T (Z Z^T)^-1` through a QR factorization of `Z^T`.
pub fn pseudo_inverse_right(z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (ns, k) = z.shape();
    if ns == 0 {
        return Ok(DMatrix::zeros(k, 0));
    }
    if ns > k {
        return Err(Error::RankDeficient { rank: crate::linalg::numerical_rank(z), required: ns });
    }
    // Z^T = Q R  =>  Z^+ = Q R^-T
    let qr = z.transpose().qr();
    let r = qr.r();
    let rmax = r.diagonal().amax();
    let tol = k.max(ns) as f64 * f64::EPSILON * rmax;
    if rmax == 0.0 || r.diagonal().iter().any(|v| v.abs() <= tol) {
        return Err(Error::RankDeficient { rank: crate::linalg::numerical_rank(z), required: ns });
    }
    let q = qr.q();
    // X^T = R^-1 Q^T
    let xt = r
        .solve_upper_triangular(&q.transpose())
        .ok_or_else(|| Error::Singular("R".into()))?;
    Ok(xt.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryMode {
    /// Support of `D` (nearly) known; no sparsity penalty.
    FullSupport,
    /// Support superset only; l1 penalty on `D`.
    Sparse,
}

/// Data and constraints of one recovery instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryProblem {
    #[serde(rename = "Y_hat", with = "rows")]
    pub y_hat: DMatrix<f64>,
    #[serde(rename = "Z", with = "rows")]
    pub z: DMatrix<f64>,
    /// Allowed off-diagonal support of `D` (`n_ord x n_ord`, diagonal ignored).
    pub allowed_d: Mask,
    /// Allowed support of `B` (`n_ord x n_s`).
    pub allowed_b: Mask,
    #[serde(with = "crate::matrix_io::vector")]
    pub c: DVector<f64>,
    pub mode: RecoveryMode,
}

impl RecoveryProblem {
    pub fn new(
        y_hat: DMatrix<f64>,
        z: DMatrix<f64>,
        allowed_d: Mask,
        allowed_b: Mask,
        c: DVector<f64>,
        mode: RecoveryMode,
    ) -> Result<Self> {
        let mut allowed_d = allowed_d;
        for i in 0..allowed_d.rows().min(allowed_d.cols()) {
            allowed_d.set(i, i, false);
        }
        let p = Self { y_hat, z, allowed_d, allowed_b, c, mode };
        p.validate()?;
        Ok(p)
    }

    pub fn from_data(data: &SteadyStateData, allowed_d: Mask, allowed_b: Mask, c: DVector<f64>, mode: RecoveryMode) -> Result<Self> {
        Self::new(data.y_hat.clone(), data.z.clone(), allowed_d, allowed_b, c, mode)
    }

    pub fn n_ord(&self) -> usize {
        self.y_hat.nrows()
    }

    pub fn n_s(&self) -> usize {
        self.z.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, ns, k) = (self.n_ord(), self.n_s(), self.y_hat.ncols());
        if self.z.ncols() != k {
            return Err(Error::DimensionMismatch { what: "Z columns", expected: k, got: self.z.ncols() });
        }
        if k < ns {
            return Err(invalid(format!("need K >= n_s (K = {k}, n_s = {ns})")));
        }
        if self.allowed_d.rows() != n || self.allowed_d.cols() != n {
            return Err(Error::DimensionMismatch { what: "allowed_d", expected: n, got: self.allowed_d.rows() });
        }
        if self.allowed_b.rows() != n || self.allowed_b.cols() != ns {
            return Err(Error::DimensionMismatch { what: "allowed_b", expected: ns, got: self.allowed_b.cols() });
        }
        if self.c.len() != n {
            return Err(Error::DimensionMismatch { what: "c", expected: n, got: self.c.len() });
        }
        if self.c.iter().any(|&v| !(0.0..1.0).contains(&v)) {
            return Err(invalid("diagonal target must lie in [0, 1)"));
        }
        if let Some(i) = (0..n).find(|&i| self.allowed_b.row_count(i) == 0) {
            return Err(Error::Infeasible(format!("ordinary agent {i} has an empty stubborn support")));
        }
        Ok(())
    }

    /// `Y_hat Z^+`.
    pub fn response(&self) -> Result<DMatrix<f64>> {
        Ok(&self.y_hat * pseudo_inverse_right(&self.z)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepRule {
    /// `0.9 / L` with `L` from power iteration.
    Auto,
    Fixed { alpha: f64 },
    /// Start at `1 / L_0` and grow the local constant by `factor` until the
    /// quadratic upper bound holds.
    Backtracking { factor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// l1 weight on `D`; `None` uses `n_ord * 1e-12 * ||Y_hat Z^+||_F`.
    pub lambda: Option<f64>,
    /// Weight of the row-stochasticity penalty.
    pub gamma: f64,
    pub step: StepRule,
    pub max_iters: usize,
    /// Stop when the relative objective change drops below this.
    pub tol: f64,
    /// Also stop once the objective falls below `floor` times its initial value.
    pub floor: f64,
    /// Reset momentum whenever the objective increases.
    pub restart: bool,
    /// Rescale each row onto `B 1 + D 1 = 1` after solving.
    pub rescale_rows: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            gamma: 1e-3,
            step: StepRule::Auto,
            max_iters: 40_000,
            tol: 1e-10,
            floor: 1e-26,
            restart: true,
            rescale_rows: false,
        }
    }
}

impl SolverConfig {
    pub fn resolved_lambda(&self, n_ord: usize, response: &DMatrix<f64>) -> f64 {
        self.lambda.unwrap_or(n_ord as f64 * 1e-12 * response.norm())
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda.is_some_and(|l| !(l >= 0.0)) {
            return Err(invalid("lambda must be >= 0"));
        }
        if !(self.gamma > 0.0) {
            return Err(invalid("gamma must be > 0"));
        }
        match self.step {
            StepRule::Fixed { alpha } if !(alpha > 0.0) => Err(invalid("step must be > 0")),
            StepRule::Backtracking { factor } if !(factor > 1.0) => Err(invalid("backtracking factor must be > 1")),
            _ => Ok(()),
        }
    }
}

/// Constraint violations of an estimate; all zero for a point of the feasible set.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Feasibility {
    /// Most negative entry, as a positive number.
    pub nonnegativity: f64,
    /// Largest magnitude outside the allowed supports.
    pub support: f64,
    pub diagonal: f64,
    pub row_sum: f64,
}

impl Feasibility {
    pub fn of(b: &DMatrix<f64>, d: &DMatrix<f64>, problem: &RecoveryProblem) -> Self {
        let n = d.nrows();
        let neg = b.iter().chain(d.iter()).fold(0.0f64, |a, &v| a.max(-v));
        let mut support = 0.0f64;
        for i in 0..n {
            for j in 0..b.ncols() {
                if !problem.allowed_b.get(i, j) {
                    support = support.max(b[(i, j)].abs());
                }
            }
            for j in 0..n {
                if i != j && !problem.allowed_d.get(i, j) {
                    support = support.max(d[(i, j)].abs());
                }
            }
        }
        let diagonal = (0..n).fold(0.0f64, |a, i| a.max((d[(i, i)] - problem.c[i]).abs()));
        let row_sum = crate::graph::row_sum_residual(b, d);
        Self { nonnegativity: neg, support, diagonal, row_sum }
    }

    pub fn max(&self) -> f64 {
        self.nonnegativity.max(self.support).max(self.diagonal).max(self.row_sum)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    #[serde(rename = "B_hat", with = "rows")]
    pub b_hat: DMatrix<f64>,
    #[serde(rename = "D_hat", with = "rows")]
    pub d_hat: DMatrix<f64>,
    /// Objective after every iteration (index 0 is the initial point).
    pub objective_trace: Vec<f64>,
    /// Fit residual `||(I - D) M - B||_F` alongside the objective trace.
    pub residual_trace: Vec<f64>,
    pub iterations: usize,
    pub feasibility: Feasibility,
    pub converged: bool,
    pub lambda: f64,
    pub step: f64,
}

impl RecoveryResult {
    /// Objective trace as CSV `iter,objective,residual`.
    pub fn write_trace_csv(&self, out: impl std::io::Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["iter", "objective", "residual"])?;
        for (i, (f, r)) in self.objective_trace.iter().zip(&self.residual_trace).enumerate() {
            wtr.write_record([i.to_string(), f.to_string(), r.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn pseudo_inverse_of_identity_and_diagonal() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert!((pseudo_inverse_right(&i).unwrap() - &i).abs().max() < 1e-15);
        let z = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let p = pseudo_inverse_right(&z).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.25]);
        assert!((p - expected).abs().max() < 1e-15);
    }

    #[test]
    fn pseudo_inverse_of_wide_gaussian() {
        let mut rng = rng_from_seed(17);
        let z = DMatrix::from_fn(5, 10, |_, _| StandardNormal.sample(&mut rng));
        let p = pseudo_inverse_right(&z).unwrap();
        assert!((&z * &p - DMatrix::identity(5, 5)).norm() < 1e-10);
        // agrees with the SVD pseudo-inverse
        let svd = z.clone().pseudo_inverse(1e-12).unwrap();
        assert!((p - svd).abs().max() < 1e-10);
    }

    #[test]
    fn pseudo_inverse_reports_rank() {
        let z = DMatrix::from_row_slice(3, 4, &[1.0, 2.0, 3.0, 4.0, 2.0, 4.0, 6.0, 8.0, 0.0, 1.0, 0.0, 1.0]);
        match pseudo_inverse_right(&z) {
            Err(Error::RankDeficient { rank, required }) => assert_eq!((rank, required), (2, 3)),
            other => panic!("{other:?}"),
        }
        assert!(pseudo_inverse_right(&DMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn problem_validation() {
        let y = DMatrix::zeros(2, 3);
        let z = DMatrix::from_element(1, 3, 1.0);
        let ok = RecoveryProblem::new(y.clone(), z.clone(), Mask::full(2, 2), Mask::full(2, 1), DVector::zeros(2), RecoveryMode::Sparse)
            .unwrap();
        assert!(!ok.allowed_d.get(0, 0));
        let mut empty_b = Mask::full(2, 1);
        empty_b.set(1, 0, false);
        assert!(matches!(
            RecoveryProblem::new(y.clone(), z.clone(), Mask::full(2, 2), empty_b, DVector::zeros(2), RecoveryMode::Sparse),
            Err(Error::Infeasible(_))
        ));
        assert!(RecoveryProblem::new(y, z, Mask::full(2, 2), Mask::full(2, 1), DVector::from_element(2, 1.0), RecoveryMode::Sparse)
            .is_err());
    }
}
