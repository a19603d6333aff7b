use nalgebra::{DMatrix, DVector};

use super::RecoveryProblem;
use crate::linalg::row_sums;
use crate::mask::Mask;

/// `T - B - D M` for a block of rows whose targets are `T`.
pub(crate) fn fit_residual(t: &DMatrix<f64>, b: &DMatrix<f64>, d: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut r = t - b;
    r.gemm(-1.0, d, m, 1.0);
    r
}

pub(crate) fn row_gap(b: &DMatrix<f64>, d: &DMatrix<f64>) -> DVector<f64> {
    (row_sums(b) + row_sums(d)).add_scalar(-1.0)
}

pub(crate) fn smooth_value(r: &DMatrix<f64>, s: &DVector<f64>, gamma: f64) -> f64 {
    r.norm_squared() + gamma * s.norm_squared()
}

pub(crate) fn smooth_grad(r: &DMatrix<f64>, s: &DVector<f64>, m: &DMatrix<f64>, gamma: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (k, ns) = r.shape();
    let n = m.nrows();
    let mut gb = DMatrix::from_fn(k, ns, |i, _| 2.0 * gamma * s[i]);
    gb -= r * 2.0;
    let mut gd = DMatrix::from_fn(k, n, |i, _| 2.0 * gamma * s[i]);
    gd.gemm(-2.0, r, &m.transpose(), 1.0);
    (gb, gd)
}

/// `||(I - D) Y_hat Z^+ - B||_F^2 + gamma ||B 1 + D 1 - 1||^2`.
pub fn objective_f(b: &DMatrix<f64>, d: &DMatrix<f64>, y_hat: &DMatrix<f64>, z_pinv: &DMatrix<f64>, gamma: f64) -> f64 {
    let m = y_hat * z_pinv;
    smooth_value(&fit_residual(&m, b, d, &m), &row_gap(b, d), gamma)
}

/// Gradients of [`objective_f`] with respect to `B` and `D`.
pub fn grad_f(
    b: &DMatrix<f64>,
    d: &DMatrix<f64>,
    y_hat: &DMatrix<f64>,
    z_pinv: &DMatrix<f64>,
    gamma: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = y_hat * z_pinv;
    smooth_grad(&fit_residual(&m, b, d, &m), &row_gap(b, d), &m, gamma)
}

pub fn soft_threshold(x: f64, tau: f64) -> f64 {
    x.signum() * (x.abs() - tau).max(0.0)
}

/// Prox of `tau * |x|` restricted to `x >= 0`.
pub fn soft_threshold_one_sided(x: f64, tau: f64) -> f64 {
    (x - tau).max(0.0)
}

/// Projection onto the feasible set with an l1 shrinkage of `tau` on the
/// allowed off-diagonal entries of `D`; the diagonal is pinned to `c`.
pub fn prox_project(b: &DMatrix<f64>, d: &DMatrix<f64>, tau: f64, problem: &RecoveryProblem) -> (DMatrix<f64>, DMatrix<f64>) {
    let rows: Vec<usize> = (0..b.nrows()).collect();
    prox_rows(b, d, tau, &rows, &problem.allowed_b, &problem.allowed_d, &problem.c)
}

/// [`prox_project`] on a block whose local row `r` is global row `rows[r]`.
pub(crate) fn prox_rows(
    b: &DMatrix<f64>,
    d: &DMatrix<f64>,
    tau: f64,
    rows: &[usize],
    allowed_b: &Mask,
    allowed_d: &Mask,
    c: &DVector<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut pb = DMatrix::zeros(b.nrows(), b.ncols());
    let mut pd = DMatrix::zeros(d.nrows(), d.ncols());
    for (r, &i) in rows.iter().enumerate() {
        for j in 0..b.ncols() {
            if allowed_b.get(i, j) {
                pb[(r, j)] = b[(r, j)].max(0.0);
            }
        }
        for j in 0..d.ncols() {
            if j == i {
                pd[(r, j)] = c[i];
            } else if allowed_d.get(i, j) {
                pd[(r, j)] = soft_threshold_one_sided(d[(r, j)], tau);
            }
        }
    }
    (pb, pd)
}

fn power_iteration(dim: usize, apply: impl Fn(&DVector<f64>) -> DVector<f64>) -> f64 {
    if dim == 0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(dim, |i, _| 1.0 + 0.1 * ((i as f64 + 1.0) * 0.7548776662).fract());
    v /= v.norm();
    let mut lambda = 0.0;
    for it in 0..1000 {
        let w = apply(&v);
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if it >= 20 && (next - lambda).abs() <= 1e-9 * next {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Lipschitz constant of the gradient restricted to one row's free
/// variables: `2 lambda_max(G G^T + gamma 1 1^T)` with `G = [I; M]`.
pub(crate) fn lipschitz_masked(m: &DMatrix<f64>, gamma: f64, b_idx: &[usize], d_idx: &[usize]) -> f64 {
    let ns = m.ncols();
    let (kb, kd) = (b_idx.len(), d_idx.len());
    let apply = |v: &DVector<f64>| {
        let mut u = DVector::zeros(ns);
        for (a, &j) in b_idx.iter().enumerate() {
            u[j] += v[a];
        }
        for (a, &j) in d_idx.iter().enumerate() {
            u.axpy(v[kb + a], &m.row(j).transpose(), 1.0);
        }
        let total = gamma * v.sum();
        DVector::from_fn(kb + kd, |a, _| {
            let g = if a < kb { u[b_idx[a]] } else { m.row(d_idx[a - kb]).dot(&u.transpose()) };
            g + total
        })
    };
    2.0 * power_iteration(kb + kd, apply)
}

/// Lipschitz constant of `grad f` over all of `(B, D)`; `M = Y_hat Z^+`.
pub fn estimate_lipschitz(y_hat: &DMatrix<f64>, z_pinv: &DMatrix<f64>, gamma: f64) -> f64 {
    lipschitz_of(&(y_hat * z_pinv), gamma)
}

pub(crate) fn lipschitz_of(m: &DMatrix<f64>, gamma: f64) -> f64 {
    let (n, ns) = m.shape();
    let apply = |v: &DVector<f64>| {
        let vb = v.rows(0, ns);
        let vd = v.rows(ns, n);
        let u = vb + m.tr_mul(&vd);
        let mu = m * &u;
        let total = gamma * v.sum();
        let mut out = DVector::zeros(ns + n);
        out.rows_mut(0, ns).copy_from(&u);
        out.rows_mut(ns, n).copy_from(&mu);
        out.add_scalar(total)
    };
    2.0 * power_iteration(ns + n, apply)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>() - 0.3)
    }

    #[test]
    fn thresholds() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
        assert_eq!(soft_threshold_one_sided(-3.0, 1.0), 0.0);
        assert_eq!(soft_threshold_one_sided(0.5, 0.25), 0.25);
    }

    #[test]
    fn objective_zero_at_truth() {
        // M = (I - D)^-1 B for a stochastic pair gives a perfect fit
        let b = DMatrix::from_row_slice(2, 1, &[0.5, 0.2]);
        let d = DMatrix::from_row_slice(2, 2, &[0.25, 0.25, 0.4, 0.4]);
        let m = crate::linalg::solve_i_minus(&d, &b).unwrap();
        let i1 = DMatrix::identity(1, 1);
        assert!(objective_f(&b, &d, &m, &i1, 1e-3) < 1e-28);
        let (gb, gd) = grad_f(&b, &d, &m, &i1, 1e-3);
        assert!(gb.abs().max() < 1e-14 && gd.abs().max() < 1e-14);
    }

    #[test]
    fn lipschitz_matches_dense_hessian() {
        let m = random(5, 3, 4);
        let gamma = 0.3;
        // dense per-row Hessian 2 (G G^T + gamma 1 1^T)
        let mut g = DMatrix::zeros(8, 3);
        g.view_mut((0, 0), (3, 3)).copy_from(&DMatrix::identity(3, 3));
        g.view_mut((3, 0), (5, 3)).copy_from(&m);
        let h = (&g * g.transpose() + DMatrix::from_element(8, 8, gamma)) * 2.0;
        let exact = h.symmetric_eigenvalues().max();
        let est = lipschitz_of(&m, gamma);
        assert!((est - exact).abs() < 1e-6 * exact, "{est} vs {exact}");
        let all_b: Vec<usize> = (0..3).collect();
        let all_d: Vec<usize> = (0..5).collect();
        assert!((lipschitz_masked(&m, gamma, &all_b, &all_d) - exact).abs() < 1e-6 * exact);
        // principal submatrix
        let sub = lipschitz_masked(&m, gamma, &[1], &[0, 4]);
        let idx = [1usize, 3, 7];
        let hs = DMatrix::from_fn(3, 3, |a, b| h[(idx[a], idx[b])]);
        let exact_sub = hs.symmetric_eigenvalues().max();
        assert!((sub - exact_sub).abs() < 1e-6 * exact_sub);
    }

    #[test]
    fn prox_respects_masks_and_diagonal() {
        let y = random(3, 2, 1);
        let z = DMatrix::identity(2, 2);
        let mut ad = Mask::off_diagonal(3);
        ad.set(0, 1, false);
        let mut ab = Mask::full(3, 2);
        ab.set(2, 0, false);
        let p = RecoveryProblem::new(y, z, ad, ab, DVector::from_vec(vec![0.1, 0.2, 0.3]), super::super::RecoveryMode::Sparse)
            .unwrap();
        let b = DMatrix::from_element(3, 2, -0.5) + DMatrix::from_fn(3, 2, |i, j| (i + j) as f64);
        let d = DMatrix::from_element(3, 3, 0.7);
        let (pb, pd) = prox_project(&b, &d, 0.2, &p);
        assert_eq!(pb[(0, 0)], 0.0);
        assert_eq!(pb[(1, 1)], 1.5);
        assert_eq!(pb[(2, 0)], 0.0);
        assert_eq!(pd[(0, 1)], 0.0);
        assert!((pd[(0, 2)] - 0.5).abs() < 1e-15);
        assert_eq!(pd.diagonal().as_slice(), &[0.1, 0.2, 0.3]);
    }
}
