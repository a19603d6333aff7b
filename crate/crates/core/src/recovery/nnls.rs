use nalgebra::{DMatrix, DVector};

fn passive_lstsq(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let cols: Vec<usize> = (0..a.ncols()).filter(|&j| passive[j]).collect();
    let ap = a.select_columns(&cols);
    let sol = ap
        .svd(true, true)
        .solve(b, f64::EPSILON * 1e2)
        .unwrap_or_else(|_| DVector::zeros(cols.len()));
    let mut s = DVector::zeros(a.ncols());
    for (k, &j) in cols.iter().enumerate() {
        s[j] = sol[k];
    }
    s
}

/// Lawson-Hanson active-set solution of `min ||A x - b||` over `x >= 0`.
/// Returns the minimizer and its residual norm.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let scale = a.abs().max().max(1.0) * b.amax().max(1.0);
    let tol = 10.0 * f64::EPSILON * scale * (a.nrows().max(n) as f64);

    for _ in 0..3 * n + 3 {
        let w = a.tr_mul(&(b - a * &x));
        let Some(j) = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&p, &q| w[p].total_cmp(&w[q]))
        else {
            break;
        };
        passive[j] = true;
        for _ in 0..3 * n + 3 {
            let s = passive_lstsq(a, b, &passive);
            if (0..n).filter(|&k| passive[k]).all(|k| s[k] > 0.0) {
                x = s;
                break;
            }
            let alpha = (0..n)
                .filter(|&k| passive[k] && s[k] <= 0.0)
                .map(|k| x[k] / (x[k] - s[k]))
                .fold(f64::INFINITY, f64::min);
            x += (s - &x) * alpha;
            for k in 0..n {
                if passive[k] && x[k] <= tol {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
        }
    }
    let res = (b - a * &x).norm();
    (x, res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combin::for_each_combination;
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, StandardNormal};

    /// Best unconstrained least squares over every support whose solution is nonnegative.
    fn enumerate(a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
        let n = a.ncols();
        let mut best = b.norm();
        for k in 1..=n {
            for_each_combination(n, k, |cols| {
                let ap = a.select_columns(cols);
                if let Ok(s) = ap.clone().svd(true, true).solve(b, 1e-12) {
                    if s.iter().all(|&v| v >= 0.0) {
                        best = best.min((b - ap * s).norm());
                    }
                }
                true
            });
        }
        best
    }

    #[test]
    fn matches_support_enumeration() {
        let mut rng = rng_from_seed(5);
        for trial in 0..40 {
            let (m, n) = (6, 1 + trial % 5);
            let a = DMatrix::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng));
            let b = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
            let (x, res) = nnls(&a, &b);
            assert!(x.iter().all(|&v| v >= 0.0));
            assert!((res - enumerate(&a, &b)).abs() < 1e-9, "trial {trial}");
            // KKT: gradient nonpositive on zeros, zero on the support
            let w = a.tr_mul(&(&b - &a * &x));
            for k in 0..n {
                if x[k] > 0.0 {
                    assert!(w[k].abs() < 1e-9);
                } else {
                    assert!(w[k] < 1e-9);
                }
            }
        }
    }

    #[test]
    fn exact_nonnegative_solution() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let x0 = DVector::from_vec(vec![0.3, 0.7]);
        let (x, res) = nnls(&a, &(&a * &x0));
        assert!((x - x0).norm() < 1e-12 && res < 1e-12);
        let (x, _) = nnls(&a, &DVector::from_vec(vec![-1.0, -1.0, -2.0]));
        assert_eq!(x, DVector::zeros(2));
    }
}
