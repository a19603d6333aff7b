//! Identifiability certificates.
//!
//! Row `i` of the recovery problem is a linear system in the stacked data
//! matrix `A = [Y_hat^T Z^T]` restricted to the columns of the candidate
//! ordinary neighbors `S_i` and the stubborn neighbors `Omega_i`. Rank and
//! spark checks certify uniqueness on a given instance; the expander tools
//! and the budget formulas describe when random placements work.

mod expander;
mod theory;

pub use expander::{
    is_expander, rip1_check, rip1_probe, row_deletion_degree_check, ExpanderSpec, ExpanderVerdict, Rip1Report,
    RowDeletionReport, MAX_EXPANDER_LEFT,
};
pub use theory::{
    asymptotic_budget, binary_entropy, corollary1_margin, theorem1_budget_condition, theorem1_failure_bound,
    theorem1_min_beta, theorem1_ratio, theorem1_value_condition, FailureBound,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::combin::for_each_combination;
use crate::dynamics::SteadyStateData;
use crate::error::{invalid, Error, Result};
use crate::mask::Mask;

pub const MAX_SPARK_SUPPORT: usize = 20;
pub const MAX_SPARK_K: usize = 5;

/// `K x (n_ord + n_s)` matrix `[Y_hat^T Z^T]`: column `j < n_ord` belongs to
/// ordinary agent `j`, column `n_ord + j` to stubborn agent `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedDataMatrix {
    a: DMatrix<f64>,
    n_ord: usize,
    n_s: usize,
    rel_tol: Option<f64>,
}

impl StackedDataMatrix {
    pub fn new(y_hat: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<Self> {
        if y_hat.ncols() != z.ncols() {
            return Err(Error::DimensionMismatch { what: "Z columns", expected: y_hat.ncols(), got: z.ncols() });
        }
        let (n_ord, n_s, k) = (y_hat.nrows(), z.nrows(), z.ncols());
        let mut a = DMatrix::zeros(k, n_ord + n_s);
        a.view_mut((0, 0), (k, n_ord)).copy_from(&y_hat.transpose());
        a.view_mut((0, n_ord), (k, n_s)).copy_from(&z.transpose());
        Ok(Self { a, n_ord, n_s, rel_tol: None })
    }

    pub fn from_data(data: &SteadyStateData) -> Result<Self> {
        Self::new(&data.y_hat, &data.z)
    }

    /// Singular values below `rel_tol * sigma_max` count as zero; the default
    /// is `max(rows, cols) * eps`.
    pub fn with_tolerance(mut self, rel_tol: f64) -> Self {
        self.rel_tol = Some(rel_tol);
        self
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn n_ord(&self) -> usize {
        self.n_ord
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    fn columns(&self, s: &[usize], omega: &[usize]) -> Result<Vec<usize>> {
        if let Some(&j) = s.iter().find(|&&j| j >= self.n_ord) {
            return Err(invalid(format!("ordinary index {j} out of range")));
        }
        if let Some(&j) = omega.iter().find(|&&j| j >= self.n_s) {
            return Err(invalid(format!("stubborn index {j} out of range")));
        }
        Ok(s.iter().copied().chain(omega.iter().map(|&j| self.n_ord + j)).collect())
    }

    /// Numerical rank of the columns for ordinary agents `s` and stubborn agents `omega`.
    pub fn rank_of(&self, s: &[usize], omega: &[usize]) -> Result<usize> {
        let cols = self.columns(s, omega)?;
        if cols.is_empty() {
            return Err(invalid("empty column selection"));
        }
        let sub = self.a.select_columns(&cols);
        Ok(match self.rel_tol {
            None => crate::linalg::numerical_rank(&sub),
            Some(tol) => {
                let sv = sub.singular_values();
                let smax = sv.max();
                sv.iter().filter(|&&s| s > tol * smax).count()
            }
        })
    }
}

/// Whether the columns `S_i ∪ Omega_i` have rank at least `|S_i| + |Omega_i| - 1`.
/// Here `S_i` includes the row's own index, whose coefficient is pinned.
pub fn check_rank_full(a: &StackedDataMatrix, s: &[usize], omega: &[usize]) -> Result<bool> {
    let rank = a.rank_of(s, omega)?;
    Ok(rank + 1 >= s.len() + omega.len())
}

/// Searches for a subset `T` of the off-diagonal candidates `S_i` (own index
/// excluded) with `|T| = min(2 k_i, |S_i|)` whose columns together with
/// `Omega_i` are linearly dependent. Smaller subsets need no check: a
/// dependent set stays dependent when columns are added.
pub fn spark_witness(a: &StackedDataMatrix, s: &[usize], omega: &[usize], k: usize) -> Result<Option<Vec<usize>>> {
    if s.len() > MAX_SPARK_SUPPORT || k > MAX_SPARK_K {
        return Err(Error::InstanceTooLarge(format!(
            "spark check needs |S_i| <= {MAX_SPARK_SUPPORT} and k <= {MAX_SPARK_K} (got {}, {k})",
            s.len()
        )));
    }
    let size = (2 * k).min(s.len());
    if size == 0 && omega.is_empty() {
        return Ok(None);
    }
    let mut witness = None;
    let mut failure = None;
    for_each_combination(s.len(), size, |sub| {
        let t: Vec<usize> = sub.iter().map(|&p| s[p]).collect();
        match a.rank_of(&t, omega) {
            Ok(rank) if rank >= omega.len() + t.len() => true,
            Ok(_) => {
                witness = Some(t);
                false
            }
            Err(e) => {
                failure = Some(e);
                false
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(witness),
    }
}

/// Unique `k_i`-sparse solution certificate for row `i`.
pub fn check_spark_partial(a: &StackedDataMatrix, s: &[usize], omega: &[usize], k: usize) -> Result<bool> {
    Ok(spark_witness(a, s, omega, k)?.is_none())
}

/// Outcome of a per-row check, serialized by the `check` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowCheck {
    pub row: usize,
    pub holds: bool,
    pub rank: usize,
    pub required: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<usize>>,
}

pub fn rank_report(a: &StackedDataMatrix, allowed_d: &Mask, allowed_b: &Mask) -> Result<Vec<RowCheck>> {
    (0..a.n_ord())
        .map(|i| {
            let mut s: Vec<usize> = allowed_d.row_indices(i).into_iter().filter(|&j| j != i).collect();
            s.push(i);
            let omega = allowed_b.row_indices(i);
            let rank = a.rank_of(&s, &omega)?;
            let required = (s.len() + omega.len()).saturating_sub(1);
            Ok(RowCheck { row: i, holds: rank >= required, rank, required, witness: None })
        })
        .collect()
}

pub fn spark_report(a: &StackedDataMatrix, allowed_d: &Mask, allowed_b: &Mask, k: &[usize]) -> Result<Vec<RowCheck>> {
    if k.len() != a.n_ord() {
        return Err(Error::DimensionMismatch { what: "row sparsities", expected: a.n_ord(), got: k.len() });
    }
    (0..a.n_ord())
        .map(|i| {
            let s: Vec<usize> = allowed_d.row_indices(i).into_iter().filter(|&j| j != i).collect();
            let omega = allowed_b.row_indices(i);
            let witness = spark_witness(a, &s, &omega, k[i])?;
            let size = (2 * k[i]).min(s.len());
            let (rank, required) = match &witness {
                Some(t) => (a.rank_of(t, &omega)?, omega.len() + t.len()),
                None => (omega.len() + size, omega.len() + size),
            };
            Ok(RowCheck { row: i, holds: witness.is_none(), rank, required, witness })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn stacked_layout() {
        let y = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let z = DMatrix::from_row_slice(1, 3, &[7.0, 8.0, 9.0]);
        let a = StackedDataMatrix::new(&y, &z).unwrap();
        assert_eq!(a.matrix().shape(), (3, 3));
        assert_eq!(a.matrix().column(1).as_slice(), &[4.0, 5.0, 6.0]);
        assert_eq!(a.matrix().column(2).as_slice(), &[7.0, 8.0, 9.0]);
        assert!(StackedDataMatrix::new(&y, &DMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn rank_identity_and_duplicates() {
        // A = I with K = 4 columns split 2 + 2
        let y = DMatrix::from_fn(2, 4, |i, j| if i == j { 1.0 } else { 0.0 });
        let z = DMatrix::from_fn(2, 4, |i, j| if i + 2 == j { 1.0 } else { 0.0 });
        let a = StackedDataMatrix::new(&y, &z).unwrap();
        assert!(check_rank_full(&a, &[0, 1], &[0, 1]).unwrap());
        assert!(check_rank_full(&a, &[], &[0]).is_ok_and(|v| v));
        assert!(check_rank_full(&a, &[], &[]).is_err());

        // duplicate columns: rank 2 of 4 selected
        let y = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let z = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let a = StackedDataMatrix::new(&y, &z).unwrap();
        assert!(!check_rank_full(&a, &[0, 1], &[0, 1]).unwrap());
    }

    #[test]
    fn rank_generic_gaussian() {
        for seed in 0..100 {
            let ns = 6;
            let z = gaussian(ns, ns, seed);
            let y = gaussian(10, ns, seed + 1000);
            let a = StackedDataMatrix::new(&y, &z).unwrap();
            let omega: Vec<usize> = (0..ns).collect();
            assert!(check_rank_full(&a, &[3], &omega).unwrap());
        }
    }

    #[test]
    fn spark_cases() {
        let z = gaussian(4, 8, 1);
        let y = gaussian(5, 8, 2);
        let a = StackedDataMatrix::new(&y, &z).unwrap();
        assert!(check_spark_partial(&a, &[0, 1, 2, 3, 4], &[0, 1], 0).unwrap());

        // ordinary agents 1 and 2 with identical responses
        let mut y = gaussian(5, 8, 3);
        let row = y.row(1).into_owned();
        y.set_row(2, &row);
        let mut y3 = y.clone();
        y3.set_row(3, &row);
        assert!(check_rank_full(&StackedDataMatrix::new(&y, &z).unwrap(), &[1, 2, 3], &[0, 1, 2, 3]).unwrap());
        assert!(!check_rank_full(&StackedDataMatrix::new(&y3, &z).unwrap(), &[1, 2, 3], &[0, 1, 2, 3]).unwrap());
        let a = StackedDataMatrix::new(&y, &z).unwrap();
        let s = [0, 1, 2, 3];
        assert!(!check_spark_partial(&a, &s, &[0], 1).unwrap());
        assert_eq!(spark_witness(&a, &s, &[0], 1).unwrap(), Some(vec![1, 2]));
        assert!(check_spark_partial(&a, &[0, 1, 3], &[0], 1).unwrap());

        let big: Vec<usize> = (0..21).collect();
        let y = gaussian(21, 8, 4);
        let a = StackedDataMatrix::new(&y, &z).unwrap();
        assert!(matches!(check_spark_partial(&a, &big, &[0], 1), Err(Error::InstanceTooLarge(_))));
        assert!(matches!(check_spark_partial(&a, &[0], &[0], 6), Err(Error::InstanceTooLarge(_))));
    }

    #[test]
    fn reports_per_row() {
        let z = gaussian(3, 6, 5);
        let y = gaussian(4, 6, 6);
        let a = StackedDataMatrix::new(&y, &z).unwrap();
        let rows = rank_report(&a, &Mask::off_diagonal(4), &Mask::full(4, 3)).unwrap();
        // 4 + 3 columns of a rank-6 matrix
        assert!(rows.iter().all(|r| r.holds && r.required == 6));
        let rows = spark_report(&a, &Mask::off_diagonal(4), &Mask::full(4, 3), &[1, 1, 1, 1]).unwrap();
        assert!(rows.iter().all(|r| r.holds));
        assert!(spark_report(&a, &Mask::off_diagonal(4), &Mask::full(4, 3), &[1]).is_err());
    }
}
