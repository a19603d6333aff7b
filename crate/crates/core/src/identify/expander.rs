use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::theory::corollary1_margin;
use crate::combin::for_each_combination;
use crate::error::{invalid, Error, Result};
use crate::graph::BipartiteSupport;
use crate::linalg::solve_i_minus;
use crate::rng::rng_from_seed;

pub const MAX_EXPANDER_LEFT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpanderVerdict {
    pub is_expander: bool,
    /// Largest left subset size examined, `floor(alpha n)`.
    pub max_subset: usize,
    /// First violating left subset with its edge and neighbor counts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_edges: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_neighbors: Option<usize>,
}

fn subset_limit(alpha: f64, n: usize) -> usize {
    ((alpha * n as f64 + 1e-9).floor() as usize).min(n)
}

/// Exhaustively checks `delta |E(S)| <= |N(S)|` for every left subset `S`
/// (ordinary agents) with `|S| <= alpha n_ord`.
pub fn is_expander(support: &BipartiteSupport, alpha: f64, delta: f64) -> Result<ExpanderVerdict> {
    if !(alpha > 0.0 && alpha <= 1.0) || !(delta > 0.0 && delta <= 1.0) {
        return Err(invalid("alpha and delta must lie in (0, 1]"));
    }
    let n = support.n_ord;
    if n > MAX_EXPANDER_LEFT {
        return Err(Error::InstanceTooLarge(format!("{n} left vertices (limit {MAX_EXPANDER_LEFT})")));
    }
    let max_subset = subset_limit(alpha, n);
    let mut seen = vec![usize::MAX; support.n_s];
    let mut stamp = 0usize;
    let mut witness = None;
    for size in 1..=max_subset {
        let done = for_each_combination(n, size, |s| {
            stamp += 1;
            let mut edges = 0;
            let mut nbrs = 0;
            for &v in s {
                edges += support.degree(v);
                for &r in support.neighbors(v) {
                    if seen[r] != stamp {
                        seen[r] = stamp;
                        nbrs += 1;
                    }
                }
            }
            if delta * edges as f64 > nbrs as f64 + 1e-12 {
                witness = Some((s.to_vec(), edges, nbrs));
                return false;
            }
            true
        });
        if !done {
            break;
        }
    }
    Ok(match witness {
        None => ExpanderVerdict { is_expander: true, max_subset, witness: None, witness_edges: None, witness_neighbors: None },
        Some((s, e, nb)) => ExpanderVerdict {
            is_expander: false,
            max_subset,
            witness: Some(s),
            witness_edges: Some(e),
            witness_neighbors: Some(nb),
        },
    })
}

/// Parameters of a nonnegative matrix with expander support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpanderSpec {
    pub alpha: f64,
    pub delta: f64,
    pub d_l: f64,
    pub d_u: f64,
    pub a_min: f64,
    pub a_max: f64,
}

impl ExpanderSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) || !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(invalid("alpha and delta must lie in (0, 1]"));
        }
        if !(self.d_l <= self.d_u) || !(self.a_min > 0.0 && self.a_min <= self.a_max) {
            return Err(invalid("need d_l <= d_u and 0 < a_min <= a_max"));
        }
        Ok(())
    }

    /// Degree and entry bounds read off `A` (rows: right vertices, columns: left vertices).
    pub fn from_matrix(a: &DMatrix<f64>, alpha: f64, delta: f64) -> Result<Self> {
        let degrees: Vec<usize> = a.column_iter().map(|c| c.iter().filter(|&&v| v != 0.0).count()).collect();
        let nz: Vec<f64> = a.iter().copied().filter(|&v| v != 0.0).collect();
        if nz.iter().any(|&v| v < 0.0) {
            return Err(invalid("matrix must be nonnegative"));
        }
        let spec = Self {
            alpha,
            delta,
            d_l: degrees.iter().copied().min().unwrap_or(0) as f64,
            d_u: degrees.iter().copied().max().unwrap_or(0) as f64,
            a_min: nz.iter().copied().fold(f64::INFINITY, f64::min),
            a_max: nz.iter().copied().fold(0.0, f64::max),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `a_min delta d_l - a_max (d_u - delta d_l)`.
    pub fn lower_constant(&self) -> f64 {
        self.a_min * self.delta * self.d_l - self.a_max * (self.d_u - self.delta * self.d_l)
    }

    /// `d_u a_max`.
    pub fn upper_constant(&self) -> f64 {
        self.d_u * self.a_max
    }

    pub fn margin(&self) -> f64 {
        corollary1_margin(self.a_min, self.a_max, self.d_l, self.d_u, self.delta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rip1Report {
    pub trials: usize,
    pub sparsity: usize,
    pub lower_constant: f64,
    pub upper_constant: f64,
    pub lower_violations: usize,
    pub upper_violations: usize,
    /// Extremes of `||A x||_1 / ||x||_1` over the samples.
    pub min_ratio: f64,
    pub max_ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inverse_bound: Option<f64>,
    pub inverse_violations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inverse_min_ratio: Option<f64>,
}

/// Left vertices are the columns of `A`.
fn column_support(a: &DMatrix<f64>) -> Result<BipartiteSupport> {
    let rows = (0..a.ncols())
        .map(|j| (0..a.nrows()).filter(|&r| a[(r, j)] != 0.0).collect())
        .collect();
    BipartiteSupport::new(a.ncols(), a.nrows(), rows)
}

/// Monte-Carlo check of the RIP-1 sandwich on `floor(alpha n)`-sparse
/// Gaussian vectors; the support of `A` must first pass [`is_expander`].
/// With `d_prime`, also checks `margin ||x||_1 <= ||A (I - D')^-T x||_1`.
pub fn rip1_check(
    a: &DMatrix<f64>,
    spec: &ExpanderSpec,
    trials: usize,
    seed: u64,
    d_prime: Option<&DMatrix<f64>>,
) -> Result<Rip1Report> {
    spec.validate()?;
    let verdict = is_expander(&column_support(a)?, spec.alpha, spec.delta)?;
    if !verdict.is_expander {
        return Err(Error::Precondition(format!(
            "support is not an (alpha, delta) expander; witness {:?}",
            verdict.witness.unwrap_or_default()
        )));
    }
    rip1_probe(a, spec, trials, seed, d_prime)
}

/// [`rip1_check`] without certifying the support first.
pub fn rip1_probe(
    a: &DMatrix<f64>,
    spec: &ExpanderSpec,
    trials: usize,
    seed: u64,
    d_prime: Option<&DMatrix<f64>>,
) -> Result<Rip1Report> {
    spec.validate()?;
    let n = a.ncols();
    if n == 0 {
        return Err(invalid("matrix has no columns"));
    }
    let inverse = match d_prime {
        Some(dp) => {
            if dp.shape() != (n, n) {
                return Err(Error::DimensionMismatch { what: "D'", expected: n, got: dp.nrows() });
            }
            // (I - D')^-T = ((I - D')^T)^-1
            let it = solve_i_minus(&dp.transpose(), &DMatrix::identity(n, n))?;
            Some(a * it)
        }
        None => None,
    };
    let k = subset_limit(spec.alpha, n).max(1);
    let (lo, hi) = (spec.lower_constant(), spec.upper_constant());
    let margin = spec.margin();
    let mut rng = rng_from_seed(seed);
    let mut report = Rip1Report {
        trials,
        sparsity: k,
        lower_constant: lo,
        upper_constant: hi,
        lower_violations: 0,
        upper_violations: 0,
        min_ratio: f64::INFINITY,
        max_ratio: 0.0,
        inverse_bound: inverse.as_ref().map(|_| margin),
        inverse_violations: 0,
        inverse_min_ratio: inverse.as_ref().map(|_| f64::INFINITY),
    };
    for _ in 0..trials {
        let cols = index::sample(&mut rng, n, k);
        let mut x = DVector::zeros(n);
        for j in cols.iter() {
            x[j] = StandardNormal.sample(&mut rng);
        }
        let l1 = x.lp_norm(1);
        if l1 == 0.0 {
            continue;
        }
        let ratio = (a * &x).lp_norm(1) / l1;
        let tol = 1e-12 * hi.max(1.0);
        report.min_ratio = report.min_ratio.min(ratio);
        report.max_ratio = report.max_ratio.max(ratio);
        if ratio < lo - tol {
            report.lower_violations += 1;
        }
        if ratio > hi + tol {
            report.upper_violations += 1;
        }
        if let Some(p) = &inverse {
            let r = (p * &x).lp_norm(1) / l1;
            if r < margin - tol {
                report.inverse_violations += 1;
            }
            report.inverse_min_ratio = report.inverse_min_ratio.map(|m| m.min(r));
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowDeletionReport {
    pub d: usize,
    pub trials: usize,
    pub successes: usize,
    /// Fraction of trials in which every one of the `n_ord` subgraphs kept
    /// all left degrees in `[d - 1, d]`.
    pub frequency: f64,
    /// `1 - n^2 (d - 1) (d / n_s)^4`.
    pub analytic_bound: f64,
    /// `1 - n^2 C(d, 2) d (d - 1) / (n_s (n_s - 1))`: union bound over the
    /// pairs of neighbors that could both be deleted.
    pub union_bound: f64,
}

/// Monte-Carlo estimate of the probability that, for each of the `n_ord`
/// subgraphs obtained by deleting `d` uniformly random stubborn agents, every
/// ordinary agent loses at most one stubborn neighbor.
pub fn row_deletion_degree_check(support: &BipartiteSupport, trials: usize, seed: u64) -> Result<RowDeletionReport> {
    let d = support
        .regular_degree()
        .ok_or_else(|| Error::Precondition("support is not d-regular".into()))?;
    let (n, ns) = (support.n_ord, support.n_s);
    if d > ns {
        return Err(invalid("degree exceeds the number of stubborn agents"));
    }
    let mut rng = rng_from_seed(seed);
    let mut deleted = vec![false; ns];
    let mut successes = 0;
    for _ in 0..trials {
        let mut ok = true;
        for _ in 0..n {
            deleted.iter_mut().for_each(|v| *v = false);
            for r in index::sample(&mut rng, ns, d).iter() {
                deleted[r] = true;
            }
            if (0..n).any(|i| support.neighbors(i).iter().filter(|&&r| deleted[r]).count() > 1) {
                ok = false;
            }
        }
        successes += ok as usize;
    }
    let (nf, df) = (n as f64, d as f64);
    Ok(RowDeletionReport {
        d,
        trials,
        successes,
        frequency: if trials == 0 { 0.0 } else { successes as f64 / trials as f64 },
        analytic_bound: 1.0 - nf * nf * (df - 1.0) * (df / ns as f64).powi(4),
        union_bound: if ns < 2 {
            0.0
        } else {
            let nsf = ns as f64;
            1.0 - nf * nf * 0.5 * df * (df - 1.0) * df * (df - 1.0) / (nsf * (nsf - 1.0))
        },
    })
}
