use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{BipartiteSupport, NetworkTopology};
use crate::error::{invalid, Error, Result};
use crate::linalg::{row_sums, spectral_norm};
use crate::matrix_io::rows;
use crate::rng::rng_from_seed;

const ROW_SUM_TOL: f64 = 1e-9;

/// Ordinary-agent rows of a trust matrix: `B` (ordinary <- stubborn) and
/// `D` (ordinary <- ordinary).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrustMatrixJson", into = "TrustMatrixJson")]
pub struct TrustMatrix {
    pub b: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct TrustMatrixJson {
    n_ord: usize,
    n_s: usize,
    #[serde(rename = "B", with = "rows")]
    b: DMatrix<f64>,
    #[serde(rename = "D", with = "rows")]
    d: DMatrix<f64>,
}

impl TryFrom<TrustMatrixJson> for TrustMatrix {
    type Error = Error;

    fn try_from(j: TrustMatrixJson) -> Result<Self> {
        // an empty B serializes as [] and loses its row count
        let b = if j.b.is_empty() { DMatrix::zeros(j.n_ord, j.n_s) } else { j.b };
        let d = if j.d.is_empty() { DMatrix::zeros(j.n_ord, j.n_ord) } else { j.d };
        let w = TrustMatrix::new(b, d)?;
        if w.n_ord() != j.n_ord || w.n_s() != j.n_s {
            return Err(invalid("declared n_ord/n_s do not match B and D"));
        }
        Ok(w)
    }
}

impl From<TrustMatrix> for TrustMatrixJson {
    fn from(w: TrustMatrix) -> Self {
        Self { n_ord: w.n_ord(), n_s: w.n_s(), b: w.b, d: w.d }
    }
}

impl TrustMatrix {
    pub fn new(b: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        if d.nrows() != d.ncols() {
            return Err(Error::DimensionMismatch { what: "D columns", expected: d.nrows(), got: d.ncols() });
        }
        if b.nrows() != d.nrows() {
            return Err(Error::DimensionMismatch { what: "B rows", expected: d.nrows(), got: b.nrows() });
        }
        if b.iter().chain(d.iter()).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("trust weights must be finite and nonnegative"));
        }
        Ok(Self { b, d })
    }

    pub fn n_ord(&self) -> usize {
        self.d.nrows()
    }

    pub fn n_s(&self) -> usize {
        self.b.ncols()
    }

    /// `max_i |(B 1 + D 1)_i - 1|`.
    pub fn row_sum_residual(&self) -> f64 {
        row_sum_residual(&self.b, &self.d)
    }

    pub fn spectral_norm_d(&self) -> f64 {
        spectral_norm(&self.d)
    }

    /// The full `n x n` matrix with stubborn agents first.
    pub fn full(&self) -> DMatrix<f64> {
        let (ns, no) = (self.n_s(), self.n_ord());
        let mut w = DMatrix::zeros(ns + no, ns + no);
        w.view_mut((0, 0), (ns, ns)).fill_with_identity();
        w.view_mut((ns, 0), (no, ns)).copy_from(&self.b);
        w.view_mut((ns, ns), (no, no)).copy_from(&self.d);
        w
    }
}

pub(crate) fn row_sum_residual(b: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    (row_sums(b) + row_sums(d))
        .iter()
        .fold(0.0, |acc: f64, s| acc.max((s - 1.0).abs()))
}

/// Draws i.i.d. uniform(0, 1] weights on the declared supports (zero
/// self-trust) and normalizes each row to sum to one.
pub fn build_trust_matrix(topology: &NetworkTopology, support: &BipartiteSupport, seed: u64) -> Result<TrustMatrix> {
    let n = topology.n_ord;
    if support.n_ord != n {
        return Err(Error::DimensionMismatch { what: "support rows", expected: n, got: support.n_ord });
    }
    let mut rng = rng_from_seed(seed);
    let mut b = DMatrix::zeros(n, support.n_s);
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut total = 0.0;
        for &j in support.neighbors(i) {
            let w = 1.0 - rng.random::<f64>();
            b[(i, j)] = w;
            total += w;
        }
        for j in topology.out_neighbors(i) {
            let w = 1.0 - rng.random::<f64>();
            d[(i, j)] = w;
            total += w;
        }
        if total == 0.0 {
            return Err(Error::Infeasible(format!("ordinary agent {i} has no neighbors")));
        }
        b.row_mut(i).scale_mut(1.0 / total);
        d.row_mut(i).scale_mut(1.0 / total);
    }
    TrustMatrix::new(b, d)
}

fn check_stochastic(b: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<()> {
    if b.nrows() != d.nrows() || d.nrows() != d.ncols() {
        return Err(invalid("inconsistent B/D shapes"));
    }
    let r = row_sum_residual(b, d);
    if r > ROW_SUM_TOL {
        return Err(invalid(format!("B 1 + D 1 != 1 (residual {r:e})")));
    }
    Ok(())
}

/// Moves `(B, D)` to another member of its equivalence class: rows are
/// scaled by `lambda` and the diagonal of `D` absorbs the difference so rows
/// still sum to one. A diagonal entry that would fall below zero is an error;
/// exactly zero is accepted.
pub fn apply_ambiguity(b: &DMatrix<f64>, d: &DMatrix<f64>, lambda: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_stochastic(b, d)?;
    let n = d.nrows();
    if lambda.len() != n {
        return Err(Error::DimensionMismatch { what: "lambda", expected: n, got: lambda.len() });
    }
    if lambda.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(invalid("lambda must be strictly positive"));
    }
    let mut b_t = b.clone();
    let mut d_t = d.clone();
    for i in 0..n {
        let l = lambda[i];
        let off_sum: f64 = (0..n).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
        let diag = 1.0 - l * (b.row(i).sum() + off_sum);
        if diag < -1e-12 {
            return Err(Error::AmbiguityOutOfClass { row: i, value: diag });
        }
        b_t.row_mut(i).scale_mut(l);
        d_t.row_mut(i).scale_mut(l);
        d_t[(i, i)] = diag.max(0.0);
    }
    Ok((b_t, d_t))
}

/// Canonical representative of an equivalence class, pinned by `diag(D') = c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeTrustPair {
    #[serde(rename = "B", with = "rows")]
    pub b: DMatrix<f64>,
    #[serde(rename = "D", with = "rows")]
    pub d: DMatrix<f64>,
    #[serde(with = "crate::matrix_io::vector")]
    pub c: DVector<f64>,
}

pub fn canonical_relative_trust(b: &DMatrix<f64>, d: &DMatrix<f64>, c: &DVector<f64>) -> Result<RelativeTrustPair> {
    check_stochastic(b, d)?;
    let n = d.nrows();
    if c.len() != n {
        return Err(Error::DimensionMismatch { what: "c", expected: n, got: c.len() });
    }
    if c.iter().any(|&ci| !(0.0..1.0).contains(&ci)) {
        return Err(invalid("diagonal target must lie in [0, 1)"));
    }
    let mut b_c = b.clone();
    let mut d_c = d.clone();
    for i in 0..n {
        let lambda_s = 1.0 - d[(i, i)];
        if lambda_s <= f64::EPSILON {
            return Err(Error::Singular(format!("diag(D)[{i}] = 1")));
        }
        let scale = (1.0 - c[i]) / lambda_s;
        b_c.row_mut(i).scale_mut(scale);
        d_c.row_mut(i).scale_mut(scale);
        d_c[(i, i)] = c[i];
    }
    Ok(RelativeTrustPair { b: b_c, d: d_c, c: c.clone() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub row_sum_residual: f64,
    pub nonnegative: bool,
    /// Ordinary agents with no trust in any stubborn agent.
    pub rows_without_stubborn: Vec<usize>,
    pub b_within_support: bool,
    pub d_within_topology: bool,
    pub weakly_connected: bool,
    pub strongly_connected: bool,
    pub spectral_norm_d: f64,
    pub passed: bool,
}

/// Report-only check of the structural assumptions. Weak connectivity is
/// the pass criterion; strong connectivity is reported alongside.
pub fn validate_trust_matrix(w: &TrustMatrix, topology: &NetworkTopology, support: &BipartiteSupport) -> ValidationReport {
    let n = w.n_ord();
    let row_sum_residual = w.row_sum_residual();
    let nonnegative = w.b.iter().chain(w.d.iter()).all(|&v| v >= 0.0);
    let rows_without_stubborn: Vec<usize> = (0..n).filter(|&i| w.b.row(i).iter().all(|&v| v <= 0.0)).collect();

    let shapes_ok = topology.n_ord == n && support.n_ord == n && support.n_s == w.n_s();
    let b_within_support = shapes_ok && {
        let m = support.mask();
        (0..n).all(|i| (0..w.n_s()).all(|j| w.b[(i, j)] == 0.0 || m.get(i, j)))
    };
    let d_within_topology = shapes_ok
        && (0..n).all(|i| (0..n).all(|j| i == j || w.d[(i, j)] == 0.0 || topology.has_edge(i, j)));

    let weakly_connected = topology.is_weakly_connected();
    let strongly_connected = topology.is_strongly_connected();
    let spectral_norm_d = w.spectral_norm_d();

    let passed = row_sum_residual <= ROW_SUM_TOL
        && nonnegative
        && rows_without_stubborn.is_empty()
        && b_within_support
        && d_within_topology
        && weakly_connected
        && spectral_norm_d < 1.0;

    ValidationReport {
        row_sum_residual,
        nonnegative,
        rows_without_stubborn,
        b_within_support,
        d_within_topology,
        weakly_connected,
        strongly_connected,
        spectral_norm_d,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_network, place_stubborn, ModelTag, NetworkModel, Placement};

    fn m(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    /// Largest singular value by power iteration on `D^T D`.
    fn power_norm(d: &DMatrix<f64>) -> f64 {
        let mut v = DVector::from_element(d.ncols(), 1.0).normalize();
        let mut sigma = 0.0;
        for _ in 0..5000 {
            let w = d.transpose() * (d * &v);
            let nrm = w.norm();
            if nrm == 0.0 {
                return 0.0;
            }
            v = w / nrm;
            sigma = nrm.sqrt();
        }
        sigma
    }

    fn instance(seed: u64) -> (NetworkTopology, BipartiteSupport, TrustMatrix) {
        let topo = gen_network(NetworkModel::ErdosRenyi { p: 0.1 }, 60, seed).unwrap();
        let sup = place_stubborn(60, 30, Placement::DRegular { d: 5 }, seed + 1).unwrap();
        let w = build_trust_matrix(&topo, &sup, seed + 2).unwrap();
        (topo, sup, w)
    }

    #[test]
    fn single_stubborn_neighbor_gets_full_weight() {
        let topo = NetworkTopology::new(2, [], ModelTag::Ingested).unwrap();
        let sup = BipartiteSupport::new(2, 1, vec![vec![0], vec![0]]).unwrap();
        let w = build_trust_matrix(&topo, &sup, 9).unwrap();
        assert_eq!(w.b[(0, 0)], 1.0);
        assert_eq!(w.b[(1, 0)], 1.0);
    }

    #[test]
    fn isolated_agent_is_an_error() {
        let topo = NetworkTopology::new(2, [], ModelTag::Ingested).unwrap();
        let sup = BipartiteSupport::new(2, 1, vec![vec![0], vec![]]).unwrap();
        assert!(matches!(build_trust_matrix(&topo, &sup, 0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn generated_matrix_is_stochastic_and_contractive() {
        let (topo, sup, w) = instance(4);
        assert!(w.row_sum_residual() < 1e-12);
        assert!(w.d.diagonal().iter().all(|&v| v == 0.0));
        let sn = power_norm(&w.d);
        assert!(sn < 1.0, "power-iteration norm {sn}");
        assert!((sn - w.spectral_norm_d()).abs() < 1e-6);
        let report = validate_trust_matrix(&w, &topo, &sup);
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn validation_flags_missing_stubborn_trust_and_disconnection() {
        let (topo, sup, mut w) = instance(5);
        let total: f64 = w.b.row(3).sum();
        w.b.row_mut(3).fill(0.0);
        let self_w = w.d[(3, 3)] + total;
        w.d[(3, 3)] = self_w;
        let r = validate_trust_matrix(&w, &topo, &sup);
        assert_eq!(r.rows_without_stubborn, vec![3]);
        assert!(!r.passed);

        // two cliques {0,1,2} and {3,4,5}
        let edges = [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)];
        let split = NetworkTopology::new(6, edges, ModelTag::Ingested).unwrap();
        assert!(!split.is_weakly_connected());
        let sup = place_stubborn(6, 2, Placement::DRegular { d: 1 }, 0).unwrap();
        let w = build_trust_matrix(&split, &sup, 0).unwrap();
        let r = validate_trust_matrix(&w, &split, &sup);
        assert!(!r.weakly_connected && !r.strongly_connected && !r.passed);
    }

    #[test]
    fn one_way_chain_is_weak_but_not_strong() {
        let chain = NetworkTopology::new(3, [(0, 1), (1, 2)], ModelTag::Ingested).unwrap();
        assert!(chain.is_weakly_connected());
        assert!(!chain.is_strongly_connected());
    }

    #[test]
    fn ambiguity_scalar_cases() {
        let b = m(&[&[0.5]]);
        let d = m(&[&[0.5]]);
        let (b1, d1) = apply_ambiguity(&b, &d, &DVector::from_element(1, 1.0)).unwrap();
        assert_eq!((b1, d1), (b.clone(), d.clone()));

        let (b2, d2) = apply_ambiguity(&b, &d, &DVector::from_element(1, 2.0)).unwrap();
        assert_eq!(b2[(0, 0)], 1.0);
        assert_eq!(d2[(0, 0)], 0.0);
        // (1 - 0.5)^-1 * 0.5 = 1 = (1 - 0)^-1 * 1
        assert_eq!(b[(0, 0)] / (1.0 - d[(0, 0)]), 1.0);
        assert_eq!(b2[(0, 0)] / (1.0 - d2[(0, 0)]), 1.0);

        let err = apply_ambiguity(&b, &d, &DVector::from_element(1, 3.0)).unwrap_err();
        match err {
            Error::AmbiguityOutOfClass { value, .. } => assert!((value + 0.5).abs() < 1e-15),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn canonical_scalar_cases() {
        let b = m(&[&[0.5]]);
        let d = m(&[&[0.5]]);
        let p = canonical_relative_trust(&b, &d, &DVector::zeros(1)).unwrap();
        assert_eq!(p.b[(0, 0)], 1.0);
        assert_eq!(p.d[(0, 0)], 0.0);

        let c = DVector::from_element(1, 0.5);
        let same = canonical_relative_trust(&b, &d, &c).unwrap();
        assert_eq!(same.b, b);
        assert_eq!(same.d, d);

        let stuck = m(&[&[1.0]]);
        assert!(canonical_relative_trust(&DMatrix::zeros(1, 1), &stuck, &DVector::zeros(1)).is_err());
        assert!(canonical_relative_trust(&b, &d, &DVector::from_element(1, 1.0)).is_err());
    }

    #[test]
    fn json_round_trip_uses_row_major_layout() {
        let w = TrustMatrix::new(m(&[&[0.25, 0.0], &[0.0, 1.0]]), m(&[&[0.0, 0.75], &[0.0, 0.0]])).unwrap();
        let s = serde_json::to_string(&w).unwrap();
        assert!(s.contains("\"B\":[[0.25,0.0],[0.0,1.0]]"), "{s}");
        let back: TrustMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, w);
        assert!(serde_json::from_str::<TrustMatrix>(r#"{"n_ord":3,"n_s":2,"B":[[1,0]],"D":[[0]]}"#).is_err());
    }
}
