use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{BipartiteSupport, ModelTag, NetworkTopology};
use crate::error::{invalid, Result};
use crate::rng::rng_from_seed;

/// Random graph families. All are generated undirected and then every
/// undirected edge becomes a pair of directed edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum NetworkModel {
    #[serde(rename = "ER")]
    ErdosRenyi { p: f64 },
    /// Preferential attachment, `m` edges per arriving node.
    #[serde(rename = "BA")]
    BarabasiAlbert { m: usize },
    /// Ring lattice with `b` neighbors on each side, each lattice edge rewired
    /// with probability `p_rewire`.
    #[serde(rename = "WS")]
    WattsStrogatz { b: usize, p_rewire: f64 },
}

impl NetworkModel {
    pub fn tag(&self) -> ModelTag {
        match self {
            NetworkModel::ErdosRenyi { .. } => ModelTag::ErdosRenyi,
            NetworkModel::BarabasiAlbert { .. } => ModelTag::BarabasiAlbert,
            NetworkModel::WattsStrogatz { .. } => ModelTag::WattsStrogatz,
        }
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("{name} = {p} is not a probability")));
    }
    Ok(())
}

pub fn gen_network(model: NetworkModel, n_ord: usize, seed: u64) -> Result<NetworkTopology> {
    if n_ord < 2 {
        return Err(invalid("need at least two ordinary agents"));
    }
    let mut rng = rng_from_seed(seed);
    let mut undirected: BTreeSet<(usize, usize)> = BTreeSet::new();

    match model {
        NetworkModel::ErdosRenyi { p } => {
            check_probability("p", p)?;
            for i in 0..n_ord {
                for j in (i + 1)..n_ord {
                    if rng.random_bool(p) {
                        undirected.insert((i, j));
                    }
                }
            }
        }
        NetworkModel::BarabasiAlbert { m } => {
            if m < 1 {
                return Err(invalid("BA requires m >= 1"));
            }
            if m >= n_ord {
                return Err(invalid(format!("BA requires m < n_ord (m = {m}, n_ord = {n_ord})")));
            }
            // seed graph: star on m + 1 nodes centred at 0
            let mut repeated: Vec<usize> = Vec::with_capacity(2 * m * n_ord);
            for v in 1..=m {
                undirected.insert((0, v));
                repeated.push(0);
                repeated.push(v);
            }
            for source in (m + 1)..n_ord {
                let mut targets = BTreeSet::new();
                while targets.len() < m {
                    targets.insert(repeated[rng.random_range(0..repeated.len())]);
                }
                for &t in &targets {
                    undirected.insert((t.min(source), t.max(source)));
                    repeated.push(t);
                    repeated.push(source);
                }
            }
        }
        NetworkModel::WattsStrogatz { b, p_rewire } => {
            check_probability("p_rewire", p_rewire)?;
            if b < 1 || 2 * b >= n_ord {
                return Err(invalid(format!("WS requires 1 <= b and 2b < n_ord (b = {b})")));
            }
            let key = |u: usize, v: usize| (u.min(v), u.max(v));
            for u in 0..n_ord {
                for j in 1..=b {
                    undirected.insert(key(u, (u + j) % n_ord));
                }
            }
            let degree = |set: &BTreeSet<(usize, usize)>, u: usize| {
                set.iter().filter(|&&(a, c)| a == u || c == u).count()
            };
            for j in 1..=b {
                for u in 0..n_ord {
                    let v = (u + j) % n_ord;
                    if !rng.random_bool(p_rewire) || !undirected.contains(&key(u, v)) {
                        continue;
                    }
                    if degree(&undirected, u) >= n_ord - 1 {
                        continue;
                    }
                    let w = loop {
                        let w = rng.random_range(0..n_ord);
                        if w != u && !undirected.contains(&key(u, w)) {
                            break w;
                        }
                    };
                    undirected.remove(&key(u, v));
                    undirected.insert(key(u, w));
                }
            }
        }
    }

    let directed = undirected.into_iter().flat_map(|(i, j)| [(i, j), (j, i)]);
    NetworkTopology::new(n_ord, directed, model.tag())
}

/// How stubborn agents are wired to ordinary agents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Placement {
    /// Each ordinary agent listens to exactly `d` distinct stubborn agents.
    #[serde(rename = "d_regular")]
    DRegular { d: usize },
    /// Each pair independently with probability `p_s`; empty rows get one
    /// uniformly chosen stubborn neighbor.
    #[serde(rename = "er_bipartite")]
    ErBipartite { p_s: f64 },
}

pub fn place_stubborn(n_ord: usize, n_s: usize, mode: Placement, seed: u64) -> Result<BipartiteSupport> {
    if n_s < 1 {
        return Err(invalid("need at least one stubborn agent"));
    }
    let mut rng = rng_from_seed(seed);
    let rows = match mode {
        Placement::DRegular { d } => {
            if d > n_s {
                return Err(invalid(format!("d = {d} exceeds n_s = {n_s}")));
            }
            if d == 0 {
                return Err(invalid("d must be at least 1"));
            }
            (0..n_ord)
                .map(|_| index::sample(&mut rng, n_s, d).into_vec())
                .collect()
        }
        Placement::ErBipartite { p_s } => {
            check_probability("p_s", p_s)?;
            (0..n_ord)
                .map(|_| {
                    let mut row: Vec<usize> = (0..n_s).filter(|_| rng.random_bool(p_s)).collect();
                    if row.is_empty() {
                        row.push(rng.random_range(0..n_s));
                    }
                    row
                })
                .collect()
        }
    };
    BipartiteSupport::new(n_ord, n_s, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn er_extremes() {
        let empty = gen_network(NetworkModel::ErdosRenyi { p: 0.0 }, 10, 3).unwrap();
        assert_eq!(empty.edge_count(), 0);
        let full = gen_network(NetworkModel::ErdosRenyi { p: 1.0 }, 5, 3).unwrap();
        assert_eq!(full.edge_count(), 20);
    }

    #[test]
    fn er_mean_edge_count_matches_binomial() {
        // directed count = 2 * Binomial(1770, 0.1)
        let n = 60;
        let pairs = (n * (n - 1) / 2) as f64;
        let trials = 200;
        let mean: f64 = (0..trials)
            .map(|s| gen_network(NetworkModel::ErdosRenyi { p: 0.1 }, n, s).unwrap().edge_count() as f64)
            .sum::<f64>()
            / trials as f64;
        let expected = 60.0 * 59.0 * 0.1;
        let sd_of_mean = 2.0 * (pairs * 0.1 * 0.9).sqrt() / (trials as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * sd_of_mean, "mean {mean} vs {expected}");
    }

    #[test]
    fn generators_are_symmetric_and_seeded() {
        for model in [
            NetworkModel::ErdosRenyi { p: 0.2 },
            NetworkModel::BarabasiAlbert { m: 2 },
            NetworkModel::WattsStrogatz { b: 2, p_rewire: 0.08 },
        ] {
            let g = gen_network(model, 30, 11).unwrap();
            assert_eq!(g, gen_network(model, 30, 11).unwrap());
            for &(i, j) in g.edges() {
                assert!(g.has_edge(j, i));
                assert_ne!(i, j);
            }
        }
    }

    #[test]
    fn ba_and_ws_edge_counts() {
        let ba = gen_network(NetworkModel::BarabasiAlbert { m: 2 }, 40, 5).unwrap();
        assert_eq!(ba.edge_count(), 2 * (2 + 2 * (40 - 3)));
        let ws = gen_network(NetworkModel::WattsStrogatz { b: 2, p_rewire: 0.08 }, 40, 5).unwrap();
        assert_eq!(ws.edge_count(), 2 * 2 * 40);
        let ring = gen_network(NetworkModel::WattsStrogatz { b: 2, p_rewire: 0.0 }, 10, 5).unwrap();
        assert!((0..10).all(|i| ring.out_degree(i) == 4));
    }

    #[test]
    fn bad_parameters_rejected() {
        assert!(gen_network(NetworkModel::ErdosRenyi { p: 1.5 }, 10, 0).is_err());
        assert!(gen_network(NetworkModel::BarabasiAlbert { m: 10 }, 10, 0).is_err());
        assert!(gen_network(NetworkModel::WattsStrogatz { b: 0, p_rewire: 0.1 }, 10, 0).is_err());
        assert!(gen_network(NetworkModel::ErdosRenyi { p: 0.5 }, 1, 0).is_err());
        assert!(place_stubborn(5, 3, Placement::DRegular { d: 4 }, 0).is_err());
    }

    #[test]
    fn d_regular_placement() {
        let full = place_stubborn(4, 4, Placement::DRegular { d: 4 }, 1).unwrap();
        assert_eq!(full.edge_count(), 16);
        let s = place_stubborn(60, 30, Placement::DRegular { d: 5 }, 1).unwrap();
        assert_eq!(s.regular_degree(), Some(5));
    }

    #[test]
    fn er_bipartite_repairs_empty_rows() {
        // expected edges per row: 30 * 0.1 plus one repair edge w.p. 0.9^30
        let expected = 60.0 * (3.0 + 0.9f64.powi(30));
        let trials = 200;
        let mut total = 0.0;
        let mut sq = 0.0;
        for seed in 0..trials {
            let s = place_stubborn(60, 30, Placement::ErBipartite { p_s: 0.1 }, seed).unwrap();
            assert!(s.rows_without_stubborn().is_empty());
            let e = s.edge_count() as f64;
            total += e;
            sq += e * e;
        }
        let mean = total / trials as f64;
        let var = sq / trials as f64 - mean * mean;
        assert!((mean - expected).abs() < 3.0 * (var / trials as f64).sqrt() + 1e-9, "{mean} vs {expected}");
    }
}
