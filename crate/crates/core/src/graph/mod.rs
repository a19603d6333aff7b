//! Networks, stubborn-agent placements and trust matrices.
//!
//! Ordinary agents are indexed `0..n_ord` and stubborn agents `0..n_s`; the
//! full trust matrix is the block matrix `[I 0; B D]` with the stubborn
//! identity block left implicit.

mod generators;
mod io;
mod trust;

pub use generators::{gen_network, place_stubborn, NetworkModel, Placement};
pub use io::{read_edge_list, write_edge_list, EdgeList, WeightedEdge};
pub use trust::{
    apply_ambiguity, build_trust_matrix, canonical_relative_trust, validate_trust_matrix,
    RelativeTrustPair, TrustMatrix, ValidationReport,
};
pub(crate) use trust::row_sum_residual;

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mask::Mask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelTag {
    #[serde(rename = "ER")]
    ErdosRenyi,
    #[serde(rename = "BA")]
    BarabasiAlbert,
    #[serde(rename = "WS")]
    WattsStrogatz,
    #[serde(rename = "ingested")]
    Ingested,
}

/// Directed ordinary-to-ordinary trust graph. An edge `(i, j)` means agent
/// `i` listens to agent `j`. Self-trust lives on the diagonal of `D`, never here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTopology {
    pub n_ord: usize,
    edges: BTreeSet<(usize, usize)>,
    pub model: ModelTag,
}

impl NetworkTopology {
    pub fn new(n_ord: usize, edges: impl IntoIterator<Item = (usize, usize)>, model: ModelTag) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= n_ord || j >= n_ord {
                return Err(invalid(format!("edge ({i}, {j}) out of range for {n_ord} agents")));
            }
            if i != j {
                set.insert((i, j));
            }
        }
        Ok(Self { n_ord, edges: set, model })
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i, j))
    }

    /// Agents that `i` listens to.
    pub fn out_neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.range((i, 0)..(i + 1, 0)).map(|&(_, j)| j)
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out_neighbors(i).count()
    }

    /// Off-diagonal support of `D` as an `n_ord x n_ord` mask.
    pub fn mask(&self) -> Mask {
        Mask::from_pairs(self.n_ord, self.n_ord, self.edges.iter().copied())
    }

    pub fn from_mask(mask: &Mask, model: ModelTag) -> Result<Self> {
        Self::new(mask.rows(), mask.pairs(), model)
    }

    fn reachable(&self, start: usize, forward: bool, undirected: bool) -> Vec<bool> {
        let mut adj = vec![Vec::new(); self.n_ord];
        for &(i, j) in &self.edges {
            if forward || undirected {
                adj[i].push(j);
            }
            if !forward || undirected {
                adj[j].push(i);
            }
        }
        let mut seen = vec![false; self.n_ord];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    pub fn is_weakly_connected(&self) -> bool {
        self.n_ord <= 1 || self.reachable(0, true, true).into_iter().all(|s| s)
    }

    pub fn is_strongly_connected(&self) -> bool {
        self.n_ord <= 1
            || (self.reachable(0, true, false).into_iter().all(|s| s)
                && self.reachable(0, false, false).into_iter().all(|s| s))
    }
}

/// Stubborn-to-ordinary adjacency: `neighbors[i]` lists the stubborn agents
/// ordinary agent `i` listens to, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BipartiteSupport {
    pub n_ord: usize,
    pub n_s: usize,
    neighbors: Vec<Vec<usize>>,
}

impl BipartiteSupport {
    pub fn new(n_ord: usize, n_s: usize, mut neighbors: Vec<Vec<usize>>) -> Result<Self> {
        if neighbors.len() != n_ord {
            return Err(invalid(format!("expected {n_ord} neighbor rows, got {}", neighbors.len())));
        }
        for row in &mut neighbors {
            row.sort_unstable();
            row.dedup();
            if row.iter().any(|&j| j >= n_s) {
                return Err(invalid("stubborn index out of range"));
            }
        }
        Ok(Self { n_ord, n_s, neighbors })
    }

    pub fn from_mask(mask: &Mask) -> Result<Self> {
        let rows = (0..mask.rows()).map(|i| mask.row_indices(i)).collect();
        Self::new(mask.rows(), mask.cols(), rows)
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }

    /// Common row degree when every ordinary agent has the same number of stubborn neighbors.
    pub fn regular_degree(&self) -> Option<usize> {
        let d = self.neighbors.first()?.len();
        self.neighbors.iter().all(|r| r.len() == d).then_some(d)
    }

    pub fn rows_without_stubborn(&self) -> Vec<usize> {
        (0..self.n_ord).filter(|&i| self.neighbors[i].is_empty()).collect()
    }

    /// Support of `B` as an `n_ord x n_s` mask.
    pub fn mask(&self) -> Mask {
        Mask::from_pairs(
            self.n_ord,
            self.n_s,
            self.neighbors.iter().enumerate().flat_map(|(i, r)| r.iter().map(move |&j| (i, j))),
        )
    }
}

/// A complete sensing instance: ordinary network, stubborn placement and
/// the trust weights drawn on both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub topology: NetworkTopology,
    pub support: BipartiteSupport,
    pub trust: TrustMatrix,
}

impl Instance {
    /// Places `n_s` stubborn agents on `topology` and draws weights; the two
    /// steps use the streams `[1]` and `[2]` of `seed`.
    pub fn on_topology(topology: NetworkTopology, n_s: usize, placement: Placement, seed: u64) -> Result<Self> {
        let support = place_stubborn(topology.n_ord, n_s, placement, crate::rng::derive_seed(seed, &[1]))?;
        let trust = build_trust_matrix(&topology, &support, crate::rng::derive_seed(seed, &[2]))?;
        Ok(Self { topology, support, trust })
    }

    /// Generated network (stream `[0]` of `seed`) plus [`Instance::on_topology`].
    pub fn generate(model: NetworkModel, n_ord: usize, n_s: usize, placement: Placement, seed: u64) -> Result<Self> {
        let topology = gen_network(model, n_ord, crate::rng::derive_seed(seed, &[0]))?;
        Self::on_topology(topology, n_s, placement, seed)
    }

    pub fn n_ord(&self) -> usize {
        self.topology.n_ord
    }

    pub fn n_s(&self) -> usize {
        self.support.n_s
    }
}
