//! Plain-text edge lists: one `i j [weight]` per line, 0-based ids, `#` comments.

use std::io::{BufRead, Write};

use super::{ModelTag, NetworkTopology};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedEdge {
    pub src: usize,
    pub dst: usize,
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeList {
    pub edges: Vec<WeightedEdge>,
}

impl EdgeList {
    /// One more than the largest id mentioned.
    pub fn node_count(&self) -> usize {
        self.edges.iter().map(|e| e.src.max(e.dst) + 1).max().unwrap_or(0)
    }

    /// Builds a topology on `n_ord` agents (default: inferred). Self-loops are
    /// dropped; `symmetrize` adds the reverse of every edge.
    pub fn to_topology(&self, n_ord: Option<usize>, symmetrize: bool) -> Result<NetworkTopology> {
        let n = n_ord.unwrap_or_else(|| self.node_count());
        let pairs = self.edges.iter().flat_map(|e| {
            let rev = symmetrize.then_some((e.dst, e.src));
            std::iter::once((e.src, e.dst)).chain(rev)
        });
        NetworkTopology::new(n, pairs, ModelTag::Ingested)
    }
}

pub fn read_edge_list(reader: impl BufRead) -> Result<EdgeList> {
    let mut edges = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let err = |msg: &str| Error::Parse { line: lineno + 1, msg: msg.to_string() };
        if !(2..=3).contains(&fields.len()) {
            return Err(err("expected `i j [weight]`"));
        }
        let src = fields[0].parse().map_err(|_| err("bad source id"))?;
        let dst = fields[1].parse().map_err(|_| err("bad target id"))?;
        let weight = match fields.get(2) {
            Some(w) => Some(w.parse::<f64>().map_err(|_| err("bad weight"))?),
            None => None,
        };
        edges.push(WeightedEdge { src, dst, weight });
    }
    Ok(EdgeList { edges })
}

pub fn write_edge_list(topology: &NetworkTopology, mut out: impl Write) -> Result<()> {
    writeln!(out, "# {} ordinary agents, {} directed edges", topology.n_ord, topology.edge_count())?;
    for &(i, j) in topology.edges() {
        writeln!(out, "{i} {j}")?;
    }
    Ok(())
}
