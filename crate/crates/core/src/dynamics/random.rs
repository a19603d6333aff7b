use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::TrustMatrix;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum DynamicsModel {
    /// `W(t) = W` at every step.
    #[serde(rename = "det")]
    Deterministic,
    /// Each ordinary agent copies one neighbor drawn from its trust row.
    #[serde(rename = "ns")]
    NeighborSampling,
    /// One uniformly chosen agent broadcasts; its ordinary listeners move a
    /// fraction `gamma` toward the broadcast value.
    #[serde(rename = "bg")]
    BroadcastGossip { gamma: f64 },
}

impl Default for DynamicsModel {
    fn default() -> Self {
        DynamicsModel::NeighborSampling
    }
}

impl DynamicsModel {
    pub fn validate(&self) -> Result<()> {
        if let DynamicsModel::BroadcastGossip { gamma } = *self {
            if !(gamma > 0.0 && gamma <= 1.0) {
                return Err(invalid(format!("broadcast weight {gamma} outside (0, 1]")));
            }
        }
        Ok(())
    }

    pub fn is_random(&self) -> bool {
        !matches!(self, DynamicsModel::Deterministic)
    }
}

#[derive(Debug, Clone, Copy)]
enum Source {
    Stubborn(usize),
    Ordinary(usize),
}

/// Pre-processed view of a trust matrix for drawing random realizations.
#[derive(Debug, Clone)]
pub struct Realizer<'a> {
    w: &'a TrustMatrix,
    model: DynamicsModel,
    /// Per ordinary row: cumulative weights and the agent each bucket points at.
    cdf: Vec<Vec<(f64, Source)>>,
    /// Per agent (stubborn first): ordinary agents listening to it.
    listeners: Vec<Vec<usize>>,
}

impl<'a> Realizer<'a> {
    pub fn new(w: &'a TrustMatrix, model: DynamicsModel) -> Result<Self> {
        model.validate()?;
        let (ns, no) = (w.n_s(), w.n_ord());
        let mut cdf = Vec::new();
        let mut listeners = Vec::new();
        match model {
            DynamicsModel::NeighborSampling => {
                cdf = (0..no)
                    .map(|i| {
                        let mut acc = 0.0;
                        let stub = (0..ns).filter(|&j| w.b[(i, j)] > 0.0).map(|j| (w.b[(i, j)], Source::Stubborn(j)));
                        let ord = (0..no).filter(|&j| w.d[(i, j)] > 0.0).map(|j| (w.d[(i, j)], Source::Ordinary(j)));
                        stub.chain(ord)
                            .map(|(p, s)| {
                                acc += p;
                                (acc, s)
                            })
                            .collect()
                    })
                    .collect();
            }
            DynamicsModel::BroadcastGossip { .. } => {
                listeners = vec![Vec::new(); ns + no];
                for i in 0..no {
                    for j in 0..ns {
                        if w.b[(i, j)] > 0.0 {
                            listeners[j].push(i);
                        }
                    }
                    for j in 0..no {
                        if j != i && w.d[(i, j)] > 0.0 {
                            listeners[ns + j].push(i);
                        }
                    }
                }
            }
            DynamicsModel::Deterministic => {}
        }
        Ok(Self { w, model, cdf, listeners })
    }

    fn draw(&self, i: usize, rng: &mut Rng) -> Option<Source> {
        let row = &self.cdf[i];
        let total = row.last()?.0;
        let u = rng.random::<f64>() * total;
        let k = row.partition_point(|&(c, _)| c <= u).min(row.len() - 1);
        Some(row[k].1)
    }

    /// Advances the ordinary opinions `y` by one realization of `W(t)`.
    pub fn step(&self, z: &DVector<f64>, y: &mut DVector<f64>, scratch: &mut DVector<f64>, rng: &mut Rng) {
        match self.model {
            DynamicsModel::Deterministic => {
                scratch.gemv(1.0, &self.w.b, z, 0.0);
                scratch.gemv(1.0, &self.w.d, y, 1.0);
                std::mem::swap(y, scratch);
            }
            DynamicsModel::NeighborSampling => {
                scratch.copy_from(y);
                for i in 0..y.len() {
                    y[i] = match self.draw(i, rng) {
                        Some(Source::Stubborn(j)) => z[j],
                        Some(Source::Ordinary(j)) => scratch[j],
                        None => scratch[i],
                    };
                }
            }
            DynamicsModel::BroadcastGossip { gamma } => {
                let ns = z.len();
                let u = rng.random_range(0..ns + y.len());
                let value = if u < ns { z[u] } else { y[u - ns] };
                for &i in &self.listeners[u] {
                    y[i] = (1.0 - gamma) * y[i] + gamma * value;
                }
            }
        }
    }

    /// Materializes one realization `(B(t), D(t))`.
    pub fn realize(&self, rng: &mut Rng) -> (DMatrix<f64>, DMatrix<f64>) {
        let (ns, no) = (self.w.n_s(), self.w.n_ord());
        match self.model {
            DynamicsModel::Deterministic => (self.w.b.clone(), self.w.d.clone()),
            DynamicsModel::NeighborSampling => {
                let mut b = DMatrix::zeros(no, ns);
                let mut d = DMatrix::zeros(no, no);
                for i in 0..no {
                    match self.draw(i, rng) {
                        Some(Source::Stubborn(j)) => b[(i, j)] = 1.0,
                        Some(Source::Ordinary(j)) => d[(i, j)] = 1.0,
                        None => d[(i, i)] = 1.0,
                    }
                }
                (b, d)
            }
            DynamicsModel::BroadcastGossip { gamma } => {
                let mut b = DMatrix::zeros(no, ns);
                let mut d = DMatrix::identity(no, no);
                let u = rng.random_range(0..ns + no);
                for &i in &self.listeners[u] {
                    d[(i, i)] = 1.0 - gamma;
                    if u < ns {
                        b[(i, u)] = gamma;
                    } else {
                        d[(i, u - ns)] = gamma;
                    }
                }
                (b, d)
            }
        }
    }
}

/// One random realization of the ordinary rows of `W(t)`. Stubborn rows are
/// identity by construction and are not returned.
pub fn sample_random_w(w: &TrustMatrix, model: DynamicsModel, rng: &mut Rng) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    Ok(Realizer::new(w, model)?.realize(rng))
}

/// `E[W(t)]` for broadcast gossip: listeners of a uniformly chosen agent
/// among `n = n_s + n_ord` move `gamma` toward it.
pub fn broadcast_mean_matrix(w: &TrustMatrix, gamma: f64) -> Result<TrustMatrix> {
    DynamicsModel::BroadcastGossip { gamma }.validate()?;
    let (ns, no) = (w.n_s(), w.n_ord());
    let rate = gamma / (ns + no) as f64;
    let mut b = DMatrix::zeros(no, ns);
    let mut d = DMatrix::zeros(no, no);
    for i in 0..no {
        let mut out = 0.0;
        for j in 0..ns {
            if w.b[(i, j)] > 0.0 {
                b[(i, j)] = rate;
                out += rate;
            }
        }
        for j in 0..no {
            if j != i && w.d[(i, j)] > 0.0 {
                d[(i, j)] = rate;
                out += rate;
            }
        }
        d[(i, i)] = 1.0 - out;
    }
    TrustMatrix::new(b, d)
}

/// The matrix whose steady state the random dynamics average to.
pub fn mean_matrix(w: &TrustMatrix, model: DynamicsModel) -> Result<TrustMatrix> {
    match model {
        DynamicsModel::BroadcastGossip { gamma } => broadcast_mean_matrix(w, gamma),
        _ => Ok(w.clone()),
    }
}
