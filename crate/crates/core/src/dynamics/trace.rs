use std::io::Write;

use nalgebra::DVector;
use rand_distr::{Distribution, Normal};

use super::random::{DynamicsModel, Realizer};
use crate::error::{invalid, Error, Result};
use crate::graph::TrustMatrix;
use crate::rng::{rng_from_seed, Rng};

/// Noisy observations `x(t) + n(t)` of every agent (stubborn first) for
/// `t = 0..=T` of a single discussion.
#[derive(Debug, Clone, PartialEq)]
pub struct OpinionTrace {
    pub discussion: usize,
    pub model: DynamicsModel,
    pub sigma: f64,
    pub n_s: usize,
    pub n_ord: usize,
    data: Vec<f64>,
}

impl OpinionTrace {
    pub fn n_agents(&self) -> usize {
        self.n_s + self.n_ord
    }

    /// Number of recorded instants (`T + 1`).
    pub fn len(&self) -> usize {
        self.data.len() / self.n_agents().max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn horizon(&self) -> u64 {
        self.len().saturating_sub(1) as u64
    }

    pub fn at(&self, t: u64) -> Option<&[f64]> {
        let n = self.n_agents();
        let t = usize::try_from(t).ok()?;
        self.data.get(t * n..(t + 1) * n)
    }

    pub fn ordinary_at(&self, t: u64) -> Option<&[f64]> {
        self.at(t).map(|x| &x[self.n_s..])
    }
}

pub(crate) struct Noise {
    dist: Option<Normal<f64>>,
}

impl Noise {
    pub(crate) fn new(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(invalid(format!("noise std-dev {sigma} must be finite and >= 0")));
        }
        let dist = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("sigma checked"));
        Ok(Self { dist })
    }

    #[inline]
    pub(crate) fn sample(&self, rng: &mut Rng) -> f64 {
        self.dist.as_ref().map_or(0.0, |d| d.sample(rng))
    }
}

/// Runs `T` steps of the chosen dynamics from `(z0, y0)` and records noisy
/// observations of every agent at every step.
pub fn simulate(
    w: &TrustMatrix,
    z0: &DVector<f64>,
    y0: &DVector<f64>,
    horizon: u64,
    model: DynamicsModel,
    sigma: f64,
    seed: u64,
) -> Result<OpinionTrace> {
    if horizon < 1 {
        return Err(invalid("horizon must be at least 1"));
    }
    if z0.len() != w.n_s() {
        return Err(Error::DimensionMismatch { what: "z0", expected: w.n_s(), got: z0.len() });
    }
    if y0.len() != w.n_ord() {
        return Err(Error::DimensionMismatch { what: "y0", expected: w.n_ord(), got: y0.len() });
    }
    let realizer = Realizer::new(w, model)?;
    let noise = Noise::new(sigma)?;
    let mut rng = rng_from_seed(seed);
    let n = w.n_s() + w.n_ord();
    let steps = usize::try_from(horizon).map_err(|_| invalid("horizon too large"))?;
    let mut data = Vec::with_capacity((steps + 1) * n);

    let mut y = y0.clone();
    let mut scratch = DVector::zeros(y.len());
    let record = |y: &DVector<f64>, rng: &mut Rng, data: &mut Vec<f64>| {
        for v in z0.iter().chain(y.iter()) {
            data.push(v + noise.sample(rng));
        }
    };
    record(&y, &mut rng, &mut data);
    for _ in 0..steps {
        realizer.step(z0, &mut y, &mut scratch, &mut rng);
        record(&y, &mut rng, &mut data);
    }
    Ok(OpinionTrace { discussion: 0, model, sigma, n_s: w.n_s(), n_ord: w.n_ord(), data })
}

/// CSV with header `t,agent_0,...,agent_{n-1}`.
pub fn write_trace_csv(trace: &OpinionTrace, out: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let n = trace.n_agents();
    let header = std::iter::once("t".to_string()).chain((0..n).map(|i| format!("agent_{i}")));
    wtr.write_record(header)?;
    for t in 0..trace.len() as u64 {
        let row = trace.at(t).expect("in range");
        let fields = std::iter::once(t.to_string()).chain(row.iter().map(|v| v.to_string()));
        wtr.write_record(fields)?;
    }
    wtr.flush()?;
    Ok(())
}
