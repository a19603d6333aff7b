use nalgebra::DVector;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::random::{DynamicsModel, Realizer};
use super::trace::{Noise, OpinionTrace};
use crate::error::{invalid, Error, Result};
use crate::graph::TrustMatrix;
use crate::rng::{rng_from_seed, Rng};

/// Sorted, distinct sampling instants inside `(burn_in, horizon]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    pub burn_in: u64,
    pub horizon: u64,
    instants: Vec<u64>,
}

impl SampleSet {
    pub fn new(burn_in: u64, horizon: u64, mut instants: Vec<u64>) -> Result<Self> {
        instants.sort_unstable();
        let before = instants.len();
        instants.dedup();
        if instants.len() != before {
            return Err(invalid("sampling instants must be distinct"));
        }
        if instants.first().is_some_and(|&t| t <= burn_in) || instants.last().is_some_and(|&t| t > horizon) {
            return Err(invalid(format!("sampling instants must lie in ({burn_in}, {horizon}]")));
        }
        Ok(Self { burn_in, horizon, instants })
    }

    pub fn instants(&self) -> &[u64] {
        &self.instants
    }

    pub fn len(&self) -> usize {
        self.instants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instants.is_empty()
    }
}

/// `m` distinct instants drawn uniformly without replacement from `(T_o, T_max]`.
pub fn uniform_sampling_set(burn_in: u64, horizon: u64, m: usize, seed: u64) -> Result<SampleSet> {
    uniform_sampling_set_with(burn_in, horizon, m, &mut rng_from_seed(seed))
}

pub(crate) fn uniform_sampling_set_with(burn_in: u64, horizon: u64, m: usize, rng: &mut Rng) -> Result<SampleSet> {
    let span = horizon
        .checked_sub(burn_in)
        .ok_or_else(|| invalid("horizon precedes burn-in"))?;
    if (m as u64) > span {
        return Err(invalid(format!("cannot draw {m} distinct instants from {span}")));
    }
    let span = usize::try_from(span).map_err(|_| invalid("sampling window too large"))?;
    let instants = index::sample(rng, span, m)
        .into_iter()
        .map(|k| burn_in + 1 + k as u64)
        .collect();
    SampleSet::new(burn_in, horizon, instants)
}

/// Arithmetic mean of the recorded observations at the sampled instants.
pub fn temporal_average(trace: &OpinionTrace, samples: &SampleSet) -> Result<DVector<f64>> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let mut acc = DVector::zeros(trace.n_agents());
    for &t in samples.instants() {
        let x = trace
            .at(t)
            .ok_or_else(|| invalid(format!("instant {t} beyond trace horizon {}", trace.horizon())))?;
        for (a, v) in acc.iter_mut().zip(x) {
            *a += v;
        }
    }
    Ok(acc / samples.len() as f64)
}

/// `(C'/|T|) * sum_{i<|T|} lambda^{min_l |t_{l+i} - t_l|}`. Useful for ranking
/// sampling schedules; `C'` is not known in absolute terms.
pub fn mse_bound(lambda_d: f64, samples: &SampleSet, c_prime: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&lambda_d) {
        return Err(invalid(format!("lambda_D = {lambda_d} must lie in [0, 1)")));
    }
    let t = samples.instants();
    if t.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let m = t.len();
    let sum: f64 = (0..m)
        .map(|i| {
            let gap = (0..m - i).map(|l| t[l + i] - t[l]).min().expect("nonempty");
            lambda_d.powf(gap as f64)
        })
        .sum();
    Ok(c_prime / m as f64 * sum)
}

/// Streaming temporal average for one discussion, without storing the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalEstimate {
    /// Average of the noisy observations (all agents, stubborn first).
    pub mean: DVector<f64>,
    /// Sample variance of the ordinary observations divided by `|T|`,
    /// averaged over ordinary agents.
    pub variance_of_mean: f64,
}

pub fn estimate_steady_state(
    w: &TrustMatrix,
    z0: &DVector<f64>,
    y0: &DVector<f64>,
    samples: &SampleSet,
    model: DynamicsModel,
    sigma: f64,
    rng: &mut Rng,
) -> Result<TemporalEstimate> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    if z0.len() != w.n_s() || y0.len() != w.n_ord() {
        return Err(Error::DimensionMismatch { what: "initial opinions", expected: w.n_s() + w.n_ord(), got: z0.len() + y0.len() });
    }
    let realizer = Realizer::new(w, model)?;
    let noise = Noise::new(sigma)?;
    let (ns, no) = (w.n_s(), w.n_ord());
    let mut y = y0.clone();
    let mut scratch = DVector::zeros(no);
    let mut sum = DVector::<f64>::zeros(ns + no);
    let mut sq = DVector::<f64>::zeros(no);
    let mut t = 0u64;
    for &target in samples.instants() {
        while t < target {
            realizer.step(z0, &mut y, &mut scratch, rng);
            t += 1;
        }
        for j in 0..ns {
            sum[j] += z0[j] + noise.sample(rng);
        }
        for i in 0..no {
            let v = y[i] + noise.sample(rng);
            sum[ns + i] += v;
            sq[i] += v * v;
        }
    }
    let m = samples.len() as f64;
    let mean = sum / m;
    let variance_of_mean = if samples.len() > 1 && no > 0 {
        (0..no)
            .map(|i| {
                let mu = mean[ns + i];
                ((sq[i] - m * mu * mu) / (m - 1.0)).max(0.0) / m
            })
            .sum::<f64>()
            / no as f64
    } else {
        0.0
    };
    Ok(TemporalEstimate { mean, variance_of_mean })
}
