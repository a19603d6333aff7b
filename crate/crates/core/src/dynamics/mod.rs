//! DeGroot dynamics with stubborn agents, steady states and their estimation
//! from sampled, noisy traces.

mod dataset;
mod estimator;
mod random;
mod trace;

pub use dataset::{collect_dataset, default_burn_in, CollectConfig, SteadyStateData, ZMode};
pub use estimator::{
    estimate_steady_state, mse_bound, temporal_average, uniform_sampling_set, SampleSet, TemporalEstimate,
};
pub use random::{broadcast_mean_matrix, mean_matrix, sample_random_w, DynamicsModel, Realizer};
pub use trace::{simulate, write_trace_csv, OpinionTrace};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::TrustMatrix;
use crate::linalg::solve_i_minus;

/// Opinions at one time step: stubborn `z` (never changes) and ordinary `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct OpinionState {
    pub z: DVector<f64>,
    pub y: DVector<f64>,
    pub t: u64,
}

impl OpinionState {
    pub fn new(z: DVector<f64>, y: DVector<f64>) -> Self {
        Self { z, y, t: 0 }
    }

    /// `(z, y)` stacked with stubborn agents first.
    pub fn full(&self) -> DVector<f64> {
        DVector::from_iterator(self.z.len() + self.y.len(), self.z.iter().chain(self.y.iter()).copied())
    }

    pub(crate) fn check_dims(&self, w: &TrustMatrix) -> Result<()> {
        if self.z.len() != w.n_s() {
            return Err(Error::DimensionMismatch { what: "stubborn opinions", expected: w.n_s(), got: self.z.len() });
        }
        if self.y.len() != w.n_ord() {
            return Err(Error::DimensionMismatch { what: "ordinary opinions", expected: w.n_ord(), got: self.y.len() });
        }
        Ok(())
    }
}

/// `y <- B z + D y`.
pub fn step_deterministic(w: &TrustMatrix, state: &OpinionState) -> Result<OpinionState> {
    state.check_dims(w)?;
    let y = &w.b * &state.z + &w.d * &state.y;
    Ok(OpinionState { z: state.z.clone(), y, t: state.t + 1 })
}

/// Expected ordinary opinions at equilibrium, `(I - D)^-1 B Z`, via an LU solve.
pub fn steady_state_exact(b: &DMatrix<f64>, d: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if b.ncols() != z.nrows() {
        return Err(Error::DimensionMismatch { what: "Z rows", expected: b.ncols(), got: z.nrows() });
    }
    if d.nrows() != b.nrows() || d.ncols() != d.nrows() {
        return Err(Error::DimensionMismatch { what: "D shape", expected: b.nrows(), got: d.nrows() });
    }
    solve_i_minus(d, &(b * z))
}
