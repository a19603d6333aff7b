//! Active sensing of trust networks through stubborn agents.
//!
//! Stubborn agents hold fixed opinions and keep the DeGroot dynamics
//! excited; the steady states of the ordinary agents reveal the relative
//! trust matrices, which are recovered by constrained least squares or
//! l1-regularized proximal gradient (FISTA).
//!
//! * [`graph`]: network generators, stubborn placement, trust matrices.
//! * [`dynamics`]: deterministic and randomized dynamics, steady-state estimation.
//! * [`recovery`]: least-squares, FISTA and brute-force l0 recovery.
//! * [`identify`]: rank/spark conditions, sufficient conditions for unique recovery, expanders.
//! * [`harness`]: metrics and reproducible Monte-Carlo experiments.

mod combin;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod harness;
pub mod identify;
pub mod linalg;
pub mod mask;
pub mod matrix_io;
pub mod recovery;
pub mod rng;

pub use error::{Error, Result};
pub use mask::Mask;
