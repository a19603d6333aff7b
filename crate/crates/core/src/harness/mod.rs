//! Metrics and reproducible Monte-Carlo sweeps.
//!
//! Support error is the fraction of allowed off-diagonal pairs of `D` where
//! `|estimate| > tau` disagrees with `truth > 0`; `tau` defaults to
//! `1e-4 * max(truth)`.

mod experiment;
mod metrics;

pub use experiment::{
    exit_code, model_label, run_experiment, DataConfig, ExperimentConfig, PointSummary, ResultRow, ResultTable, Stat,
    Sweep,
};
pub use metrics::{default_threshold, expose_support, nmse, support_error};
