use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::estimator::{estimate_steady_state, uniform_sampling_set_with};
use super::random::DynamicsModel;
use crate::error::{invalid, Error, Result};
use crate::graph::TrustMatrix;
use crate::linalg::numerical_rank;
use crate::matrix_io::rows;
use crate::rng::{derive_seed, derived_rng, rng_from_seed};

/// Burn-in after which the deterministic transient has shrunk by `1e-6`.
pub fn default_burn_in(norm_d: f64) -> Option<u64> {
    if !(0.0..1.0).contains(&norm_d) {
        return None;
    }
    if norm_d == 0.0 {
        return Some(1);
    }
    Some(((1e-6f64).ln() / norm_d.ln()).ceil().max(1.0) as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ZMode {
    /// i.i.d. standard normal stubborn opinions.
    Gaussian,
    Given(DMatrix<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollectConfig {
    /// Step cap for noiseless deterministic collection.
    pub max_steps: u64,
    /// Early-stop threshold on `max |y(t) - y(t-1)|` for noiseless deterministic collection.
    pub residual_tol: f64,
    /// `T_o`; `None` picks it from the spectral norm of `D`.
    pub burn_in: Option<u64>,
    /// `T_max - T_o`: length of the sampling window after burn-in.
    pub window: u64,
    /// `|T_k|`, samples per discussion.
    pub samples: usize,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self { max_steps: 100_000, residual_tol: 1e-12, burn_in: None, window: 100_000, samples: 10_000 }
    }
}

/// Excitation `Z` (`n_s x K`) and estimated responses `Y_hat` (`n_ord x K`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateData {
    #[serde(rename = "Z", with = "rows")]
    pub z: DMatrix<f64>,
    #[serde(rename = "Y_hat", with = "rows")]
    pub y_hat: DMatrix<f64>,
    #[serde(rename = "K")]
    pub k: usize,
    pub sigma: f64,
    pub model: DynamicsModel,
    /// Per-discussion RNG seeds.
    pub seeds: Vec<u64>,
    /// Per-column variance of the temporal-average estimate (0 when not sampled).
    #[serde(default)]
    pub estimator_variance: Vec<f64>,
    #[serde(default)]
    pub z_full_rank: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SteadyStateData {
    pub fn n_ord(&self) -> usize {
        self.y_hat.nrows()
    }

    pub fn n_s(&self) -> usize {
        self.z.nrows()
    }
}

fn converge_deterministic(w: &TrustMatrix, z: &DVector<f64>, cfg: &CollectConfig) -> DVector<f64> {
    let bz = &w.b * z;
    let mut y = DVector::zeros(w.n_ord());
    let mut next = DVector::zeros(w.n_ord());
    for _ in 0..cfg.max_steps {
        next.copy_from(&bz);
        next.gemv(1.0, &w.d, &y, 1.0);
        let delta = (&next - &y).amax();
        std::mem::swap(&mut y, &mut next);
        if delta < cfg.residual_tol {
            break;
        }
    }
    y
}

/// Runs `K` independent discussions (ordinary agents start at 0) and
/// records each one's estimated steady state.
///
/// Noiseless deterministic dynamics are iterated until the update stalls;
/// every other combination uses the temporal-average estimator over a
/// uniform sampling set drawn from the window after burn-in.
pub fn collect_dataset(
    w: &TrustMatrix,
    k: usize,
    z_mode: ZMode,
    cfg: &CollectConfig,
    model: DynamicsModel,
    sigma: f64,
    seed: u64,
) -> Result<SteadyStateData> {
    model.validate()?;
    if k == 0 {
        return Err(invalid("need at least one discussion"));
    }
    if !(sigma >= 0.0) {
        return Err(invalid("sigma must be >= 0"));
    }
    let (ns, no) = (w.n_s(), w.n_ord());
    let z = match z_mode {
        ZMode::Gaussian => {
            let mut rng = rng_from_seed(derive_seed(seed, &[u64::MAX]));
            DMatrix::from_fn(ns, k, |_, _| StandardNormal.sample(&mut rng))
        }
        ZMode::Given(z) => {
            if z.nrows() != ns || z.ncols() != k {
                return Err(Error::DimensionMismatch { what: "Z columns", expected: k, got: z.ncols() });
            }
            z
        }
    };

    let mut warnings = Vec::new();
    if k < ns {
        warnings.push(format!("K = {k} < n_s = {ns}: Z cannot have full row rank"));
    }
    let z_full_rank = numerical_rank(&z) == ns;
    if !z_full_rank {
        warnings.push("Z is rank deficient".to_string());
    }

    let sampled = model.is_random() || sigma > 0.0;
    let burn_in = match (cfg.burn_in, sampled) {
        (Some(b), _) => b,
        (None, false) => 0,
        (None, true) => default_burn_in(w.spectral_norm_d())
            .ok_or_else(|| invalid("cannot derive burn-in: spectral norm of D >= 1; set it explicitly"))?,
    };
    if sampled && cfg.samples == 0 {
        return Err(Error::EmptySampleSet);
    }

    let seeds: Vec<u64> = (0..k as u64).map(|kk| derive_seed(seed, &[kk])).collect();
    let columns: Vec<Result<(DVector<f64>, f64)>> = (0..k)
        .into_par_iter()
        .map(|kk| {
            let zk = z.column(kk).into_owned();
            if !sampled {
                return Ok((converge_deterministic(w, &zk, cfg), 0.0));
            }
            let mut rng = derived_rng(seed, &[kk as u64]);
            let samples = uniform_sampling_set_with(burn_in, burn_in + cfg.window, cfg.samples, &mut rng)?;
            let est = estimate_steady_state(w, &zk, &DVector::zeros(no), &samples, model, sigma, &mut rng)?;
            Ok((est.mean.rows(ns, no).into_owned(), est.variance_of_mean))
        })
        .collect();

    let mut y_hat = DMatrix::zeros(no, k);
    let mut estimator_variance = Vec::with_capacity(k);
    for (kk, col) in columns.into_iter().enumerate() {
        let (y, var) = col?;
        y_hat.set_column(kk, &y);
        estimator_variance.push(var);
    }

    Ok(SteadyStateData { z, y_hat, k, sigma, model, seeds, estimator_variance, z_full_rank, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::steady_state_exact;
    use crate::graph::{build_trust_matrix, gen_network, place_stubborn, NetworkModel, Placement};

    fn instance() -> TrustMatrix {
        let topo = gen_network(NetworkModel::ErdosRenyi { p: 0.2 }, 15, 6).unwrap();
        let sup = place_stubborn(15, 4, Placement::DRegular { d: 2 }, 6).unwrap();
        build_trust_matrix(&topo, &sup, 6).unwrap()
    }

    #[test]
    fn noiseless_deterministic_matches_linear_solve() {
        let w = instance();
        let data = collect_dataset(&w, 8, ZMode::Gaussian, &CollectConfig::default(), DynamicsModel::Deterministic, 0.0, 1)
            .unwrap();
        let exact = steady_state_exact(&w.b, &w.d, &data.z).unwrap();
        assert!((&data.y_hat - exact).abs().max() < 1e-8);
        assert!(data.z_full_rank);
        assert!(data.warnings.is_empty());
        assert_eq!(data.seeds.len(), 8);
    }

    #[test]
    fn noisy_deterministic_variance_diagnostic() {
        let w = instance();
        let sigma = 0.2;
        let cfg = CollectConfig { burn_in: Some(500), window: 20_000, samples: 400, ..Default::default() };
        let data = collect_dataset(&w, 6, ZMode::Gaussian, &cfg, DynamicsModel::Deterministic, sigma, 9).unwrap();
        let expected = sigma * sigma / 400.0;
        for v in &data.estimator_variance {
            assert!((v / expected - 1.0).abs() < 0.15, "{v} vs {expected}");
        }
    }

    #[test]
    fn short_and_rank_deficient_excitation_is_flagged() {
        let w = instance();
        let data = collect_dataset(&w, 2, ZMode::Gaussian, &CollectConfig::default(), DynamicsModel::Deterministic, 0.0, 1)
            .unwrap();
        assert!(!data.z_full_rank);
        assert!(!data.warnings.is_empty());

        let z = DMatrix::from_fn(4, 4, |i, j| if j == 0 { i as f64 } else { 1.0 });
        let data = collect_dataset(&w, 4, ZMode::Given(z), &CollectConfig::default(), DynamicsModel::Deterministic, 0.0, 1)
            .unwrap();
        assert!(!data.z_full_rank);
    }

    #[test]
    fn reproducible_and_json_shaped() {
        let w = instance();
        let cfg = CollectConfig { window: 2_000, samples: 100, ..Default::default() };
        let a = collect_dataset(&w, 5, ZMode::Gaussian, &cfg, DynamicsModel::NeighborSampling, 0.05, 3).unwrap();
        let b = collect_dataset(&w, 5, ZMode::Gaussian, &cfg, DynamicsModel::NeighborSampling, 0.05, 3).unwrap();
        assert_eq!(a, b);
        let json = serde_json::to_value(&a).unwrap();
        for key in ["Z", "Y_hat", "K", "sigma", "model", "seeds"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        let back: SteadyStateData = serde_json::from_value(json).unwrap();
        assert_eq!(back.y_hat, a.y_hat);
    }

    #[test]
    fn burn_in_default() {
        assert_eq!(default_burn_in(0.5), Some(20));
        assert_eq!(default_burn_in(0.0), Some(1));
        assert_eq!(default_burn_in(1.0), None);
    }
}
