use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{default_threshold, expose_support, nmse, support_error};
use crate::dynamics::{collect_dataset, mean_matrix, CollectConfig, DynamicsModel, ZMode};
use crate::error::{invalid, Result};
use crate::graph::{canonical_relative_trust, read_edge_list, Instance, NetworkModel, NetworkTopology, Placement};
use crate::recovery::{fista_solve, solve_ls_full_support, RecoveryMode, RecoveryProblem, SolverConfig};
use crate::rng::derive_seed;

/// Swept parameter and its grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variable", content = "values", rename_all = "snake_case")]
pub enum Sweep {
    NS(Vec<usize>),
    NOrd(Vec<usize>),
    PKnown(Vec<f64>),
    Model(Vec<NetworkModel>),
}

impl Sweep {
    pub fn len(&self) -> usize {
        match self {
            Sweep::NS(v) | Sweep::NOrd(v) => v.len(),
            Sweep::PKnown(v) => v.len(),
            Sweep::Model(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Text form of grid point `k`, as written to the results.
    pub fn label(&self, k: usize) -> String {
        match self {
            Sweep::NS(v) | Sweep::NOrd(v) => v[k].to_string(),
            Sweep::PKnown(v) => v[k].to_string(),
            Sweep::Model(v) => model_label(&v[k]),
        }
    }
}

pub fn model_label(m: &NetworkModel) -> String {
    match *m {
        NetworkModel::ErdosRenyi { p } => format!("ER p={p}"),
        NetworkModel::BarabasiAlbert { m } => format!("BA m={m}"),
        NetworkModel::WattsStrogatz { b, p_rewire } => format!("WS b={b} p={p_rewire}"),
    }
}

/// How the steady-state data is produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub model: DynamicsModel,
    /// Observation noise standard deviation.
    pub sigma: f64,
    /// `K = ceil(k_factor * n_s)` discussions.
    pub k_factor: f64,
    pub collect: CollectConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { model: DynamicsModel::Deterministic, sigma: 0.0, k_factor: 2.0, collect: CollectConfig::default() }
    }
}

/// One Monte-Carlo sweep. Every field except `sweep` has a default; see
/// `configs/` for complete examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Free text, e.g. why a desk-scale config departs from the defaults.
    pub notes: String,
    pub sweep: Sweep,
    pub trials: usize,
    pub seed: u64,
    pub network: NetworkModel,
    /// Read the ordinary network from this edge list instead of generating it.
    pub edge_list: Option<PathBuf>,
    /// Add the reverse of every ingested edge.
    pub symmetrize: bool,
    pub n_ord: usize,
    pub n_s: usize,
    /// When set, `n_s = ceil(n_s_ratio * n_ord)` instead of `n_s`.
    pub n_s_ratio: Option<f64>,
    pub placement: Placement,
    /// `full_support` uses the true support of `D`; `sparse` uses all
    /// off-diagonal pairs minus the exposed zeros.
    pub mode: RecoveryMode,
    /// Fraction of the zeros of `D` revealed to the sparse solver.
    pub p_known: f64,
    /// Common diagonal target of `D'`.
    pub c: f64,
    pub data: DataConfig,
    pub solver: SolverConfig,
    /// Support threshold; `None` uses `1e-4 * max(D')` per trial.
    pub support_tau: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: String::new(),
            notes: String::new(),
            sweep: Sweep::NS(Vec::new()),
            trials: 100,
            seed: 0,
            network: NetworkModel::ErdosRenyi { p: 0.1 },
            edge_list: None,
            symmetrize: false,
            n_ord: 60,
            n_s: 20,
            n_s_ratio: None,
            placement: Placement::DRegular { d: 5 },
            mode: RecoveryMode::Sparse,
            p_known: 0.0,
            c: 0.0,
            data: DataConfig::default(),
            solver: SolverConfig::default(),
            support_tau: None,
        }
    }
}

/// Parameters of one grid point after applying the sweep.
#[derive(Debug, Clone, PartialEq)]
struct Point {
    network: NetworkModel,
    n_ord: usize,
    n_s: usize,
    p_known: f64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config; a relative `edge_list` is resolved against the config's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_json(&std::fs::read_to_string(path)?)?;
        if let (Some(el), Some(dir)) = (&cfg.edge_list, path.parent()) {
            if el.is_relative() {
                cfg.edge_list = Some(dir.join(el));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(invalid("trials must be >= 1"));
        }
        if self.sweep.is_empty() {
            return Err(invalid("sweep grid is empty"));
        }
        if !(0.0..=1.0).contains(&self.p_known) {
            return Err(invalid(format!("p_known = {} outside [0, 1]", self.p_known)));
        }
        if !(0.0..1.0).contains(&self.c) {
            return Err(invalid(format!("c = {} outside [0, 1)", self.c)));
        }
        if !(self.data.k_factor >= 1.0) {
            return Err(invalid("k_factor must be >= 1 so that K >= n_s"));
        }
        if !(self.data.sigma >= 0.0) {
            return Err(invalid("sigma must be >= 0"));
        }
        if self.n_s_ratio.is_some_and(|r| !(r > 0.0)) {
            return Err(invalid("n_s_ratio must be > 0"));
        }
        if self.support_tau.is_some_and(|t| !(t > 0.0)) {
            return Err(invalid("support_tau must be > 0"));
        }
        self.data.model.validate()?;
        self.solver.validate()?;
        match &self.sweep {
            Sweep::PKnown(v) => {
                if let Some(p) = v.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                    return Err(invalid(format!("p_known = {p} outside [0, 1]")));
                }
                if self.mode != RecoveryMode::Sparse {
                    return Err(invalid("a p_known sweep needs sparse mode"));
                }
            }
            Sweep::NS(v) if v.contains(&0) => return Err(invalid("n_s must be >= 1")),
            Sweep::NOrd(v) if v.iter().any(|&n| n < 2) => return Err(invalid("n_ord must be >= 2")),
            _ => {}
        }
        if self.edge_list.is_some() && matches!(self.sweep, Sweep::NOrd(_) | Sweep::Model(_)) {
            return Err(invalid("an ingested network cannot be swept over n_ord or model"));
        }
        if self.n_s == 0 || self.n_ord < 2 {
            return Err(invalid("need n_s >= 1 and n_ord >= 2"));
        }
        Ok(())
    }

    fn point(&self, k: usize) -> Point {
        let mut p = Point { network: self.network, n_ord: self.n_ord, n_s: self.n_s, p_known: self.p_known };
        match &self.sweep {
            Sweep::NS(v) => p.n_s = v[k],
            Sweep::NOrd(v) => p.n_ord = v[k],
            Sweep::PKnown(v) => p.p_known = v[k],
            Sweep::Model(v) => p.network = v[k],
        }
        if let Some(r) = self.n_s_ratio {
            p.n_s = ((r * p.n_ord as f64).ceil() as usize).max(1);
        }
        p
    }
}

/// One `(grid point, trial)` outcome. Metrics are empty for failed trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub point: usize,
    pub value: String,
    pub trial: usize,
    pub seed: u64,
    pub n_ord: usize,
    pub n_s: usize,
    pub nmse_d: Option<f64>,
    pub nmse_b: Option<f64>,
    pub support_error: Option<f64>,
    /// Wall-clock seconds of the recovery solve.
    pub runtime: f64,
    pub iterations: usize,
    pub converged: bool,
    pub failed: bool,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
    pub median: f64,
}

impl Stat {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stderr = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len();
        let median = if m % 2 == 1 { sorted[m / 2] } else { 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]) };
        Some(Self { mean, stderr, median })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub point: usize,
    pub value: String,
    pub trials: usize,
    pub failed: usize,
    pub converged: usize,
    pub nmse_d: Option<Stat>,
    pub nmse_b: Option<Stat>,
    pub support_error: Option<Stat>,
    pub runtime: Option<Stat>,
}

impl ResultTable {
    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(|r| r.failed)
    }

    pub fn point_rows(&self, point: usize) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(move |r| r.point == point)
    }

    /// Per grid point statistics over the trials that did not fail.
    pub fn summary(&self) -> Vec<PointSummary> {
        let mut points: Vec<usize> = self.rows.iter().map(|r| r.point).collect();
        points.dedup();
        points
            .into_iter()
            .map(|p| {
                let rows: Vec<&ResultRow> = self.point_rows(p).collect();
                let ok: Vec<&ResultRow> = rows.iter().copied().filter(|r| !r.failed).collect();
                let stat = |f: fn(&ResultRow) -> Option<f64>| Stat::of(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
                PointSummary {
                    point: p,
                    value: rows[0].value.clone(),
                    trials: rows.len(),
                    failed: rows.len() - ok.len(),
                    converged: ok.iter().filter(|r| r.converged).count(),
                    nmse_d: stat(|r| r.nmse_d),
                    nmse_b: stat(|r| r.nmse_b),
                    support_error: stat(|r| r.support_error),
                    runtime: stat(|r| Some(r.runtime)),
                }
            })
            .collect()
    }

    pub fn write_csv(&self, out: impl std::io::Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        for r in &self.rows {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv(input: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?;
        Ok(Self { rows })
    }
}

struct Scores {
    nmse_d: f64,
    nmse_b: f64,
    support_error: f64,
    runtime: f64,
    iterations: usize,
    converged: bool,
}

fn run_trial(cfg: &ExperimentConfig, ingested: Option<&NetworkTopology>, p: &Point, seed: u64) -> Result<Scores> {
    let inst = match ingested {
        Some(t) => Instance::on_topology(t.clone(), p.n_s, cfg.placement, seed)?,
        None => Instance::generate(p.network, p.n_ord, p.n_s, cfg.placement, seed)?,
    };
    let (topology, support, w) = (&inst.topology, &inst.support, &inst.trust);
    let n = topology.n_ord;
    let c = DVector::from_element(n, cfg.c);
    // random dynamics average to their mean matrix, which is what the data identifies
    let mean = mean_matrix(w, cfg.data.model)?;
    let truth = canonical_relative_trust(&mean.b, &mean.d, &c)?;

    let k = (cfg.data.k_factor * p.n_s as f64).ceil() as usize;
    let data = collect_dataset(w, k, ZMode::Gaussian, &cfg.data.collect, cfg.data.model, cfg.data.sigma, derive_seed(seed, &[3]))?;

    let truth_d = topology.mask();
    let allowed_d = match cfg.mode {
        RecoveryMode::FullSupport => truth_d.clone(),
        RecoveryMode::Sparse => expose_support(&truth_d, p.p_known, derive_seed(seed, &[4]))?,
    };
    let problem = RecoveryProblem::from_data(&data, allowed_d.clone(), support.mask(), c, cfg.mode)?;
    let start = Instant::now();
    let res = match cfg.mode {
        RecoveryMode::FullSupport => solve_ls_full_support(&problem, &cfg.solver)?,
        RecoveryMode::Sparse => fista_solve(&problem, &cfg.solver)?,
    };
    let runtime = start.elapsed().as_secs_f64();

    let tau = cfg.support_tau.unwrap_or_else(|| default_threshold(&truth.d));
    Ok(Scores {
        nmse_d: nmse(&res.d_hat, &truth.d)?,
        nmse_b: nmse(&res.b_hat, &truth.b)?,
        support_error: support_error(&res.d_hat, &truth.d, tau, &allowed_d)?,
        runtime,
        iterations: res.iterations,
        converged: res.converged,
    })
}

/// Runs every `(grid point, trial)` pair on the rayon pool. Trial seeds are
/// `derive_seed(seed, [point, trial])`; a trial error is recorded in its row
/// and does not stop the sweep. Apart from `runtime`, the table is a pure
/// function of the config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let ingested = match &cfg.edge_list {
        Some(path) => {
            let file = std::fs::File::open(path).map_err(|e| invalid(format!("edge list {}: {e}", path.display())))?;
            let list = read_edge_list(std::io::BufReader::new(file))?;
            Some(list.to_topology(None, cfg.symmetrize)?)
        }
        None => None,
    };
    let jobs: Vec<(usize, usize)> = (0..cfg.sweep.len()).flat_map(|p| (0..cfg.trials).map(move |t| (p, t))).collect();
    let rows = jobs
        .into_par_iter()
        .map(|(pi, trial)| {
            let p = cfg.point(pi);
            let seed = derive_seed(cfg.seed, &[pi as u64, trial as u64]);
            let n_ord = ingested.as_ref().map_or(p.n_ord, |t| t.n_ord);
            let mut row = ResultRow {
                point: pi,
                value: cfg.sweep.label(pi),
                trial,
                seed,
                n_ord,
                n_s: p.n_s,
                nmse_d: None,
                nmse_b: None,
                support_error: None,
                runtime: 0.0,
                iterations: 0,
                converged: false,
                failed: false,
                error: String::new(),
            };
            match run_trial(cfg, ingested.as_ref(), &p, seed) {
                Ok(s) => {
                    row.nmse_d = Some(s.nmse_d);
                    row.nmse_b = Some(s.nmse_b);
                    row.support_error = Some(s.support_error);
                    row.runtime = s.runtime;
                    row.iterations = s.iterations;
                    row.converged = s.converged;
                }
                Err(e) => {
                    row.failed = true;
                    row.error = e.to_string();
                }
            }
            row
        })
        .collect();
    Ok(ResultTable { rows })
}

/// Config problems map to exit code 2, failed trials to 3.
pub fn exit_code(result: &Result<ResultTable>) -> i32 {
    match result {
        Ok(t) if t.any_failed() => 3,
        Ok(_) => 0,
        Err(_) => 2,
    }
}
