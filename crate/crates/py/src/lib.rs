//! Python bindings. Matrices cross the boundary as lists of rows.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use trustsense::dynamics::{self as dyn_, CollectConfig, DynamicsModel, SteadyStateData, ZMode};
use trustsense::graph::{canonical_relative_trust, read_edge_list, Instance, NetworkModel, Placement};
use trustsense::harness::{self, ExperimentConfig};
use trustsense::identify::{self, StackedDataMatrix};
use trustsense::recovery::{self, RecoveryMode, RecoveryProblem, RecoveryResult, SolverConfig};
use trustsense::Mask;

create_exception!(trustsense, TrustsenseError, PyException);

fn err(e: trustsense::Error) -> PyErr {
    match e {
        trustsense::Error::InvalidParameter(_) | trustsense::Error::DimensionMismatch { .. } => PyValueError::new_err(e.to_string()),
        _ => TrustsenseError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<nalgebra::DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(nalgebra::DMatrix::from_row_iterator(r, c, rows.into_iter().flatten()))
}

fn placement(d: usize, p_s: Option<f64>) -> Placement {
    match p_s {
        Some(p_s) => Placement::ErBipartite { p_s },
        None => Placement::DRegular { d },
    }
}

fn dynamics(model: &str, gamma: f64) -> PyResult<DynamicsModel> {
    match model {
        "det" => Ok(DynamicsModel::Deterministic),
        "ns" => Ok(DynamicsModel::NeighborSampling),
        "bg" => Ok(DynamicsModel::BroadcastGossip { gamma }),
        _ => Err(PyValueError::new_err(format!("unknown dynamics model {model:?}; use det, ns or bg"))),
    }
}

/// Ordinary network, stubborn placement and trust matrix.
#[pyclass(name = "Instance", module = "trustsense", skip_from_py_object)]
#[derive(Clone)]
struct PyInstance {
    inner: Instance,
}

#[pymethods]
impl PyInstance {
    /// Random instance; `network` is "er", "ba" or "ws".
    #[staticmethod]
    #[pyo3(signature = (network="er", n_ord=60, n_s=20, d=5, p=0.1, m=2, b=2, p_s=None, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn generate(network: &str, n_ord: usize, n_s: usize, d: usize, p: f64, m: usize, b: usize, p_s: Option<f64>, seed: u64) -> PyResult<Self> {
        let model = match network {
            "er" => NetworkModel::ErdosRenyi { p },
            "ba" => NetworkModel::BarabasiAlbert { m },
            "ws" => NetworkModel::WattsStrogatz { b, p_rewire: p },
            _ => return Err(PyValueError::new_err(format!("unknown network {network:?}; use er, ba or ws"))),
        };
        let inner = Instance::generate(model, n_ord, n_s, placement(d, p_s), seed).map_err(err)?;
        Ok(Self { inner })
    }

    /// Ordinary network read from a whitespace-separated edge list.
    #[staticmethod]
    #[pyo3(signature = (path, n_s, d=5, p_s=None, symmetrize=false, seed=0))]
    fn from_edge_list(path: PathBuf, n_s: usize, d: usize, p_s: Option<f64>, symmetrize: bool, seed: u64) -> PyResult<Self> {
        let file = File::open(&path).map_err(|e| err(e.into()))?;
        let list = read_edge_list(BufReader::new(file)).map_err(err)?;
        let topology = list.to_topology(None, symmetrize).map_err(err)?;
        let inner = Instance::on_topology(topology, n_s, placement(d, p_s), seed).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: serde_json::from_str(text).map_err(json_err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    #[getter]
    fn n_ord(&self) -> usize {
        self.inner.n_ord()
    }

    #[getter]
    fn n_s(&self) -> usize {
        self.inner.n_s()
    }

    /// Directed edges `(i, j)`: agent `i` listens to agent `j`.
    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.topology.edges().iter().copied().collect()
    }

    #[getter(B)]
    fn b(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.trust.b)
    }

    #[getter(D)]
    fn d(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.trust.d)
    }

    /// Relative trust `(B', D')` with `diag(D') = c` under the mean dynamics of `model`.
    #[pyo3(signature = (c=0.0, model="det", gamma=0.5))]
    fn relative_trust(&self, c: f64, model: &str, gamma: f64) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let w = dyn_::mean_matrix(&self.inner.trust, dynamics(model, gamma)?).map_err(err)?;
        let c = nalgebra::DVector::from_element(self.inner.n_ord(), c);
        let pair = canonical_relative_trust(&w.b, &w.d, &c).map_err(err)?;
        Ok((rows(&pair.b), rows(&pair.d)))
    }

    /// Whether the stubborn support is an `(alpha, delta)` expander.
    #[pyo3(signature = (alpha=0.16, delta=0.75))]
    fn is_expander(&self, alpha: f64, delta: f64) -> PyResult<bool> {
        Ok(identify::is_expander(&self.inner.support, alpha, delta).map_err(err)?.is_expander)
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(n_ord={}, n_s={}, edges={})",
            self.inner.n_ord(),
            self.inner.n_s(),
            self.inner.topology.edge_count()
        )
    }
}

/// Excitations `Z` and steady-state estimates `Y_hat`.
#[pyclass(name = "Dataset", module = "trustsense", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: SteadyStateData,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: serde_json::from_str(text).map_err(json_err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    #[getter(Z)]
    fn z(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.z)
    }

    #[getter(Y_hat)]
    fn y_hat(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.y_hat)
    }

    #[getter(K)]
    fn k(&self) -> usize {
        self.inner.z.ncols()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    /// Rank condition for unique least-squares recovery on every row.
    #[pyo3(signature = (instance=None, rank_tol=None))]
    fn rank_condition(&self, instance: Option<&PyInstance>, rank_tol: Option<f64>) -> PyResult<bool> {
        let a = stacked(&self.inner, rank_tol)?;
        let (n, ns) = (self.inner.n_ord(), self.inner.n_s());
        let allowed_d = instance.map_or_else(|| Mask::off_diagonal(n), |i| i.inner.topology.mask());
        let allowed_b = instance.map_or_else(|| Mask::full(n, ns), |i| i.inner.support.mask());
        let report = identify::rank_report(&a, &allowed_d, &allowed_b).map_err(err)?;
        Ok(report.iter().all(|r| r.holds))
    }

    /// Spark condition for unique `k`-sparse rows of `D`.
    #[pyo3(signature = (instance, k, rank_tol=None))]
    fn spark_condition(&self, instance: &PyInstance, k: usize, rank_tol: Option<f64>) -> PyResult<bool> {
        let a = stacked(&self.inner, rank_tol)?;
        let n = self.inner.n_ord();
        let report = identify::spark_report(&a, &Mask::off_diagonal(n), &instance.inner.support.mask(), &vec![k; n]).map_err(err)?;
        Ok(report.iter().all(|r| r.holds))
    }
}

fn stacked(data: &SteadyStateData, rank_tol: Option<f64>) -> PyResult<StackedDataMatrix> {
    let a = StackedDataMatrix::from_data(data).map_err(err)?;
    Ok(match rank_tol {
        Some(t) => a.with_tolerance(t),
        None => a,
    })
}

/// Steady-state data for `k` Gaussian discussions.
#[pyfunction]
#[pyo3(signature = (instance, k, model="det", gamma=0.5, sigma=0.0, samples=10_000, window=100_000, burn_in=None, seed=0))]
#[allow(clippy::too_many_arguments)]
fn collect(
    py: Python<'_>,
    instance: &PyInstance,
    k: usize,
    model: &str,
    gamma: f64,
    sigma: f64,
    samples: usize,
    window: u64,
    burn_in: Option<u64>,
    seed: u64,
) -> PyResult<PyDataset> {
    let model = dynamics(model, gamma)?;
    let cfg = CollectConfig { samples, window, burn_in, ..CollectConfig::default() };
    let w = &instance.inner.trust;
    let inner = py.detach(|| dyn_::collect_dataset(w, k, ZMode::Gaussian, &cfg, model, sigma, seed)).map_err(err)?;
    Ok(PyDataset { inner })
}

#[pyclass(name = "Recovery", module = "trustsense")]
struct PyRecovery {
    inner: RecoveryResult,
}

#[pymethods]
impl PyRecovery {
    #[getter(B_hat)]
    fn b_hat(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.b_hat)
    }

    #[getter(D_hat)]
    fn d_hat(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.d_hat)
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn objective_trace(&self) -> Vec<f64> {
        self.inner.objective_trace.clone()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    fn __repr__(&self) -> String {
        format!("Recovery(iterations={}, converged={})", self.inner.iterations, self.inner.converged)
    }
}

/// Recovers `(B', D')` from a dataset. `mode` is "full" (needs the instance
/// for the exact support), "sparse" or "l0" (brute force, `k_max` per row).
#[pyfunction]
#[pyo3(signature = (data, instance=None, mode="sparse", lam=None, gamma=1e-3, max_iters=40_000, tol=1e-10, c=0.0, k_max=2, eps=1e-9))]
#[allow(clippy::too_many_arguments)]
fn recover(
    py: Python<'_>,
    data: &PyDataset,
    instance: Option<&PyInstance>,
    mode: &str,
    lam: Option<f64>,
    gamma: f64,
    max_iters: usize,
    tol: f64,
    c: f64,
    k_max: usize,
    eps: f64,
) -> PyResult<PyRecovery> {
    let (n, ns) = (data.inner.n_ord(), data.inner.n_s());
    let allowed_b = instance.map_or_else(|| Mask::full(n, ns), |i| i.inner.support.mask());
    let c = nalgebra::DVector::from_element(n, c);
    let cfg = SolverConfig { lambda: lam, gamma, max_iters, tol, ..SolverConfig::default() };
    let (allowed_d, rmode) = match mode {
        "full" => {
            let inst = instance.ok_or_else(|| PyValueError::new_err("full mode needs the instance"))?;
            (inst.inner.topology.mask(), RecoveryMode::FullSupport)
        }
        "sparse" | "l0" => (Mask::off_diagonal(n), RecoveryMode::Sparse),
        _ => return Err(PyValueError::new_err(format!("unknown mode {mode:?}; use full, sparse or l0"))),
    };
    let problem = RecoveryProblem::from_data(&data.inner, allowed_d, allowed_b, c, rmode).map_err(err)?;
    let inner = py
        .detach(|| match mode {
            "full" => recovery::solve_ls_full_support(&problem, &cfg),
            "l0" => recovery::brute_force_l0(&problem, k_max, eps),
            _ => recovery::fista_solve(&problem, &cfg),
        })
        .map_err(err)?;
    Ok(PyRecovery { inner })
}

/// `||estimate - truth||_F^2 / ||truth||_F^2`.
#[pyfunction]
fn nmse(estimate: Vec<Vec<f64>>, truth: Vec<Vec<f64>>) -> PyResult<f64> {
    harness::nmse(&matrix(estimate)?, &matrix(truth)?).map_err(err)
}

/// Smallest stubborn-to-ordinary ratio meeting the budget condition.
#[pyfunction]
#[pyo3(signature = (alpha, d, n=None))]
fn theorem1_min_beta(alpha: f64, d: usize, n: Option<usize>) -> PyResult<f64> {
    identify::theorem1_min_beta(alpha, d, n).map_err(err)
}

/// Runs a sweep from a JSON config and returns `{"rows": [...], "summary": [...]}`.
/// A relative `edge_list` resolves against `base_dir`.
#[pyfunction]
#[pyo3(signature = (config_json, base_dir=None))]
fn run_experiment<'py>(py: Python<'py>, config_json: &str, base_dir: Option<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = ExperimentConfig::from_json(config_json).map_err(err)?;
    if let (Some(base), Some(path)) = (base_dir, cfg.edge_list.as_mut()) {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
    let table = py.detach(|| harness::run_experiment(&cfg)).map_err(err)?;
    let out = serde_json::json!({ "rows": table.rows, "summary": table.summary() });
    let text = serde_json::to_string(&out).map_err(json_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pymodule]
#[pyo3(name = "trustsense")]
fn trustsense_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TrustsenseError", m.py().get_type::<TrustsenseError>())?;
    m.add_class::<PyInstance>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyRecovery>()?;
    m.add_function(wrap_pyfunction!(collect, m)?)?;
    m.add_function(wrap_pyfunction!(recover, m)?)?;
    m.add_function(wrap_pyfunction!(nmse, m)?)?;
    m.add_function(wrap_pyfunction!(theorem1_min_beta, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
