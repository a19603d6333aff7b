use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use serde_json::json;

use trustsense::dynamics::{collect_dataset, simulate, write_trace_csv, CollectConfig, DynamicsModel, SteadyStateData, ZMode};
use trustsense::graph::{read_edge_list, write_edge_list, BipartiteSupport, Instance, NetworkModel, Placement};
use trustsense::harness::{exit_code, run_experiment, ExperimentConfig};
use trustsense::identify::{
    is_expander, rank_report, spark_report, theorem1_budget_condition, theorem1_failure_bound, theorem1_min_beta,
    theorem1_value_condition, StackedDataMatrix,
};
use trustsense::recovery::{brute_force_l0, fista_solve, solve_ls_full_support, RecoveryMode, RecoveryProblem, SolverConfig, StepRule};
use trustsense::rng::rng_from_seed;
use trustsense::{Error, Mask, Result};

#[derive(Parser)]
#[command(name = "trustsense", version, about = "Stubborn-agent sensing of trust networks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Net {
    Er,
    Ba,
    Ws,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dyn {
    Det,
    Ns,
    Bg,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Full,
    Sparse,
    L0,
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    Rank,
    Spark,
    Expander,
    Thm1,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a network, stubborn placement and trust weights.
    Generate {
        #[arg(long, value_enum, default_value = "er")]
        network: Net,
        /// ER edge probability or WS rewiring probability.
        #[arg(long, default_value_t = 0.1)]
        p: f64,
        /// BA edges per arriving node.
        #[arg(long, default_value_t = 2)]
        m: usize,
        /// WS neighbors per side.
        #[arg(long, default_value_t = 2)]
        b: usize,
        /// Ingest the ordinary network from an edge list instead.
        #[arg(long)]
        edge_list: Option<PathBuf>,
        #[arg(long)]
        symmetrize: bool,
        #[arg(long, default_value_t = 60)]
        n_ord: usize,
        #[arg(long, default_value_t = 20)]
        n_s: usize,
        /// Stubborn neighbors per ordinary agent; ignored with --p-s.
        #[arg(long, default_value_t = 5)]
        d: usize,
        /// Random bipartite placement with this edge probability.
        #[arg(long)]
        p_s: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the ordinary network as an edge list.
        #[arg(long)]
        edges_out: Option<PathBuf>,
    },
    /// Simulate one discussion and write its trace as CSV.
    Simulate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "det")]
        model: Dyn,
        /// Broadcast weight for --model bg.
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        #[arg(long = "T", default_value_t = 100)]
        horizon: u64,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect steady-state data over K discussions.
    Collect {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "K")]
        k: usize,
        #[arg(long, value_enum, default_value = "det")]
        model: Dyn,
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        /// Samples per discussion for the temporal average.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long)]
        burn_in: Option<u64>,
        /// Length of the sampling window after burn-in.
        #[arg(long, default_value_t = 100_000)]
        window: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover the relative trust matrices from a dataset.
    Recover {
        #[arg(long = "in")]
        input: PathBuf,
        /// Instance providing the stubborn placement (and the support of D in full mode).
        #[arg(long)]
        instance: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "sparse")]
        mode: Mode,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 1e-3)]
        gamma: f64,
        #[arg(long, default_value_t = 40_000)]
        iters: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Fixed step size instead of 0.9 / L.
        #[arg(long)]
        step: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        c: f64,
        /// Largest off-diagonal row support tried by --mode l0.
        #[arg(long, default_value_t = 2)]
        k_max: usize,
        /// Residual tolerance for --mode l0.
        #[arg(long, default_value_t = 1e-9)]
        eps: f64,
        #[arg(long)]
        out: PathBuf,
        /// Objective trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Identifiability and expander checks; prints a JSON verdict.
    Check {
        #[arg(long, value_enum)]
        what: What,
        /// Dataset (rank, spark) or instance/support (expander).
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Instance giving the supports for rank and spark.
        #[arg(long)]
        instance: Option<PathBuf>,
        #[arg(long, default_value_t = 0.16)]
        alpha: f64,
        #[arg(long, default_value_t = 0.75)]
        delta: f64,
        #[arg(long, default_value_t = 5)]
        d: usize,
        /// Network size for the finite-size offset of thm1.
        #[arg(long)]
        n: Option<usize>,
        /// Row sparsity for spark; default is each row's true degree.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        b_min: Option<f64>,
        #[arg(long)]
        b_max: Option<f64>,
        /// Relative singular-value cutoff for numerical rank; noiseless
        /// iterated data wants about 1e-9.
        #[arg(long)]
        rank_tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte-Carlo sweep from a JSON config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-point mean/stderr; defaults to the CSV path with a .summary.json suffix.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

fn dyn_model(m: Dyn, gamma: f64) -> DynamicsModel {
    match m {
        Dyn::Det => DynamicsModel::Deterministic,
        Dyn::Ns => DynamicsModel::NeighborSampling,
        Dyn::Bg => DynamicsModel::BroadcastGossip { gamma },
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn emit(out: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => match writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(value)?) {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            r => Ok(r?),
        },
    }
}

/// Accepts either a full instance or a bare bipartite support.
fn read_support(path: &Path) -> Result<BipartiteSupport> {
    let v: serde_json::Value = read_json(path)?;
    if let Some(s) = v.get("support") {
        return Ok(serde_json::from_value(s.clone())?);
    }
    Ok(serde_json::from_value(v)?)
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Generate { network, p, m, b, edge_list, symmetrize, n_ord, n_s, d, p_s, seed, out, edges_out } => {
            let placement = match p_s {
                Some(p_s) => Placement::ErBipartite { p_s },
                None => Placement::DRegular { d },
            };
            let inst = match edge_list {
                Some(path) => {
                    let list = read_edge_list(BufReader::new(File::open(path)?))?;
                    Instance::on_topology(list.to_topology(None, symmetrize)?, n_s, placement, seed)?
                }
                None => {
                    let model = match network {
                        Net::Er => NetworkModel::ErdosRenyi { p },
                        Net::Ba => NetworkModel::BarabasiAlbert { m },
                        Net::Ws => NetworkModel::WattsStrogatz { b, p_rewire: p },
                    };
                    Instance::generate(model, n_ord, n_s, placement, seed)?
                }
            };
            if let Some(path) = edges_out {
                write_edge_list(&inst.topology, BufWriter::new(File::create(path)?))?;
            }
            write_json(&out, &inst)
        }
        Cmd::Simulate { input, model, gamma, horizon, sigma, seed, out } => {
            let inst: Instance = read_json(&input)?;
            let mut rng = rng_from_seed(seed);
            let z = DVector::from_fn(inst.n_s(), |_, _| StandardNormal.sample(&mut rng));
            let y0 = DVector::zeros(inst.n_ord());
            let trace = simulate(&inst.trust, &z, &y0, horizon, dyn_model(model, gamma), sigma, seed)?;
            write_trace_csv(&trace, BufWriter::new(File::create(out)?))
        }
        Cmd::Collect { input, k, model, gamma, sigma, samples, burn_in, window, seed, out } => {
            let inst: Instance = read_json(&input)?;
            let cfg = CollectConfig { burn_in, window, samples, ..CollectConfig::default() };
            let data = collect_dataset(&inst.trust, k, ZMode::Gaussian, &cfg, dyn_model(model, gamma), sigma, seed)?;
            for w in &data.warnings {
                eprintln!("warning: {w}");
            }
            write_json(&out, &data)
        }
        Cmd::Recover { input, instance, mode, lambda, gamma, iters, tol, step, c, k_max, eps, out, trace } => {
            let data: SteadyStateData = read_json(&input)?;
            let (n, ns) = (data.n_ord(), data.n_s());
            let inst: Option<Instance> = instance.as_deref().map(read_json).transpose()?;
            let allowed_b = inst.as_ref().map_or_else(|| Mask::full(n, ns), |i| i.support.mask());
            let allowed_d = match (mode, &inst) {
                (Mode::Full, Some(i)) => i.topology.mask(),
                (Mode::Full, None) => return Err(Error::Precondition("--mode full needs --instance for the support of D".into())),
                _ => Mask::off_diagonal(n),
            };
            let rmode = if matches!(mode, Mode::Full) { RecoveryMode::FullSupport } else { RecoveryMode::Sparse };
            let problem = RecoveryProblem::from_data(&data, allowed_d, allowed_b, DVector::from_element(n, c), rmode)?;
            let solver = SolverConfig {
                lambda,
                gamma,
                max_iters: iters,
                tol,
                step: step.map_or(StepRule::Auto, |alpha| StepRule::Fixed { alpha }),
                ..SolverConfig::default()
            };
            let res = match mode {
                Mode::Full => solve_ls_full_support(&problem, &solver)?,
                Mode::Sparse => fista_solve(&problem, &solver)?,
                Mode::L0 => brute_force_l0(&problem, k_max, eps)?,
            };
            if let Some(path) = trace {
                res.write_trace_csv(BufWriter::new(File::create(path)?))?;
            }
            eprintln!(
                "iterations {} converged {} objective {:e}",
                res.iterations,
                res.converged,
                res.objective_trace.last().copied().unwrap_or(f64::NAN)
            );
            write_json(&out, &res)
        }
        Cmd::Check { what, input, instance, alpha, delta, d, n, k, b_min, b_max, rank_tol, out } => {
            let need = |p: &Option<PathBuf>, flag: &str| {
                p.clone().ok_or_else(|| Error::InvalidParameter(format!("--what needs {flag}")))
            };
            let verdict = match what {
                What::Rank | What::Spark => {
                    let data: SteadyStateData = read_json(&need(&input, "--in dataset.json")?)?;
                    let mut a = StackedDataMatrix::from_data(&data)?;
                    if let Some(tol) = rank_tol {
                        a = a.with_tolerance(tol);
                    }
                    let inst: Option<Instance> = instance.as_deref().map(read_json).transpose()?;
                    let (n, ns) = (data.n_ord(), data.n_s());
                    let allowed_b = inst.as_ref().map_or_else(|| Mask::full(n, ns), |i| i.support.mask());
                    if matches!(what, What::Rank) {
                        let allowed_d = inst.as_ref().map_or_else(|| Mask::off_diagonal(n), |i| i.topology.mask());
                        let rows = rank_report(&a, &allowed_d, &allowed_b)?;
                        json!({ "what": "rank", "holds": rows.iter().all(|r| r.holds), "rows": rows })
                    } else {
                        let ks: Vec<usize> = match (k, &inst) {
                            (Some(k), _) => vec![k; n],
                            (None, Some(i)) => (0..n).map(|r| i.topology.out_degree(r)).collect(),
                            (None, None) => return Err(Error::InvalidParameter("spark needs --k or --instance".into())),
                        };
                        let rows = spark_report(&a, &Mask::off_diagonal(n), &allowed_b, &ks)?;
                        json!({ "what": "spark", "holds": rows.iter().all(|r| r.holds), "rows": rows })
                    }
                }
                What::Expander => {
                    let support = read_support(&need(&input, "--in support.json")?)?;
                    let v = is_expander(&support, alpha, delta)?;
                    json!({ "what": "expander", "alpha": alpha, "delta": delta, "verdict": v })
                }
                What::Thm1 => {
                    let beta = theorem1_min_beta(alpha, d, n)?;
                    let asymptotic = theorem1_min_beta(alpha, d, None)?;
                    let mut v = json!({
                        "what": "thm1",
                        "alpha": alpha,
                        "d": d,
                        "min_beta": beta,
                        "min_beta_asymptotic": asymptotic,
                        "budget_condition_at_min_beta": theorem1_budget_condition(alpha, (asymptotic + 1e-9).min(1.0), d)?,
                    });
                    if let Some(n) = n {
                        v["failure_bound"] = serde_json::to_value(theorem1_failure_bound(d, beta.min(1.0), n)?)?;
                    }
                    if let (Some(lo), Some(hi)) = (b_min, b_max) {
                        v["value_condition"] = json!(theorem1_value_condition(lo, hi, d));
                    }
                    v
                }
            };
            emit(out.as_deref(), &verdict)
        }
        Cmd::Experiment { .. } => unreachable!("handled in main"),
    }
}

fn experiment(config: &Path, out: &Path, summary: Option<PathBuf>) -> u8 {
    let cfg = match ExperimentConfig::from_file(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return 2;
        }
    };
    let result = run_experiment(&cfg);
    let table = match &result {
        Ok(t) => t,
        Err(e) => {
            eprintln!("config error: {e}");
            return 2;
        }
    };
    let summary_path = summary.unwrap_or_else(|| out.with_extension("summary.json"));
    let written = File::create(out)
        .map_err(Error::from)
        .and_then(|f| table.write_csv(BufWriter::new(f)))
        .and_then(|_| write_json(&summary_path, &json!({ "name": cfg.name, "points": table.summary() })));
    if let Err(e) = written {
        eprintln!("error: {e}");
        return 1;
    }
    for p in table.summary() {
        let fmt = |s: Option<trustsense::harness::Stat>| s.map_or("-".to_string(), |s| format!("{:.3e} ± {:.1e}", s.mean, s.stderr));
        eprintln!(
            "{:>12}  nmse_d {}  support_error {}  failed {}/{}",
            p.value,
            fmt(p.nmse_d),
            fmt(p.support_error),
            p.failed,
            p.trials
        );
    }
    for r in table.rows.iter().filter(|r| r.failed) {
        eprintln!("trial {} at {} failed: {}", r.trial, r.value, r.error);
    }
    exit_code(&result) as u8
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Cmd::Experiment { config, out, summary } = cli.cmd {
        return ExitCode::from(experiment(&config, &out, summary));
    }
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidParameter(_) | Error::Parse { .. } | Error::Json(_) | Error::Io(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
