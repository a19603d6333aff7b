use nalgebra::DMatrix;
use rayon::prelude::*;

use super::objective::{fit_residual, lipschitz_masked, lipschitz_of, prox_rows, row_gap, smooth_grad, smooth_value};
use super::{Feasibility, RecoveryMode, RecoveryProblem, RecoveryResult, SolverConfig, StepRule};
use crate::error::{Error, Result};

struct BlockOutcome {
    b: DMatrix<f64>,
    d: DMatrix<f64>,
    objective: Vec<f64>,
    residual: Vec<f64>,
    iterations: usize,
    converged: bool,
    step: f64,
}

/// Accelerated proximal gradient on the rows `rows` of the problem.
fn run_block(
    problem: &RecoveryProblem,
    m: &DMatrix<f64>,
    rows: &[usize],
    lambda: f64,
    lipschitz: f64,
    cfg: &SolverConfig,
) -> Result<BlockOutcome> {
    let (n, ns) = m.shape();
    let k = rows.len();
    let target = DMatrix::from_fn(k, ns, |r, j| m[(rows[r], j)]);
    let c_sum: f64 = rows.iter().map(|&i| problem.c[i]).sum();

    let mut b = DMatrix::zeros(k, ns);
    let mut d = DMatrix::zeros(k, n);
    for (r, &i) in rows.iter().enumerate() {
        let support = problem.allowed_b.row_indices(i);
        for &j in &support {
            b[(r, j)] = (1.0 - problem.c[i]) / support.len() as f64;
        }
        d[(r, i)] = problem.c[i];
    }

    let eval = |b: &DMatrix<f64>, d: &DMatrix<f64>| {
        let r = fit_residual(&target, b, d, m);
        let s = row_gap(b, d);
        let penalty = lambda * (d.sum() - c_sum);
        (smooth_value(&r, &s, cfg.gamma) + penalty, r.norm())
    };

    let (f0, r0) = eval(&b, &d);
    let mut objective = vec![f0];
    let mut residual = vec![r0];
    let floor = cfg.floor * f0;
    let mut local_l = match cfg.step {
        StepRule::Auto => lipschitz / 0.9,
        StepRule::Fixed { alpha } => 1.0 / alpha,
        StepRule::Backtracking { .. } => 1.0,
    };
    if f0 <= floor || f0 == 0.0 {
        return Ok(BlockOutcome { b, d, objective, residual, iterations: 0, converged: true, step: 1.0 / local_l });
    }

    let (mut yb, mut yd) = (b.clone(), d.clone());
    let mut t = 1.0f64;
    let mut f_prev = f0;
    let mut converged = false;
    let mut iterations = cfg.max_iters;
    for it in 1..=cfg.max_iters {
        let r = fit_residual(&target, &yb, &yd, m);
        let s = row_gap(&yb, &yd);
        let (gb, gd) = smooth_grad(&r, &s, m, cfg.gamma);
        let (nb, nd) = loop {
            let alpha = 1.0 / local_l;
            let (nb, nd) = prox_rows(&(&yb - &gb * alpha), &(&yd - &gd * alpha), alpha * lambda, rows, &problem.allowed_b, &problem.allowed_d, &problem.c);
            let StepRule::Backtracking { factor } = cfg.step else { break (nb, nd) };
            let f_y = smooth_value(&r, &s, cfg.gamma);
            let f_n = smooth_value(&fit_residual(&target, &nb, &nd, m), &row_gap(&nb, &nd), cfg.gamma);
            let (db, dd) = (&nb - &yb, &nd - &yd);
            let model = f_y + gb.dot(&db) + gd.dot(&dd) + 0.5 * local_l * (db.norm_squared() + dd.norm_squared());
            if f_n <= model + 1e-12 * f_y.abs() {
                break (nb, nd);
            }
            local_l *= factor;
        };

        let (f_new, r_new) = eval(&nb, &nd);
        if !f_new.is_finite() || f_new > 1e6 * f0 {
            return Err(Error::Divergence { iteration: it, objective: f_new });
        }
        objective.push(f_new);
        residual.push(r_new);

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if cfg.restart && f_new > f_prev {
            yb.copy_from(&nb);
            yd.copy_from(&nd);
            t = 1.0;
        } else {
            let beta = (t - 1.0) / t_next;
            yb = &nb + (&nb - &b) * beta;
            yd = &nd + (&nd - &d) * beta;
            t = t_next;
        }
        b = nb;
        d = nd;

        let rel = (f_prev - f_new).abs() / f_prev.max(f64::MIN_POSITIVE);
        f_prev = f_new;
        if f_new <= floor || rel < cfg.tol {
            converged = true;
            iterations = it;
            break;
        }
    }
    Ok(BlockOutcome { b, d, objective, residual, iterations, converged, step: 1.0 / local_l })
}

fn rescale_rows(b: &mut DMatrix<f64>, d: &mut DMatrix<f64>, c: &nalgebra::DVector<f64>) {
    for i in 0..b.nrows() {
        let s = b.row(i).sum() + d.row(i).sum() - d[(i, i)];
        if s > 0.0 {
            let scale = (1.0 - c[i]) / s;
            b.row_mut(i).scale_mut(scale);
            let keep = d[(i, i)];
            d.row_mut(i).scale_mut(scale);
            d[(i, i)] = keep;
        }
    }
}

/// Joint FISTA over `(B, D)` with an l1 penalty on the off-diagonal of `D`
/// in sparse mode.
pub fn fista_solve(problem: &RecoveryProblem, cfg: &SolverConfig) -> Result<RecoveryResult> {
    problem.validate()?;
    cfg.validate()?;
    let m = problem.response()?;
    let lambda = match problem.mode {
        RecoveryMode::Sparse => cfg.resolved_lambda(problem.n_ord(), &m),
        RecoveryMode::FullSupport => cfg.lambda.unwrap_or(0.0),
    };
    let rows: Vec<usize> = (0..problem.n_ord()).collect();
    let lip = lipschitz_of(&m, cfg.gamma);
    let out = run_block(problem, &m, &rows, lambda, lip, cfg)?;
    let (mut b, mut d) = (out.b, out.d);
    if cfg.rescale_rows {
        rescale_rows(&mut b, &mut d, &problem.c);
    }
    Ok(RecoveryResult {
        feasibility: Feasibility::of(&b, &d, problem),
        b_hat: b,
        d_hat: d,
        objective_trace: out.objective,
        residual_trace: out.residual,
        iterations: out.iterations,
        converged: out.converged,
        lambda,
        step: out.step,
    })
}

/// Constrained least squares when the support of `D` is known: every row
/// is solved independently (in parallel) and then rescaled so that
/// `B 1 + D 1 = 1` holds exactly.
pub fn solve_ls_full_support(problem: &RecoveryProblem, cfg: &SolverConfig) -> Result<RecoveryResult> {
    if problem.mode != RecoveryMode::FullSupport {
        return Err(Error::Precondition("least-squares recovery needs full-support mode".into()));
    }
    problem.validate()?;
    cfg.validate()?;
    let m = problem.response()?;
    let n = problem.n_ord();
    let outcomes: Vec<Result<BlockOutcome>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let b_idx = problem.allowed_b.row_indices(i);
            let d_idx = problem.allowed_d.row_indices(i);
            let lip = lipschitz_masked(&m, cfg.gamma, &b_idx, &d_idx);
            run_block(problem, &m, &[i], 0.0, lip, cfg)
        })
        .collect();

    let mut b = DMatrix::zeros(n, problem.n_s());
    let mut d = DMatrix::zeros(n, n);
    let mut rows = Vec::with_capacity(n);
    for (i, out) in outcomes.into_iter().enumerate() {
        let out = out?;
        b.set_row(i, &out.b.row(0));
        d.set_row(i, &out.d.row(0));
        rows.push(out);
    }
    rescale_rows(&mut b, &mut d, &problem.c);

    let len = rows.iter().map(|o| o.objective.len()).max().unwrap_or(1);
    let pad = |v: &[f64], k: usize| v.get(k).or(v.last()).copied().unwrap_or(0.0);
    let objective_trace = (0..len).map(|k| rows.iter().map(|o| pad(&o.objective, k)).sum()).collect();
    let residual_trace = (0..len)
        .map(|k| rows.iter().map(|o| pad(&o.residual, k).powi(2)).sum::<f64>().sqrt())
        .collect();
    Ok(RecoveryResult {
        feasibility: Feasibility::of(&b, &d, problem),
        b_hat: b,
        d_hat: d,
        objective_trace,
        residual_trace,
        iterations: rows.iter().map(|o| o.iterations).max().unwrap_or(0),
        converged: rows.iter().all(|o| o.converged),
        lambda: 0.0,
        step: rows.iter().map(|o| o.step).fold(f64::INFINITY, f64::min),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::steady_state_exact;
    use crate::graph::{build_trust_matrix, canonical_relative_trust, gen_network, place_stubborn, NetworkModel, Placement};
    use crate::mask::Mask;
    use crate::rng::rng_from_seed;
    use nalgebra::DVector;
    use rand_distr::{Distribution, StandardNormal};

    struct Case {
        problem: RecoveryProblem,
        b: DMatrix<f64>,
        d: DMatrix<f64>,
    }

    fn case(n: usize, ns: usize, d_deg: usize, mode: RecoveryMode, seed: u64) -> Case {
        let topo = gen_network(NetworkModel::ErdosRenyi { p: 0.15 }, n, seed).unwrap();
        let sup = place_stubborn(n, ns, Placement::DRegular { d: d_deg }, seed).unwrap();
        let w = build_trust_matrix(&topo, &sup, seed).unwrap();
        let mut rng = rng_from_seed(seed);
        let z = DMatrix::from_fn(ns, 2 * ns, |_, _| StandardNormal.sample(&mut rng));
        let y = steady_state_exact(&w.b, &w.d, &z).unwrap();
        let c = DVector::from_element(n, 0.0);
        let rel = canonical_relative_trust(&w.b, &w.d, &c).unwrap();
        let allowed_d = match mode {
            RecoveryMode::FullSupport => topo.mask(),
            RecoveryMode::Sparse => Mask::off_diagonal(n),
        };
        let problem = RecoveryProblem::new(y, z, allowed_d, sup.mask(), c, mode).unwrap();
        Case { problem, b: rel.b, d: rel.d }
    }

    #[test]
    fn full_support_recovers_exactly() {
        let cs = case(20, 10, 2, RecoveryMode::FullSupport, 2);
        let res = solve_ls_full_support(&cs.problem, &SolverConfig::default()).unwrap();
        assert!(res.converged);
        assert!((&res.d_hat - &cs.d).norm() < 1e-6 * cs.d.norm(), "{}", (&res.d_hat - &cs.d).norm());
        assert!((&res.b_hat - &cs.b).norm() < 1e-6 * cs.b.norm());
        assert!(res.feasibility.max() < 1e-9);
    }

    #[test]
    fn row_solver_matches_joint_solver() {
        let cs = case(12, 7, 2, RecoveryMode::FullSupport, 6);
        let cfg = SolverConfig { rescale_rows: true, ..Default::default() };
        let rows = solve_ls_full_support(&cs.problem, &cfg).unwrap();
        let joint = fista_solve(&cs.problem, &cfg).unwrap();
        assert!((&rows.d_hat - &joint.d_hat).abs().max() < 1e-6);
        assert!((&rows.b_hat - &joint.b_hat).abs().max() < 1e-6);
    }

    #[test]
    fn sparse_mode_finds_support() {
        let cs = case(16, 16, 3, RecoveryMode::Sparse, 3);
        let res = fista_solve(&cs.problem, &SolverConfig::default()).unwrap();
        let err = (&res.d_hat - &cs.d).norm_squared() / cs.d.norm_squared();
        assert!(err < 1e-3, "nmse {err}");
        assert!(res.feasibility.nonnegativity == 0.0 && res.feasibility.support == 0.0 && res.feasibility.diagonal == 0.0);
    }

    #[test]
    fn objective_trace_is_monotone_without_momentum_surprises() {
        let cs = case(12, 6, 2, RecoveryMode::Sparse, 9);
        let cfg = SolverConfig { max_iters: 300, ..Default::default() };
        let res = fista_solve(&cs.problem, &cfg).unwrap();
        assert_eq!(res.objective_trace.len(), res.iterations + 1);
        assert!(res.objective_trace.last().unwrap() < &res.objective_trace[0]);
        let mut buf = Vec::new();
        res.write_trace_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("iter,objective,residual\n0,"));
    }

    #[test]
    fn backtracking_and_fixed_steps() {
        let cs = case(10, 10, 2, RecoveryMode::FullSupport, 4);
        let bt = SolverConfig { step: StepRule::Backtracking { factor: 2.0 }, rescale_rows: true, ..Default::default() };
        let res = fista_solve(&cs.problem, &bt).unwrap();
        assert!((&res.d_hat - &cs.d).abs().max() < 1e-5);

        let huge = SolverConfig { step: StepRule::Fixed { alpha: 1e3 }, restart: false, ..Default::default() };
        assert!(matches!(fista_solve(&cs.problem, &huge), Err(Error::Divergence { .. })));
    }

    #[test]
    fn zero_iterations_returns_projected_start() {
        let cs = case(8, 4, 2, RecoveryMode::Sparse, 1);
        let res = fista_solve(&cs.problem, &SolverConfig { max_iters: 0, ..Default::default() }).unwrap();
        assert_eq!(res.iterations, 0);
        assert!(res.feasibility.support == 0.0 && res.feasibility.diagonal == 0.0);
    }

    #[test]
    fn sparse_mode_is_rejected_by_least_squares() {
        let cs = case(8, 4, 2, RecoveryMode::Sparse, 1);
        assert!(matches!(solve_ls_full_support(&cs.problem, &SolverConfig::default()), Err(Error::Precondition(_))));
    }
}
