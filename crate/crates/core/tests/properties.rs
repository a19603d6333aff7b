use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng as _;

use trustsense::dynamics::{collect_dataset, steady_state_exact, step_deterministic, CollectConfig, DynamicsModel, OpinionState, ZMode};
use trustsense::graph::{
    apply_ambiguity, build_trust_matrix, canonical_relative_trust, place_stubborn, Instance, ModelTag, NetworkModel, NetworkTopology,
    Placement,
};
use trustsense::harness::expose_support;
use trustsense::identify::{spark_report, theorem1_min_beta, StackedDataMatrix};
use trustsense::recovery::{brute_force_l0, fista_solve, prox_project, Feasibility, RecoveryMode, RecoveryProblem, SolverConfig, StepRule};
use trustsense::rng::{derive_seed, rng_from_seed};
use trustsense::Mask;

fn instance(n_ord: usize, n_s: usize, d: usize, seed: u64) -> Instance {
    Instance::generate(NetworkModel::ErdosRenyi { p: 0.3 }, n_ord, n_s, Placement::DRegular { d }, seed).unwrap()
}

fn noiseless(inst: &Instance, k: usize, seed: u64) -> trustsense::dynamics::SteadyStateData {
    collect_dataset(&inst.trust, k, ZMode::Gaussian, &CollectConfig::default(), DynamicsModel::Deterministic, 0.0, seed).unwrap()
}

fn lambdas(n: usize, raw: &[f64], b: &DMatrix<f64>, d: &DMatrix<f64>) -> DVector<f64> {
    // keeps every row inside its equivalence class
    DVector::from_fn(n, |i, _| {
        let off: f64 = b.row(i).sum() + (0..n).filter(|&j| j != i).map(|j| d[(i, j)]).sum::<f64>();
        raw[i] / off
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn min_beta_monotone_in_d(alpha in 0.01f64..0.3, d in 5usize..12) {
        let lo = theorem1_min_beta(alpha, d, None).unwrap();
        let hi = theorem1_min_beta(alpha, d + 1, None).unwrap();
        prop_assert!(hi <= lo + 1e-12, "d={d}: {lo} -> {hi}");
    }

    #[test]
    fn min_beta_monotone_in_alpha(alpha in 0.01f64..0.3, step in 0.001f64..0.05, d in 5usize..12) {
        let lo = theorem1_min_beta(alpha, d, None).unwrap();
        let hi = theorem1_min_beta(alpha + step, d, None).unwrap();
        prop_assert!(hi >= lo - 1e-12, "alpha={alpha}: {lo} -> {hi}");
    }

    #[test]
    fn trust_rows_are_stochastic(n_ord in 3usize..12, n_s in 3usize..8, seed in any::<u64>()) {
        let d = n_s.min(3);
        let w = instance(n_ord, n_s, d, seed).trust;
        for i in 0..n_ord {
            prop_assert!((w.b.row(i).sum() + w.d.row(i).sum() - 1.0).abs() < 1e-12);
            prop_assert_eq!(w.d[(i, i)], 0.0);
            prop_assert_eq!(w.b.row(i).iter().filter(|&&x| x > 0.0).count(), d);
        }
        prop_assert!(w.b.iter().chain(w.d.iter()).all(|&x| x >= 0.0));
    }

    #[test]
    fn ambiguity_leaves_steady_state_unchanged(
        seed in any::<u64>(),
        raw in proptest::collection::vec(0.05f64..1.0, 8),
    ) {
        let w = instance(8, 4, 2, seed).trust;
        let lam = lambdas(8, &raw, &w.b, &w.d);
        let (b2, d2) = apply_ambiguity(&w.b, &w.d, &lam).unwrap();
        let z = DMatrix::from_fn(4, 3, |i, k| ((i * 7 + k * 3) % 5) as f64 - 2.0);
        let y1 = steady_state_exact(&w.b, &w.d, &z).unwrap();
        let y2 = steady_state_exact(&b2, &d2, &z).unwrap();
        prop_assert!((y1 - y2).amax() < 1e-9);
        let c = DVector::from_element(8, 0.2);
        let p1 = canonical_relative_trust(&w.b, &w.d, &c).unwrap();
        let p2 = canonical_relative_trust(&b2, &d2, &c).unwrap();
        prop_assert!((&p1.b - &p2.b).amax() < 1e-12 && (&p1.d - &p2.d).amax() < 1e-12);
        let again = canonical_relative_trust(&p1.b, &p1.d, &c).unwrap();
        prop_assert!((&again.b - &p1.b).amax() < 1e-15 && (&again.d - &p1.d).amax() < 1e-15);
    }

    #[test]
    fn deterministic_step_stays_in_hull(seed in any::<u64>(), y0 in proptest::collection::vec(-3.0f64..3.0, 6)) {
        let w = instance(6, 3, 2, seed).trust;
        let z = DVector::from_vec(vec![-1.0, 0.5, 2.0]);
        let y = DVector::from_vec(y0);
        let all: Vec<f64> = z.iter().chain(y.iter()).copied().collect();
        let (lo, hi) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let next = step_deterministic(&w, &OpinionState { z: z.clone(), y, t: 0 }).unwrap();
        prop_assert_eq!(&next.z, &z);
        prop_assert!(next.y.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
    }

    #[test]
    fn prox_output_is_feasible(seed in any::<u64>(), tau in 0.0f64..0.5, scale in 0.1f64..5.0) {
        let inst = instance(6, 4, 2, seed);
        let data = noiseless(&inst, 8, seed);
        let c = DVector::from_element(6, 0.1);
        let problem = RecoveryProblem::from_data(&data, inst.topology.mask(), inst.support.mask(), c, RecoveryMode::Sparse).unwrap();
        let b = DMatrix::from_fn(6, 4, |i, j| scale * (((i * 5 + j * 3 + seed as usize % 7) % 9) as f64 - 4.0));
        let d = DMatrix::from_fn(6, 6, |i, j| scale * (((i * 2 + j * 7 + seed as usize % 5) % 11) as f64 - 5.0));
        let (pb, pd) = prox_project(&b, &d, tau, &problem);
        let f = Feasibility::of(&pb, &pd, &problem);
        prop_assert_eq!(f.nonnegativity, 0.0);
        prop_assert_eq!(f.support, 0.0);
        prop_assert_eq!(f.diagonal, 0.0);
    }

    #[test]
    fn expose_support_is_nested_and_keeps_truth(seed in any::<u64>(), p1 in 0.0f64..1.0, p2 in 0.0f64..1.0) {
        let truth = instance(10, 4, 2, seed).topology.mask();
        let (lo, hi) = (p1.min(p2), p1.max(p2));
        let wide = expose_support(&truth, lo, seed).unwrap();
        let narrow = expose_support(&truth, hi, seed).unwrap();
        prop_assert!(truth.is_subset_of(&narrow));
        prop_assert!(narrow.is_subset_of(&wide));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solver_output_is_feasible_and_rows_separate(seed in any::<u64>()) {
        let (n, ns) = (6, 4);
        let inst = instance(n, ns, 2, seed);
        let data = noiseless(&inst, 8, seed);
        let c = DVector::zeros(n);
        let joint_problem =
            RecoveryProblem::from_data(&data, Mask::off_diagonal(n), inst.support.mask(), c.clone(), RecoveryMode::Sparse).unwrap();
        let probe = fista_solve(&joint_problem, &SolverConfig { max_iters: 1, ..SolverConfig::default() }).unwrap();
        // fixed step, no restart and a fixed iteration count
        let cfg = SolverConfig {
            lambda: Some(1e-6),
            step: StepRule::Fixed { alpha: probe.step },
            max_iters: 500,
            tol: 0.0,
            floor: 0.0,
            restart: false,
            ..SolverConfig::default()
        };
        let joint = fista_solve(&joint_problem, &cfg).unwrap();
        prop_assert_eq!(joint.feasibility.nonnegativity, 0.0);
        prop_assert_eq!(joint.feasibility.support, 0.0);
        prop_assert_eq!(joint.feasibility.diagonal, 0.0);

        for i in 0..n {
            let mut allowed_d = Mask::empty(n, n);
            let mut allowed_b = Mask::empty(n, ns);
            for j in 0..n {
                if j != i {
                    allowed_d.set(i, j, true);
                }
            }
            for j in 0..ns {
                allowed_b.set(i, j, inst.support.mask().get(i, j));
            }
            for r in (0..n).filter(|&r| r != i) {
                // a placeholder stubborn neighbor keeps the problem valid
                allowed_b.set(r, 0, true);
            }
            let single = RecoveryProblem::new(data.y_hat.clone(), data.z.clone(), allowed_d, allowed_b, c.clone(), RecoveryMode::Sparse).unwrap();
            let alone = fista_solve(&single, &cfg).unwrap();
            let db = (joint.b_hat.row(i) - alone.b_hat.row(i)).amax();
            let dd = (joint.d_hat.row(i) - alone.d_hat.row(i)).amax();
            prop_assert!(db < 1e-8 && dd < 1e-8, "row {i}: {db:e} {dd:e}");
        }
    }
}

fn tiny_instance(seed: u64) -> Instance {
    let mut rng = rng_from_seed(seed);
    let n = 4;
    let mut edges = Vec::new();
    for i in 0..n {
        if rng.random_bool(0.7) {
            edges.push((i, (i + rng.random_range(1..n)) % n));
        }
    }
    let topology = NetworkTopology::new(n, edges, ModelTag::Ingested).unwrap();
    let support = place_stubborn(n, 4, Placement::DRegular { d: 2 }, derive_seed(seed, &[1])).unwrap();
    let trust = build_trust_matrix(&topology, &support, derive_seed(seed, &[2])).unwrap();
    Instance { topology, support, trust }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spark_certified_instances_are_recovered_by_l0(seed in any::<u64>()) {
        let inst = tiny_instance(seed);
        let data = noiseless(&inst, 8, derive_seed(seed, &[3]));
        let a = StackedDataMatrix::from_data(&data).unwrap().with_tolerance(1e-9);
        let rows = spark_report(&a, &Mask::off_diagonal(4), &inst.support.mask(), &[1; 4]).unwrap();
        prop_assume!(rows.iter().all(|r| r.holds));
        let c = DVector::zeros(4);
        let truth = canonical_relative_trust(&inst.trust.b, &inst.trust.d, &c).unwrap();
        let problem = RecoveryProblem::from_data(&data, Mask::off_diagonal(4), inst.support.mask(), c, RecoveryMode::Sparse).unwrap();
        let l0 = brute_force_l0(&problem, 1, 1e-9).unwrap();
        prop_assert!((&l0.d_hat - &truth.d).amax() < 1e-6);
        prop_assert!((&l0.b_hat - &truth.b).amax() < 1e-6);
    }
}
