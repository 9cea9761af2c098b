//! Structural properties that hold on every random instance: projector
//! identities, exact block inversion, the sensitivity Jacobian against re-solves
//! and against its own Lipschitz bound, feasibility of the sweeping scheme, and
//! fourth-order convergence of the unconstrained flow.

use proptest::prelude::*;
use rand::Rng;
use tvopt_core::ensembles::{random_full_row_rank, random_partitioned, random_qp, random_spd, seeded, QpEnsembleOptions};
use tvopt_core::flows::{
    endpoint, project_polyhedron, run_and_certify, CertifyOptions, MovingPolyhedron, Signal, TimeVaryingScenario,
};
use tvopt_core::linalg::{block_inverse, identity_residual, oblique_projectors, LinalgOptions, Matrix};
use tvopt_core::nlp::{KktTolerances, SolveOptions};
use tvopt_core::sensitivity::{
    assemble_blocks, default_fd_step, fd_jacobian_oracle, local_lipschitz_bounds, solution_jacobian,
};

fn diff_fro(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oblique_projectors_are_complementary_idempotents(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let n = rng.gen_range(1..=8);
        let k = rng.gen_range(1..=n);
        let cond = 10f64.powf(rng.gen_range(0.0..4.0));
        let a = random_spd(&mut rng, n, cond);
        let b = random_full_row_rank(&mut rng, k, n, 0.05);
        let (sigma, pi) = oblique_projectors(&a, &b, &LinalgOptions::default()).unwrap();
        let s2 = &sigma * &sigma;
        prop_assert!(diff_fro(&s2, &sigma) <= 1e-9 * (1.0 + sigma.norm_fro()));
        prop_assert!((&b * &pi).max_abs() <= 1e-9 * (1.0 + b.norm_fro() * pi.norm_fro()));
        let sum = &sigma + &pi;
        prop_assert!(diff_fro(&sum, &Matrix::identity(n)) <= 1e-12 * n as f64);
    }

    #[test]
    fn block_inverse_multiplies_back(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let inst = random_partitioned(&mut rng, 1e6);
        let inv = match block_inverse(&inst.a, &inst.b, &inst.c, &inst.d, &LinalgOptions::default()) {
            Ok(inv) => inv,
            // A singular leading block is a legitimate refusal, not a wrong answer.
            Err(_) => return Ok(()),
        };
        let full = tvopt_core::linalg::assemble_partitioned(&inst.a, &inst.b, &inst.c, &inst.d).unwrap();
        let res = identity_residual(&full, &inv.assemble());
        prop_assert!(res.max_abs() <= 1e-12 * inst.cond, "residual {} at cond {}", res.max_abs(), inst.cond);
    }

    #[test]
    fn jacobian_matches_resolves_and_respects_its_bound(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let q = random_qp(&mut rng, &QpEnsembleOptions::default());
        let tol = KktTolerances::default();
        let blocks = assemble_blocks(&q.prob, &q.point, &q.active, &tol).unwrap();
        let jac = solution_jacobian(&blocks).unwrap();
        let fd = fd_jacobian_oracle(&q.prob, &q.xi, default_fd_step(&q.xi), Some(&q.point), &SolveOptions::default())
            .unwrap();
        let scale = jac.dx_dxi.norm_fro().max(1e-12);
        prop_assert!(diff_fro(&jac.dx_dxi, &fd.dx) <= 1e-5 * scale);
        let mscale = jac.multiplier_full.norm_fro().max(1e-12);
        prop_assert!(diff_fro(&jac.multiplier_full, &fd.dmult) <= 1e-5 * mscale);

        let bound = local_lipschitz_bounds(&blocks);
        prop_assert!(jac.dx_dxi.norm2() <= bound.ell_x * (1.0 + 1e-9));
        prop_assert!(jac.dlm_dxi.norm2() <= bound.ell_lm * (1.0 + 1e-9));
    }

    #[test]
    fn sweeping_iterates_stay_feasible(seed in any::<u64>()) {
        // 0 ∈ {Ux ≤ v(t)} for all t ≥ 0 because offset and slope are nonnegative.
        let mut rng = seeded(seed);
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=4);
        let u = Matrix::from_rows(
            &(0..m).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>()).collect::<Vec<_>>(),
        );
        let v = Signal::Affine {
            slope: (0..m).map(|_| rng.gen_range(0.0..1.0)).collect(),
            offset: (0..m).map(|_| rng.gen_range(0.0..0.5)).collect(),
        };
        let c = Signal::smooth(
            n,
            move |t| (0..n).map(|i| 2.0 * (t + i as f64).sin()).collect(),
            move |t| (0..n).map(|i| 2.0 * (t + i as f64).cos()).collect(),
        );
        let q = random_spd(&mut rng, n, 10.0);
        let scenario = TimeVaryingScenario::new("random", q, c, Some(MovingPolyhedron { u: u.clone(), v: v.clone() }), 4.0)
            .unwrap();
        let x0 = project_polyhedron(&vec![1.0; n], &u, &v.value(0.0)).unwrap();
        let a = scenario.constants.alpha;
        let (rec, _) = run_and_certify(&scenario, &x0, 1e-2, a, 1.0, &CertifyOptions::default()).unwrap();
        prop_assert!(rec.max_feasibility_violation() <= 1e-8, "{}", rec.max_feasibility_violation());
    }

    #[test]
    fn triangular_wave_derivative_matches_differences(
        period in 0.5f64..20.0,
        slope in -3.0f64..3.0,
        t in -50.0f64..50.0,
    ) {
        let w = Signal::TriangularWave { period, slope };
        prop_assume!(!w.is_kink(t, 1e-3));
        let h = 1e-6;
        let fd = (w.value(t + h)[0] - w.value(t - h)[0]) / (2.0 * h);
        prop_assert!((fd - w.derivative(t)[0]).abs() <= 1e-6 * (1.0 + slope.abs()), "{fd} vs {:?}", w.derivative(t));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn gradient_flow_converges_at_fourth_order(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let n = rng.gen_range(1..=3);
        let q = random_spd(&mut rng, n, 5.0);
        let c = Signal::smooth(
            n,
            move |t| (0..n).map(|i| (t * (i + 1) as f64).sin()).collect(),
            move |t| (0..n).map(|i| (i + 1) as f64 * (t * (i + 1) as f64).cos()).collect(),
        );
        let scenario = TimeVaryingScenario::new("smooth", q, c, None, 2.0).unwrap();
        let x0 = vec![0.5; n];
        let (_, x1) = endpoint(&scenario, &x0, 0.04).unwrap();
        let (_, x2) = endpoint(&scenario, &x0, 0.02).unwrap();
        let (_, x3) = endpoint(&scenario, &x0, 0.01).unwrap();
        let ratio = dist(&x1, &x2) / dist(&x2, &x3);
        prop_assert!(ratio >= 8.0, "self-convergence ratio {ratio}");
    }
}
