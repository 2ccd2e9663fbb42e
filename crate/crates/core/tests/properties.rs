use std::sync::Arc;

use ancient_flows::arrival::{build_warping, ArrivalRegistry};
use ancient_flows::critical::ReducedFunctional;
use ancient_flows::flow::{energy_report, evolve};
use ancient_flows::holder::weighted_norm;
use ancient_flows::linear::{solve_linear_ancient, Forcing};
use ancient_flows::mz::{integrate_mz, random_seed_state, verify_trichotomy, GeneratorRegistry, MZSystem, RESIDUAL_TOL};
use ancient_flows::slow::{arrival_time_check, latitude_flow};
use ancient_flows::trajectory::{backward_time_grid, FlowTrajectory};
use ancient_flows::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn modes(n: usize) -> (GradientSplit, EigenSystem) {
    let split = gradient_split(&builtin_sphere_functional(), PeriodicGrid::circle(n).unwrap()).unwrap();
    let es = eigendecompose(split.linear(), None).unwrap();
    (split, es)
}

fn fourier(grid: PeriodicGrid, c: &[f64]) -> Field {
    Field::from_fn(grid, |x| {
        c.chunks(2)
            .enumerate()
            .map(|(k, ab)| ab[0] * (k as f64 * x).cos() + ab[1] * ((k + 1) as f64 * x).sin())
            .sum()
    })
}

fn coeffs(scale: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-scale..scale, 8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn projections_partition_the_field(c in coeffs(1.0)) {
        let (_, es) = modes(32);
        let u = fourier(*es.grid(), &c);
        let (m, z, p) = (es.project_unstable(&u), es.project_neutral(&u), es.project_stable(&u));
        prop_assert!(m.add(&z).add(&p).sub(&u).sup_norm() < 1e-12);
        prop_assert!(es.project_neutral(&z).sub(&z).sup_norm() < 1e-12);
        prop_assert!(m.inner(&p).abs() < 1e-12 && z.inner(&p).abs() < 1e-12);
        let energy = es.coefficients(&u).sum_of_squares();
        prop_assert!((energy - u.l2_norm().powi(2)).abs() <= 1e-10 * energy.max(1e-300));
    }

    #[test]
    fn jacobi_operator_is_self_adjoint(c in coeffs(1.0), d in coeffs(1.0)) {
        let (split, _) = modes(32);
        let g = *split.grid();
        let (u, v) = (fourier(g, &c), fourier(g, &d));
        let l = split.linear();
        let lhs = l.apply(&u).inner(&v);
        let rhs = u.inner(&l.apply(&v));
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn gradient_is_the_negative_variation(c in coeffs(0.1), d in coeffs(0.1)) {
        let g = PeriodicGrid::circle(128).unwrap();
        let f = builtin_sphere_functional();
        let (u, v) = (fourier(g, &c), fourier(g, &d));
        let step = 1e-4;
        let up = evaluate(&f, &u.axpy(step, &v)).unwrap();
        let down = evaluate(&f, &u.axpy(-step, &v)).unwrap();
        let variation = (up - down) / (2.0 * step);
        let pairing = -gradient(&f, &u).unwrap().inner(&v);
        // The two routes differ by the stencil error k⁴h⁴/30 ≈ 5e-5 at frequency 4.
        let scale = gradient(&f, &u).unwrap().l2_norm() * v.l2_norm();
        prop_assert!((variation - pairing).abs() <= 2e-4 * scale + 1e-10, "{} vs {}", variation, pairing);
    }

    #[test]
    fn remainder_is_quadratically_small(c in coeffs(0.05)) {
        let (split, _) = modes(64);
        let u = fourier(*split.grid(), &c);
        let r = split.remainder(&u).l2_norm();
        prop_assert!(r <= 10.0 * u.c1_norm() * u.c2_norm() + 1e-14);
    }

    #[test]
    fn linear_response_stays_in_the_forced_mode(j in 1usize..12, amp in 0.1f64..2.0) {
        let (_, es) = modes(32);
        let phi = es.phi(j);
        let g = *es.grid();
        let h = Forcing::from_fn(g, 1.5, amp * (1.0 + 1e-9), move |x, t| {
            amp * (1.5 * t).exp() * phi.values()[((x / g.spacing()).round() as usize) % g.n()]
        }).unwrap();
        let sol = solve_linear_ancient(&es, &[0.0], &h, 12.0, 0.01).unwrap();
        let c = sol.coefficients();
        for k in 0..c.ncols() {
            for row in (0..c.nrows()).filter(|&r| r != j - 1) {
                prop_assert!(c[(row, k)].abs() < 1e-10);
            }
        }
    }

    #[test]
    fn trace_condition_for_random_data(a in -1.0f64..1.0, c in coeffs(1.0)) {
        let (_, es) = modes(32);
        let g = *es.grid();
        let shape = fourier(g, &c);
        let bound = 2.0 * shape.l2_norm() + 1e-12;
        let h = Forcing::from_fn(g, 1.0, bound, move |x, t| {
            t.exp() * shape.values()[((x / g.spacing()).round() as usize) % g.n()]
        }).unwrap();
        let sol = solve_linear_ancient(&es, &[a], &h, 16.0, 0.02).unwrap();
        let end = sol.trajectory().last();
        let expected = es.iota_minus(&[a], 0.0).unwrap();
        prop_assert!(es.project_unstable(&end).sub(&expected).sup_norm() < 1e-8);
    }

    #[test]
    fn energy_never_increases(c in coeffs(0.08)) {
        let g = PeriodicGrid::circle(64).unwrap();
        let f = builtin_sphere_functional();
        let traj = evolve(&f, &fourier(g, &c), 0.0, 0.3, 2e-3).unwrap();
        let rep = energy_report(&f, &traj);
        prop_assert!(rep.max_increase <= 1e-12);
    }

    #[test]
    fn weighted_norm_is_homogeneous_and_subadditive(c in coeffs(1.0), d in coeffs(1.0), s in -3.0f64..3.0) {
        let g = PeriodicGrid::circle(16).unwrap();
        let times = backward_time_grid(2.0, 0.1).unwrap();
        let (u0, v0) = (fourier(g, &c), fourier(g, &d));
        let u = FlowTrajectory::from_fn(g, times.clone(), |x, t| (0.5 * t).exp() * u0.values()[((x / g.spacing()).round() as usize) % 16]).unwrap();
        let v = FlowTrajectory::from_fn(g, times, |x, t| t.exp() * v0.values()[((x / g.spacing()).round() as usize) % 16]).unwrap();
        let nu = weighted_norm(&u, 2, 0.5, 0.5).unwrap();
        let nv = weighted_norm(&v, 2, 0.5, 0.5).unwrap();
        let scaled = weighted_norm(&u.scale(s), 2, 0.5, 0.5).unwrap();
        prop_assert!((scaled - s.abs() * nu).abs() <= 1e-12 * (1.0 + nu));
        let sum = v.scale(-1.0).sub(&u).unwrap();
        prop_assert!(weighted_norm(&sum, 2, 0.5, 0.5).unwrap() <= (nu + nv) * (1.0 + 1e-12));
    }

    #[test]
    fn generated_triples_obey_the_lemma(seed in 0u64..10_000, extremal in any::<bool>()) {
        let registry = GeneratorRegistry::with_builtins();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eps = 0.01;
        let state = random_seed_state(&mut rng, eps);
        let generator = registry.make(if extremal { "extremal" } else { "uniform" }, &mut rng, 50.0).unwrap();
        let traj = integrate_mz(&MZSystem::new(eps, generator).unwrap(), state, 50.0, 0.02).unwrap();
        prop_assert!(traj.max_violation <= RESIDUAL_TOL);
        let rep = verify_trichotomy(&traj).unwrap();
        prop_assert!(rep.neutral_bound_holds && rep.exactly_one);
    }

    #[test]
    fn arrival_identity_along_latitude_flows(s0 in 0.1f64..0.95, which in 0usize..3) {
        let name = ["exp", "poly", "sublog"][which];
        let arrival = ArrivalRegistry::with_builtins().get(name).unwrap();
        let metric = build_warping(Arc::clone(&arrival)).unwrap();
        let traj = latitude_flow(&metric, s0, 0.0, -30.0, 1e-2).unwrap();
        prop_assert!(arrival_time_check(&traj, arrival.as_ref()).unwrap().residual < 1e-7);
        prop_assert!(traj.s.windows(2).all(|w| w[0] <= w[1]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn reduced_functional_is_rotation_invariant(r in 0.0f64..0.1, angle in 0.0f64..std::f64::consts::TAU) {
        let (split, es) = modes(128);
        let reduced = ReducedFunctional::new(split, es).unwrap();
        let base = reduced.a_fin(&[r, 0.0]).unwrap();
        let turned = reduced.a_fin(&[r * angle.cos(), r * angle.sin()]).unwrap();
        prop_assert!((base - turned).abs() <= 1e-6);
    }
}
