use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use radapt_core::gelfand::DiscreteSystem;
use std::f64::consts::PI;

use radapt_core::fem2d::{assemble_fem, project_h1, unit_square_mesh};
use radapt_core::laplace_mor::{build_reduced_basis, build_snapshots, epsilon_m, pod_basis, snapshot_matrix, ReducedBasis};
use rand_distr::StandardNormal;
use radapt_core::linalg::CsrMatrix;
use radapt_core::petrov::{flatten, hierarchical_coefficients, solve_pg_full};
use radapt_core::radau::{radau_stability, radau_step, residual_moments, solve_time, PolynomialRhs, ZeroRhs};
use radapt_core::sinc::SincGrid;
use radapt_core::stats::fit_rate;
use radapt_core::time_mesh::{check_grading, doerfler_mark, TimeMesh};

fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    b.transpose() * &b + DMatrix::identity(n, n) * shift
}

fn random_system(seed: u64, n: usize) -> DiscreteSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = random_spd(&mut rng, n, 0.5);
    let k = random_spd(&mut rng, n, 1.0) * rng.gen_range(1.0..50.0);
    DiscreteSystem::new(CsrMatrix::from_dense(&m).unwrap(), CsrMatrix::from_dense(&k).unwrap()).unwrap()
}

/// Applies a refinement sequence given as fractions of the current length.
fn refine_sequence(mut mesh: TimeMesh, seq: &[f64], grading: u32) -> TimeMesh {
    for &f in seq {
        let i = ((f * mesh.len() as f64) as usize).min(mesh.len() - 1);
        mesh.trisect_in_place(i, grading).unwrap();
    }
    mesh
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trisect_refines_and_keeps_grading(
        n0 in 1usize..5,
        grading in 1u32..6,
        seq in prop::collection::vec(0.0f64..1.0, 1..25),
    ) {
        let mut mesh = TimeMesh::uniform(1.0, n0).unwrap();
        for &f in &seq {
            let i = ((f * mesh.len() as f64) as usize).min(mesh.len() - 1);
            let next = mesh.trisect(i, grading).unwrap();
            prop_assert!(next.is_refinement_of(&mesh));
            prop_assert!(next.len() >= mesh.len() + 2);
            let bp = next.breakpoints();
            for t in mesh.breakpoints() {
                prop_assert!(bp.iter().any(|b| (b - t).abs() < 1e-14));
            }
            mesh = next;
            prop_assert!(check_grading(&mesh, 3.0, 3f64.powf(-1.0 / grading as f64)));
        }
        let sizes = mesh.sizes();
        for (c, h) in mesh.cells().iter().zip(&sizes) {
            let want = mesh.h0() / 3f64.powi(c.level as i32);
            prop_assert!((h - want).abs() <= 1e-14 * want.max(1.0));
        }
    }

    #[test]
    fn trisect_matches_level_variant(
        n0 in 1usize..5,
        t_end in prop::sample::select(vec![1.0, 2.0, 0.3]),
        grading in 1u32..5,
        seq in prop::collection::vec(0.0f64..1.0, 1..25),
    ) {
        let mut a = TimeMesh::uniform(t_end, n0).unwrap();
        let mut b = a.clone();
        let g_tilde = 3.0 * grading as f64 * a.h0();
        for &f in &seq {
            let i = ((f * a.len() as f64) as usize).min(a.len() - 1);
            a.trisect_in_place(i, grading).unwrap();
            b.trisect_level_in_place(i, g_tilde).unwrap();
            prop_assert_eq!(a.cells(), b.cells());
        }
    }

    #[test]
    fn trisect_of_two_targets_is_order_independent(
        grading in 1u32..4,
        seq in prop::collection::vec(0.0f64..1.0, 0..12),
        x in 0.0f64..1.0,
        y in 0.0f64..1.0,
    ) {
        let base = refine_sequence(TimeMesh::uniform(1.0, 2).unwrap(), &seq, grading);
        let (i, j) = (
            ((x * base.len() as f64) as usize).min(base.len() - 1),
            ((y * base.len() as f64) as usize).min(base.len() - 1),
        );
        let marked = |first: usize, second: usize| {
            let mut m = base.clone();
            let set = radapt_core::time_mesh::MarkSet { indices: vec![first, second], theta: 0.5 };
            m.refine_marked(&set, grading).unwrap();
            m
        };
        let (ab, ba) = (marked(i, j), marked(j, i));
        prop_assert_eq!(ab.cells(), ba.cells());
    }

    #[test]
    fn doerfler_marks_a_minimal_set(
        eta in prop::collection::vec(0.0f64..10.0, 1..60),
        theta in 0.05f64..=1.0,
    ) {
        let set = doerfler_mark(&eta, theta).unwrap();
        let total: f64 = eta.iter().sum();
        let marked: f64 = set.indices.iter().map(|&i| eta[i]).sum();
        prop_assert!(set.indices.windows(2).all(|w| w[0] < w[1]));
        if total > 0.0 {
            prop_assert!(marked >= theta * total * (1.0 - 1e-12));
            // the largest k-1 contributions fall short
            let mut sorted = eta.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            let best: f64 = sorted[..set.len() - 1].iter().sum();
            prop_assert!(best < theta * total);
        } else {
            prop_assert!(set.is_empty());
        }
    }

    #[test]
    fn dual_norm_of_stiffness_image_is_energy_norm(seed in any::<u64>(), n in 1usize..12) {
        let sys = random_system(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let kx = sys.stiffness().mul_vec(&x);
        let (v, d) = (sys.norm_v(&x).unwrap(), sys.norm_vstar(&kx).unwrap());
        prop_assert!((v - d).abs() <= 1e-10 * v.max(1e-300));
        let spec = sys.eigendecompose().unwrap();
        prop_assert!((spec.norm_v(&x) - v).abs() <= 1e-9 * v.max(1e-300));
        prop_assert!((spec.norm_vstar(&kx) - d).abs() <= 1e-9 * d.max(1e-300));
    }

    #[test]
    fn scalar_radau_step_is_stability_function(z in 1e-3f64..100.0) {
        let sys = DiscreteSystem::scalar(z).unwrap();
        let step = radau_step(&sys, &[1.0], &ZeroRhs(1), 0.0, 1.0).unwrap();
        let r = radau_stability(-z);
        prop_assert!((step.u_next[0] - r).abs() <= 1e-12 * r.abs().max(1e-3));
    }

    #[test]
    fn radau_residual_has_zero_mean_and_endpoint(
        seed in any::<u64>(),
        n in 1usize..6,
        grading in 1u32..4,
        seq in prop::collection::vec(0.0f64..1.0, 0..10),
    ) {
        let sys = random_system(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        let coeffs: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let f = PolynomialRhs { coeffs };
        let u0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mesh = refine_sequence(TimeMesh::uniform(1.0, 2).unwrap(), &seq, grading);
        let sol = solve_time(&sys, &mesh, &f, &u0).unwrap();
        for t in 0..mesh.len() {
            let (mean, end) = residual_moments(&sys, &sol, &f, t).unwrap();
            let scale = 1.0 + sys.stiffness().to_dense().amax();
            prop_assert!(mean.iter().chain(&end).all(|v| v.abs() <= 1e-10 * scale));
        }
        let pg = solve_pg_full(&sys, &mesh, &f, &u0).unwrap();
        let diff = (flatten(&pg) - flatten(&hierarchical_coefficients(&sol))).amax();
        prop_assert!(diff <= 1e-10, "pg vs stepping {}", diff);
    }

    #[test]
    fn pod_beats_random_subspaces_of_the_span(seed in any::<u64>(), n in 4usize..9, r in 1usize..6) {
        let mesh = unit_square_mesh(n).unwrap();
        let sys = assemble_fem(&mesh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g = move |x: f64, y: f64| {
            let mut v = 1.0;
            for p in 0..3 {
                for q in 0..3 {
                    v += a[3 * p + q] * ((p + 1) as f64 * PI * x).sin() * ((q + 1) as f64 * PI * y).sin();
                }
            }
            v
        };
        let u0 = project_h1(&mesh, &g).unwrap();
        let grid = SincGrid::new(1.0, 0.7, 8).unwrap();
        let snaps = build_snapshots(&sys, None, &u0, &grid).unwrap();
        let pod = build_reduced_basis(&sys, &snaps, r).unwrap();
        let eps_pod = epsilon_m(&sys, &snaps, &pod).unwrap();
        let gram = pod.w.transpose() * &pod.kw;
        prop_assert!((gram - DMatrix::identity(pod.rank(), pod.rank())).amax() < 1e-10);
        // uniformly distributed subspaces of the numerical snapshot span
        let s = snapshot_matrix(&snaps);
        let full = s.ncols().min(s.nrows());
        let span = pod_basis(&sys, s, full).unwrap();
        prop_assume!(span.rank() > r);
        for _ in 0..20 {
            let g = DMatrix::from_fn(span.rank(), r, |_, _| rng.sample::<f64, _>(StandardNormal));
            let cols: Vec<Vec<f64>> = (&span.w * g).column_iter().map(|c| c.iter().copied().collect()).collect();
            let other = ReducedBasis::from_columns(&sys, cols).unwrap();
            let eps = epsilon_m(&sys, &snaps, &other).unwrap();
            prop_assert!(eps_pod <= eps * (1.0 + 1e-10), "pod {} random {}", eps_pod, eps);
        }
    }

    #[test]
    fn fit_rate_recovers_power_laws(rate in 0.1f64..4.0, c in 0.01f64..100.0) {
        let n = [4.0, 9.0, 27.0, 100.0, 400.0];
        let e: Vec<f64> = n.iter().map(|v: &f64| c * v.powf(-rate)).collect();
        prop_assert!((fit_rate(&n, &e).unwrap() - rate).abs() < 1e-9);
    }
}
