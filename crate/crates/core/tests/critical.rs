mod common;

use std::f64::consts::PI;

use common::*;
use morse_action::critical::{
    certify_l0, morse_index, newton_solve, ps_diagnostic, seed_sweep, NewtonOptions, PsStatus, SeedStrategy,
};
use morse_action::lagrangian;
use morse_action::manifold::{BoundaryCondition, ChartedManifold};
use morse_action::pathspace::{DiscretePath, PathSpace};
use nalgebra::DVector;

fn opts() -> NewtonOptions {
    NewtonOptions::default()
}

#[test]
fn noisy_line_converges_to_straight_line() {
    let sp = quadratic_line(64);
    let mut r = rng(2);
    let seed = random_path(&sp, &DiscretePath::line(&[0.0], &[1.0], 64), 0.2, &mut r);
    let cp = newton_solve(&sp, &seed, &opts()).unwrap();
    assert!((cp.action - 0.5).abs() < 1e-12);
    assert_eq!(cp.morse_index, 0);
    assert_eq!(cp.nullity, 0);
    assert!(cp.residual <= 1e-10);
    assert!(cp.path.linf_distance(&DiscretePath::line(&[0.0], &[1.0], 64)) < 1e-10);
    assert!(certify_l0(&cp));
}

#[test]
fn pendulum_top_is_index_one() {
    let sp = pendulum(256);
    let cp = newton_solve(&sp, &DiscretePath::constant(&[0.45], 256), &opts()).unwrap();
    assert!(cp.path.as_slice().iter().all(|x| (x - 0.5).abs() < 1e-10));
    assert!((cp.action - 0.5).abs() < 1e-6);
    assert_eq!((cp.morse_index, cp.nullity), (1, 0));
    assert!(certify_l0(&cp));
    // analytic gap: min over k ≥ 1 of ((2πk)² − 2π²)/((2πk)² + 1), attained at k = 1
    let mu = 2.0 * PI * PI / (4.0 * PI * PI + 1.0);
    assert!((cp.spectral_gap - mu).abs() / mu < 0.05);
}

#[test]
fn pendulum_spectrum_matches_sturm_liouville() {
    let sp = pendulum(256);
    for (q0, vpp) in [(0.0, -2.0 * PI * PI), (0.5, 2.0 * PI * PI)] {
        let p = sp.hessian(&DiscretePath::constant(&[q0], 256)).unwrap();
        let data = morse_index(&p).unwrap();
        let mut analytic: Vec<f64> = (0..4)
            .flat_map(|k: i32| {
                let w = (2.0 * PI * k as f64).powi(2);
                let l = (w - vpp) / (w + 1.0);
                if k == 0 {
                    vec![l]
                } else {
                    vec![l, l]
                }
            })
            .collect();
        analytic.sort_by(f64::total_cmp);
        for a in &analytic {
            let best = data
                .eigen
                .values
                .iter()
                .map(|x| (x - a).abs())
                .fold(f64::INFINITY, f64::min);
            assert!(best / a.abs() < 2e-3, "eigenvalue {a} missing, closest off by {best}");
        }
        let expected_index = if vpp > 0.0 { 1 } else { 0 };
        assert_eq!(data.index, expected_index);
        assert_eq!(data.nullity, 0);
        assert_eq!(
            data.index + data.nullity + data.eigen.values.iter().filter(|&&l| l > data.null_tol).count(),
            sp.reduced_dim()
        );
    }
}

#[test]
fn duffing_minimum_matches_shooting_oracle() {
    let (slope, oracle) = duffing_shooting();
    assert!((slope - 15.0097189206).abs() < 1e-6);
    assert!((oracle + 26.17998671297942).abs() < 1e-8);

    let mut actions = Vec::new();
    for cells in [256, 512] {
        let sp = duffing(cells);
        let seed = DiscretePath::from_fn(1, cells, |t| DVector::from_element(1, 3.0 * (PI * t).sin()));
        let cp = newton_solve(&sp, &seed, &opts()).unwrap();
        assert!(cp.action < 0.0);
        assert_eq!((cp.morse_index, cp.nullity), (0, 0));
        assert!(certify_l0(&cp));
        // shape: peak at t = ½ close to the oracle amplitude
        let peak = cp.path.node(cells / 2)[0];
        assert!((peak - 3.96025).abs() < 1e-2, "peak {peak}");
        actions.push(cp.action);
    }
    assert!((actions[0] - oracle).abs() / oracle.abs() < 1e-4);
    let extrapolated = (4.0 * actions[1] - actions[0]) / 3.0;
    assert!((extrapolated - oracle).abs() < 1e-6, "{extrapolated} vs {oracle}");
}

#[test]
fn duffing_small_seed_finds_saddle() {
    let sp = duffing(128);
    let seed = DiscretePath::from_fn(1, 128, |t| DVector::from_element(1, 0.5 * (PI * t).sin()));
    let cp = newton_solve(&sp, &seed, &opts()).unwrap();
    assert!(cp.path.as_slice().iter().all(|x| x.abs() < 1e-10));
    assert_eq!(cp.morse_index, 1);
}

#[test]
fn free_loops_are_degenerate() {
    let sp = free_loops(64);
    for q in [0.0, 0.3, 0.77] {
        let cp = newton_solve(&sp, &DiscretePath::constant(&[q], 64), &opts()).unwrap();
        assert_eq!(cp.iterations, 0);
        assert!(cp.nullity >= 1);
        assert!(!certify_l0(&cp));
        // Hξ = 0 exactly for the constant variation
        let p = sp.hessian(&cp.path).unwrap();
        let mut xi = DVector::from_element(sp.reduced_dim(), 1.0);
        xi[0] = 2f64.sqrt();
        assert!((&p.h * xi).amax() < 1e-12);
    }
}

#[test]
fn critical_points_are_newton_fixed_points() {
    let sp = pendulum(64);
    let cp = newton_solve(&sp, &DiscretePath::constant(&[0.1], 64), &opts()).unwrap();
    let again = newton_solve(&sp, &cp.path, &opts()).unwrap();
    assert_eq!(again.iterations, 0);
    assert_eq!(again.path, cp.path);
}

#[test]
fn indices_are_mesh_stable() {
    for cells in [64, 128] {
        let a = seed_sweep(
            &pendulum(cells),
            &SeedStrategy::ConstantGrid {
                count: 8,
                low: 0.0,
                high: 1.0,
            },
            &opts(),
        );
        let b = seed_sweep(
            &pendulum(2 * cells),
            &SeedStrategy::ConstantGrid {
                count: 8,
                low: 0.0,
                high: 1.0,
            },
            &opts(),
        );
        let ia: Vec<usize> = a.points.iter().map(|c| c.morse_index).collect();
        let ib: Vec<usize> = b.points.iter().map(|c| c.morse_index).collect();
        assert_eq!(ia, ib);
    }
    let strategy = SeedStrategy::RandomFourier {
        count: 12,
        modes: 2,
        amplitude: 3.0,
        rng_seed: 4,
    };
    let a = seed_sweep(&duffing(64), &strategy, &opts());
    let b = seed_sweep(&duffing(128), &strategy, &opts());
    let ia: Vec<usize> = a.points.iter().map(|c| c.morse_index).collect();
    let ib: Vec<usize> = b.points.iter().map(|c| c.morse_index).collect();
    assert_eq!(ia, ib);
}

#[test]
fn pendulum_sweep_finds_two_points() {
    let sp = pendulum(256);
    let res = seed_sweep(
        &sp,
        &SeedStrategy::ConstantGrid {
            count: 16,
            low: 0.0,
            high: 1.0,
        },
        &opts(),
    );
    assert_eq!(res.points.len(), 2, "{:?}", res.failures);
    assert!((res.points[0].action + 0.5).abs() < 1e-6);
    assert!((res.points[1].action - 0.5).abs() < 1e-6);
    assert_eq!(res.points[0].morse_index, 0);
    assert_eq!(res.points[1].morse_index, 1);
    assert_eq!(res.points[0].id, 0);
    assert_eq!(res.points[1].id, 1);
}

#[test]
fn winding_sweep_finds_geodesics() {
    let sp = winding_loops(64);
    let res = seed_sweep(&sp, &SeedStrategy::Winding { min: -2, max: 2 }, &opts());
    let mut actions: Vec<f64> = res.points.iter().map(|c| c.action).collect();
    actions.sort_by(f64::total_cmp);
    let expected = [0.0, 0.5, 0.5, 2.0, 2.0];
    assert_eq!(actions.len(), 5);
    for (a, e) in actions.iter().zip(expected) {
        assert!((a - e).abs() < 1e-12);
    }
    let mut keys: Vec<i64> = res.points.iter().map(|c| c.component[0]).collect();
    keys.sort();
    assert_eq!(keys, vec![-2, -1, 0, 1, 2]);
    assert!(res.points.iter().all(|c| c.morse_index == 0 && certify_l0(c)));
}

#[test]
fn duffing_sweep_finds_saddle_and_symmetric_pair() {
    let sp = duffing(128);
    let strategy = SeedStrategy::RandomFourier {
        count: 24,
        modes: 3,
        amplitude: 3.0,
        rng_seed: 1,
    };
    let res = seed_sweep(&sp, &strategy, &opts());
    assert_eq!(
        res.points.len(),
        3,
        "{:#?}",
        res.points.iter().map(|c| c.action).collect::<Vec<_>>()
    );
    let (m1, m2, s) = (&res.points[0], &res.points[1], &res.points[2]);
    assert_eq!((m1.morse_index, m2.morse_index, s.morse_index), (0, 0, 1));
    assert!(s.action.abs() < 1e-12);
    assert!((m1.action - m2.action).abs() < 1e-9);
    let mirrored: Vec<f64> = m1.path.as_slice().iter().map(|x| -x).collect();
    let mirrored = DiscretePath::from_flat(1, mirrored).unwrap();
    assert!(mirrored.linf_distance(&m2.path) < 1e-8);
}

#[test]
fn sweep_is_independent_of_thread_count() {
    let sp = duffing(64);
    let strategy = SeedStrategy::RandomFourier {
        count: 10,
        modes: 3,
        amplitude: 3.0,
        rng_seed: 9,
    };
    let a = seed_sweep(&sp, &strategy, &opts());
    let b = seed_sweep(&sp, &strategy, &opts());
    assert_eq!(a.points.len(), b.points.len());
    for (x, y) in a.points.iter().zip(&b.points) {
        assert_eq!(x.path, y.path);
        assert_eq!(x.action.to_bits(), y.action.to_bits());
    }
}

#[test]
fn ps_diagnostic_cases() {
    let sp = pendulum(32);
    let top = DiscretePath::constant(&[0.5], 32);
    let rep = ps_diagnostic(&sp, &[top.clone(), top.clone(), top], 1e-8).unwrap();
    assert_eq!(rep.status, PsStatus::Converged);
    assert!(rep.cauchy_increments.iter().all(|&d| d == 0.0));

    // inverted oscillator, free ends: constant paths s drive the action to −∞
    let inv = PathSpace::new(
        ChartedManifold::euclidean(1),
        lagrangian::duffing(OMEGA, 0.0),
        BoundaryCondition::Free,
        32,
    )
    .unwrap();
    let tail: Vec<DiscretePath> = [1.0, 2.0, 4.0, 8.0]
        .iter()
        .map(|&s| DiscretePath::constant(&[s], 32))
        .collect();
    let rep = ps_diagnostic(&inv, &tail, 1e-8).unwrap();
    for (a, s) in rep.actions.iter().zip([1.0, 2.0, 4.0, 8.0]) {
        assert!((a + 0.5 * OMEGA * OMEGA * s * s).abs() < 1e-9);
    }
    assert_eq!(rep.status, PsStatus::Escaping);
}
