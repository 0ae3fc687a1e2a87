mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use common::*;
use morse_action::lagrangian::{
    self, assemble_electromagnetic, ConstantKinetic, ElectromagneticData, PolynomialPotential, QuarticVelocity,
};
use morse_action::linalg;
use morse_action::manifold::{BoundaryCondition, ChartedManifold};
use morse_action::pathspace::{hessian_continuity_probe, DiscretePath, PathSpace};
use nalgebra::{DMatrix, DVector};

#[test]
fn straight_line_action_is_exact_on_every_mesh() {
    for cells in [2, 3, 7, 64, 256, 1000] {
        let sp = quadratic_line(cells);
        let line = DiscretePath::line(&[0.0], &[1.0], cells);
        assert!((sp.action(&line).unwrap() - 0.5).abs() < 1e-12);
        let flat = DiscretePath::constant(&[0.3], cells);
        assert_eq!(sp.action(&flat).unwrap(), 0.0);
    }
}

#[test]
fn pendulum_constant_path_action() {
    let sp = pendulum(64);
    let top = DiscretePath::constant(&[0.5], 64);
    assert!((sp.action(&top).unwrap() - 0.5).abs() < 1e-14);
    let bottom = DiscretePath::constant(&[0.0], 64);
    assert!((sp.action(&bottom).unwrap() + 0.5).abs() < 1e-14);
}

#[test]
fn non_finite_lagrangian_names_the_cell() {
    let model =
        lagrangian::LagrangianModel::finite_difference(
            1,
            |_t, q, v| {
                if q[0] > 0.7 {
                    f64::NAN
                } else {
                    0.5 * v[0] * v[0]
                }
            },
        );
    let sp = model_space(model, BoundaryCondition::Free, 10);
    let path = DiscretePath::line(&[0.0], &[1.0], 10);
    match sp.action(&path) {
        Err(morse_action::Error::NonFinite { cell }) => assert_eq!(cell, 7),
        other => panic!("expected NonFinite, got {other:?}"),
    }
}

#[test]
fn straight_line_is_critical() {
    let sp = quadratic_line(128);
    let g = sp.gradient(&DiscretePath::line(&[0.0], &[1.0], 128)).unwrap();
    assert!(g.amax() <= 1e-12);
}

#[test]
fn single_node_perturbation_matches_finite_difference() {
    let sp = quadratic_line(32);
    let mut path = DiscretePath::line(&[0.0], &[1.0], 32);
    path.as_mut_slice()[11] += 0.05;
    let g = sp.gradient(&path).unwrap();
    let fd = fd_gradient(&sp, &path, 1e-6);
    assert!(rel_inf(&fd, &g) < 1e-6);
    assert!(g.amax() > 1.0);
}

#[test]
fn gradient_matches_finite_differences_on_random_paths() {
    let problems: Vec<(PathSpace, DiscretePath, f64)> = vec![
        (quadratic_line(128), DiscretePath::line(&[0.0], &[1.0], 128), 0.3),
        (pendulum(128), DiscretePath::constant(&[0.2], 128), 0.3),
        (duffing(128), DiscretePath::constant(&[0.0], 128), 2.0),
    ];
    let mut rng = rng(7);
    for (sp, base, amp) in &problems {
        for _ in 0..50 {
            let path = random_path(sp, base, *amp, &mut rng);
            let g = sp.gradient(&path).unwrap();
            let fd = fd_gradient(sp, &path, 1e-5);
            let err = rel_inf(&fd, &g);
            assert!(err < 1e-6, "gradient relative error {err}");
        }
    }
}

#[test]
fn hessian_matches_finite_differenced_gradient() {
    let problems: Vec<(PathSpace, DiscretePath, f64)> = vec![
        (quadratic_line(32), DiscretePath::line(&[0.0], &[1.0], 32), 0.3),
        (pendulum(32), DiscretePath::constant(&[0.2], 32), 0.3),
        (duffing(32), DiscretePath::constant(&[0.0], 32), 2.0),
    ];
    let mut rng = rng(8);
    for (sp, base, amp) in &problems {
        for _ in 0..10 {
            let path = random_path(sp, base, *amp, &mut rng);
            let pencil = sp.hessian(&path).unwrap();
            let m = sp.reduced_dim();
            let step = 1e-6;
            let mut fd = DMatrix::zeros(m, m);
            for r in 0..m {
                let mut e = DVector::zeros(m);
                e[r] = step;
                let gp = sp.gradient(&sp.displace(&path, &e)).unwrap();
                let gm = sp.gradient(&sp.displace(&path, &(-e))).unwrap();
                fd.set_column(r, &((gp - gm) / (2.0 * step)));
            }
            let err = (&fd - &pencil.h).amax() / pencil.h.amax();
            assert!(err < 1e-5, "hessian relative error {err}");
        }
    }
}

#[test]
fn pendulum_gradient_at_quarter_is_uniform() {
    let cells = 64;
    let sp = pendulum(cells);
    let g = sp.gradient(&DiscretePath::constant(&[0.25], cells)).unwrap();
    let h = 1.0 / cells as f64;
    // L_q = −V′(q) = π sin(2πq), so every interior node carries h·π.
    let w = sp.constraint_map().w_dim();
    assert_eq!(w, 1);
    for r in w..sp.reduced_dim() {
        assert!((g[r] - h * PI).abs() < 1e-14);
    }
    // node 0 and node N share the periodic direction (e₀ + e_N)/√2
    assert!((g[0] - h * PI / 2f64.sqrt()).abs() < 1e-14);
}

#[test]
fn quadratic_dirichlet_pencil_structure() {
    let cells = 256;
    let sp = quadratic_line(cells);
    let path = DiscretePath::line(&[0.0], &[1.0], cells);
    let p = sp.hessian(&path).unwrap();
    let h = 1.0 / cells as f64;
    let m = sp.reduced_dim();
    assert_eq!(m, cells - 1);
    for i in 0..m {
        assert!((p.h[(i, i)] - 2.0 / h).abs() < 1e-9);
        assert!((p.k_part[(i, i)] + 2.0 * h / 3.0).abs() < 1e-15);
        assert!((p.a_part[(i, i)] - (2.0 / h + 2.0 * h / 3.0)).abs() < 1e-9);
        if i + 1 < m {
            assert!((p.h[(i, i + 1)] + 1.0 / h).abs() < 1e-9);
            assert!((p.k_part[(i, i + 1)] + h / 6.0).abs() < 1e-15);
        }
    }
    let eig = linalg::generalized_eigen(&p.h, &p.gram_zero).unwrap();
    let target = PI * PI / (1.0 + PI * PI);
    assert!((eig.values[0] - target).abs() / target < 0.02);
}

#[test]
fn hessian_split_identity_and_symmetry() {
    let mut rng = rng(3);
    for sp in [pendulum(48), duffing(48)] {
        let base = DiscretePath::constant(&[0.1], 48);
        let base = sp.project_admissible(&base).unwrap();
        let path = random_path(&sp, &base, 0.4, &mut rng);
        let p = sp.hessian(&path).unwrap();
        assert_eq!(p.h, &p.a_part + &p.k_part);
        for m in [&p.h, &p.gram, &p.gram_zero, &p.a_part, &p.k_part] {
            assert!((m - m.transpose()).amax() <= 1e-12);
        }
        assert!(linalg::symmetric_extremes(&p.gram).0 > 0.0);
        assert!(linalg::symmetric_extremes(&p.gram_zero).0 > 0.0);
        // d_vv = 1 and the metric is Euclidean, so A coincides with the H¹ Gram.
        assert_eq!(&p.a_part, sp.hilbert_product_h1());
    }
}

#[test]
fn constant_kinetic_a_part_is_path_independent() {
    let sp = pendulum(40);
    let mut rng = rng(4);
    let base = DiscretePath::constant(&[0.0], 40);
    let a = sp.hessian(&random_path(&sp, &base, 0.5, &mut rng)).unwrap().a_part;
    let b = sp.hessian(&random_path(&sp, &base, 0.5, &mut rng)).unwrap().a_part;
    assert_eq!(a, b);
}

#[test]
fn quartic_velocity_kinetic_block_scales_by_four() {
    let cells = 16;
    let model = QuarticVelocity {
        dim: 1,
        quadratic: 1.0,
        quartic: 1.0,
    }
    .model();
    let sp = model_space(model, BoundaryCondition::Free, cells);
    let flat = sp.hessian(&DiscretePath::constant(&[0.0], cells)).unwrap();
    let sloped = sp.hessian(&DiscretePath::line(&[0.0], &[1.0], cells)).unwrap();
    let mass = &flat.a_part - &flat.h; // −K at γ ≡ 0 is the mass matrix
    let k0 = &flat.a_part - &mass;
    let k1 = &sloped.a_part - &mass;
    assert!((&k1 - &k0 * 4.0).amax() < 1e-10);
}

#[test]
fn h1_gram_examples() {
    let sp = quadratic_line(2);
    let g = sp.hilbert_product_h1();
    assert_eq!(g.shape(), (1, 1));
    assert!((g[(0, 0)] - (4.0 + 1.0 / 3.0)).abs() < 1e-14);

    let free = model_space(lagrangian::free_particle(1), BoundaryCondition::Free, 20);
    let one = DVector::from_element(free.reduced_dim(), 1.0);
    assert!((linalg::quad_form(free.hilbert_product_h1(), &one) - 1.0).abs() < 1e-13);

    let cells = 20;
    let per = pendulum(cells);
    let h = 1.0 / cells as f64;
    let mut hat = DVector::zeros(per.reduced_dim());
    hat[5] = 1.0; // interior node
    let val = linalg::quad_form(per.hilbert_product_h1(), &hat);
    assert!((val - (2.0 / h + 2.0 * h / 3.0)).abs() < 1e-12);
    // the identified endpoint node is a hat too
    let mut hat0 = DVector::zeros(per.reduced_dim());
    hat0[0] = 2f64.sqrt();
    let val = linalg::quad_form(per.hilbert_product_h1(), &hat0);
    assert!((val - (2.0 / h + 2.0 * h / 3.0)).abs() < 1e-12);
}

#[test]
fn variable_metric_is_unsupported() {
    use morse_action::manifold::Metric;
    let metric = Metric::Variable(Arc::new(|q: &DVector<f64>| {
        DMatrix::from_element(1, 1, 1.0 + 0.1 * q[0] * q[0])
    }));
    let m = ChartedManifold::new(vec![false], metric).unwrap();
    let r = PathSpace::new(m, lagrangian::free_particle(1), BoundaryCondition::Free, 8);
    assert!(matches!(r, Err(morse_action::Error::Unsupported(_))));
}

#[test]
fn zero_product_examples() {
    let sp = quadratic_line(32);
    let line = DiscretePath::line(&[0.0], &[1.0], 32);
    assert_eq!(&sp.hilbert_product_zero(&line).unwrap(), sp.hilbert_product_h1());

    let doubled = assemble_electromagnetic(
        1,
        ElectromagneticData {
            kinetic: Arc::new(ConstantKinetic(DMatrix::from_element(1, 1, 2.0))),
            magnetic: None,
            potential: None,
        },
    )
    .unwrap();
    let sp2 = model_space(doubled, BoundaryCondition::dirichlet(&[0.0], &[1.0]), 32);
    let g0 = sp2.hilbert_product_zero(&line).unwrap();
    let g = sp2.hilbert_product_h1();
    let h = 1.0 / 32.0;
    let mass_diag = 2.0 * h / 3.0;
    assert!(((g0[(3, 3)] - mass_diag) - 2.0 * (g[(3, 3)] - mass_diag)).abs() < 1e-12);
    assert!((g0[(3, 4)] - h / 6.0 - 2.0 * (g[(3, 4)] - h / 6.0)).abs() < 1e-12);

    let p = sp2.hessian(&line).unwrap();
    assert_eq!((&p.a_part - &g0).amax(), 0.0);
}

#[test]
fn negative_fiber_hessian_rejected_by_zero_product() {
    let model = QuarticVelocity {
        dim: 1,
        quadratic: -1.0,
        quartic: 1.0,
    }
    .model();
    let sp = model_space(model, BoundaryCondition::Free, 8);
    let r = sp.hilbert_product_zero(&DiscretePath::constant(&[0.0], 8));
    assert!(matches!(r, Err(morse_action::Error::NotPositive { cell: 0 })));
}

#[test]
fn action_is_invariant_under_unit_translation() {
    let sp = pendulum(64);
    let mut rng = rng(5);
    for _ in 0..10 {
        let p = random_path(&sp, &DiscretePath::constant(&[0.3], 64), 0.5, &mut rng);
        let a = sp.action(&p).unwrap();
        let b = sp.action(&p.translate(&[1.0])).unwrap();
        let c = sp.action(&p.translate(&[-3.0])).unwrap();
        assert!((a - b).abs() < 1e-12 && (a - c).abs() < 1e-12);
        assert!(sp.linf_distance_mod_lift(&p, &p.translate(&[2.0])) < 1e-12);
        assert_eq!(sp.component_key(&p), vec![0]);
    }
}

#[test]
fn constraints_and_components() {
    let sp = winding_loops(16);
    let seed = DiscretePath::line(&[0.1], &[2.3], 16);
    let p = sp.project_admissible(&seed).unwrap();
    assert_eq!(p.node(0)[0], 0.0);
    assert_eq!(p.node(16)[0], 2.0);
    assert_eq!(sp.component_key(&p), vec![2]);
    assert!(sp.constraint_residual(&p) <= 1e-12);

    let per = pendulum(16);
    let p = per
        .project_admissible(&DiscretePath::line(&[0.2], &[-0.7], 16))
        .unwrap();
    assert!((p.node(16)[0] - p.node(0)[0] + 1.0).abs() < 1e-12);
    assert_eq!(per.component_key(&p), vec![-1]);

    let basis = vec![DVector::from_column_slice(&[1.0, 1.0])];
    let sub = BoundaryCondition::Subspace {
        basis,
        anchor: (DVector::from_column_slice(&[0.0]), DVector::from_column_slice(&[0.5])),
    };
    let sp = model_space(lagrangian::free_particle(1), sub, 16);
    let p = sp.project_admissible(&DiscretePath::line(&[1.0], &[0.0], 16)).unwrap();
    assert!((p.node(16)[0] - p.node(0)[0] - 0.5).abs() < 1e-12);
    let mut rng = rng(1);
    let q = random_path(&sp, &p, 0.3, &mut rng);
    assert!(sp.constraint_residual(&q) <= 1e-12);
}

#[test]
fn csv_round_trip() {
    let path = DiscretePath::from_fn(2, 10, |t| DVector::from_column_slice(&[t.sin(), 3.0 * t]));
    let text = path.to_csv();
    assert!(text.starts_with("t,q1,q2\n"));
    let back = DiscretePath::from_csv(&text).unwrap();
    assert_eq!(back, path);
    assert!(DiscretePath::from_csv("t,q1\n0,1\n0.7,2\n").is_err());
    assert!(DiscretePath::from_csv("x,q1\n0,1\n1,2\n").is_err());
}

#[test]
fn probe_quartic_gap_stays_bounded_below() {
    let model = QuarticVelocity {
        dim: 1,
        quadratic: 1.0,
        quartic: 1.0,
    }
    .model();
    let sp = model_space(model, BoundaryCondition::Free, 8);
    let meshes: Vec<usize> = (3..=9).map(|k| 1 << k).collect();
    let rep = hessian_continuity_probe(&sp, &DiscretePath::constant(&[0.0], 8), &meshes, 1.0).unwrap();
    assert_eq!(rep.rows.len(), 7);
    for row in &rep.rows {
        assert!(row.gap >= 0.5, "gap {} at N={}", row.gap, row.cells);
        assert!((row.eta_norm - row.epsilon.sqrt()).abs() < 1e-12);
        // brute-force oracle: dense eigensolve of the difference pencil
        let spn = sp.with_cells(row.cells).unwrap();
        let g = DiscretePath::constant(&[0.0], row.cells);
        let eta = morse_action::pathspace::concentrated_perturbation(1, row.cells, 1.0);
        let d = &spn.hessian(&eta).unwrap().h - &spn.hessian(&g).unwrap().h;
        let chol = spn.hilbert_product_h1().clone().cholesky().unwrap();
        let l_inv = chol.l().try_inverse().unwrap();
        let c = &l_inv * d * l_inv.transpose();
        let ev = c.symmetric_eigenvalues();
        let oracle = ev.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        assert!((oracle - row.gap).abs() <= 1e-9 * oracle);
    }
    assert!((rep.eta_decay_exponent - 0.5).abs() < 1e-9);
}

#[test]
fn probe_constant_kinetic_gap_is_zero() {
    let model = assemble_electromagnetic(
        1,
        ElectromagneticData {
            kinetic: Arc::new(ConstantKinetic(DMatrix::identity(1, 1))),
            magnetic: None,
            potential: Some(Arc::new(PolynomialPotential {
                quadratic: 3.0,
                quartic: 0.0,
            })),
        },
    )
    .unwrap();
    let sp = model_space(model, BoundaryCondition::Free, 8);
    let meshes: Vec<usize> = (3..=9).map(|k| 1 << k).collect();
    let rep = hessian_continuity_probe(&sp, &DiscretePath::constant(&[0.0], 8), &meshes, 1.0).unwrap();
    assert!(rep.rows.iter().all(|r| r.gap == 0.0));
}
