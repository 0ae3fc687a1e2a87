#![allow(dead_code)]

use std::f64::consts::PI;

use morse_action::critical::{seed_sweep, CriticalPoint, NewtonOptions, SeedStrategy};
use morse_action::lagrangian::{self, LagrangianModel};
use morse_action::manifold::{BoundaryCondition, ChartedManifold};
use morse_action::morse_complex::snf::IntMatrix;
use morse_action::pathspace::{DiscretePath, PathSpace};
use nalgebra::DVector;
use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const OMEGA: f64 = 1.5 * PI;

pub fn quadratic_line(cells: usize) -> PathSpace {
    PathSpace::new(
        ChartedManifold::euclidean(1),
        lagrangian::free_particle(1),
        BoundaryCondition::dirichlet(&[0.0], &[1.0]),
        cells,
    )
    .unwrap()
}

pub fn pendulum(cells: usize) -> PathSpace {
    PathSpace::new(
        ChartedManifold::torus(1),
        lagrangian::pendulum(1, 0.5),
        BoundaryCondition::Periodic,
        cells,
    )
    .unwrap()
}

pub fn duffing(cells: usize) -> PathSpace {
    PathSpace::new(
        ChartedManifold::euclidean(1),
        lagrangian::duffing(OMEGA, 1.0),
        BoundaryCondition::dirichlet(&[0.0], &[0.0]),
        cells,
    )
    .unwrap()
}

pub fn winding_loops(cells: usize) -> PathSpace {
    PathSpace::new(
        ChartedManifold::torus(1),
        lagrangian::free_particle(1),
        BoundaryCondition::dirichlet(&[0.0], &[0.0]),
        cells,
    )
    .unwrap()
}

pub fn free_loops(cells: usize) -> PathSpace {
    PathSpace::new(
        ChartedManifold::torus(1),
        lagrangian::free_particle(1),
        BoundaryCondition::Periodic,
        cells,
    )
    .unwrap()
}

pub fn model_space(model: LagrangianModel, bc: BoundaryCondition, cells: usize) -> PathSpace {
    PathSpace::new(ChartedManifold::euclidean(model.dim()), model, bc, cells).unwrap()
}

/// Admissible path with a few random sine modes added to the interior and
/// random admissible endpoint motion.
pub fn random_path(space: &PathSpace, base: &DiscretePath, amplitude: f64, rng: &mut ChaCha8Rng) -> DiscretePath {
    let n = space.dim();
    let coeffs: Vec<f64> = (0..4 * n).map(|_| StandardNormal.sample(rng)).collect();
    let bump = DiscretePath::from_fn(n, space.cells(), |t| {
        DVector::from_fn(n, |j, _| {
            (0..4)
                .map(|k| coeffs[4 * j + k] * ((k + 1) as f64 * PI * t).sin() / (k + 1) as f64)
                .sum::<f64>()
                * amplitude
        })
    });
    let mut data: Vec<f64> = base
        .as_slice()
        .iter()
        .zip(bump.as_slice())
        .map(|(a, b)| a + b)
        .collect();
    let w = space.constraint_map().w_dim();
    let mut c = DVector::zeros(space.reduced_dim());
    for r in 0..w {
        let z: f64 = StandardNormal.sample(rng);
        c[r] = amplitude * z;
    }
    let moved = space.constraint_map().expand(&c);
    for (x, d) in data.iter_mut().zip(moved.iter()) {
        *x += d;
    }
    DiscretePath::from_flat(n, data).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Central-difference gradient of the action in reduced coordinates.
pub fn fd_gradient(space: &PathSpace, path: &DiscretePath, step: f64) -> DVector<f64> {
    let m = space.reduced_dim();
    DVector::from_fn(m, |r, _| {
        let mut e = DVector::zeros(m);
        e[r] = step;
        let p = space.action(&space.displace(path, &e)).unwrap();
        let q = space.action(&space.displace(path, &(-e))).unwrap();
        (p - q) / (2.0 * step)
    })
}

pub fn rel_inf(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}

/// Independent shooting oracle for γ″ = −ω²γ + γ³, γ(0) = γ(1) = 0:
/// RK4 on the first-order system, bisection on the initial slope.
/// Returns (slope, action) with the action integrated by Simpson's rule.
pub fn duffing_shooting() -> (f64, f64) {
    const STEPS: usize = 20_000;
    let rhs = |y: [f64; 2]| [y[1], -OMEGA * OMEGA * y[0] + y[0].powi(3)];
    let integrate = |slope: f64, mut visit: Option<&mut dyn FnMut(usize, [f64; 2])>| {
        let h = 1.0 / STEPS as f64;
        let mut y = [0.0, slope];
        if let Some(v) = visit.as_mut() {
            v(0, y);
        }
        for i in 0..STEPS {
            let k1 = rhs(y);
            let k2 = rhs([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
            let k3 = rhs([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
            let k4 = rhs([y[0] + h * k3[0], y[1] + h * k3[1]]);
            for c in 0..2 {
                y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
            }
            if let Some(v) = visit.as_mut() {
                v(i + 1, y);
            }
        }
        y[0]
    };
    let (mut lo, mut hi) = (12.0, 15.2);
    assert!(integrate(lo, None) < 0.0 && integrate(hi, None) > 0.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if integrate(mid, None) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let slope = 0.5 * (lo + hi);
    let mut lag = vec![0.0; STEPS + 1];
    integrate(
        slope,
        Some(&mut |i, y: [f64; 2]| {
            lag[i] = 0.5 * y[1] * y[1] - 0.5 * OMEGA * OMEGA * y[0] * y[0] + 0.25 * y[0].powi(4);
        }),
    );
    let h = 1.0 / STEPS as f64;
    let mut action = lag[0] + lag[STEPS];
    for (i, l) in lag.iter().enumerate().take(STEPS).skip(1) {
        action += if i % 2 == 1 { 4.0 * l } else { 2.0 * l };
    }
    (slope, action * h / 3.0)
}

pub fn pendulum_points(cells: usize) -> (PathSpace, Vec<CriticalPoint>) {
    let sp = pendulum(cells);
    let res = seed_sweep(
        &sp,
        &SeedStrategy::ConstantGrid {
            count: 16,
            low: 0.0,
            high: 1.0,
        },
        &NewtonOptions::default(),
    );
    (sp, res.points)
}

pub fn duffing_points(cells: usize) -> (PathSpace, Vec<CriticalPoint>) {
    let sp = duffing(cells);
    let res = seed_sweep(
        &sp,
        &SeedStrategy::RandomFourier {
            count: 24,
            modes: 3,
            amplitude: 3.0,
            rng_seed: 1,
        },
        &NewtonOptions::default(),
    );
    (sp, res.points)
}

/// Fraction-free elimination: returns (rank, determinant when square).
pub fn bareiss(m: &IntMatrix) -> (usize, Option<BigInt>) {
    let mut a = m.clone();
    let rows = a.len();
    let cols = a.first().map_or(0, |r| r.len());
    let mut prev = BigInt::one();
    let mut rank = 0;
    let mut sign = 1;
    for c in 0..cols {
        if rank == rows {
            break;
        }
        let Some(p) = (rank..rows).find(|&r| !a[r][c].is_zero()) else {
            continue;
        };
        if p != rank {
            a.swap(p, rank);
            sign = -sign;
        }
        for r in rank + 1..rows {
            for k in c + 1..cols {
                a[r][k] = (&a[r][k] * &a[rank][c] - &a[r][c] * &a[rank][k]) / &prev;
            }
            a[r][c] = BigInt::zero();
        }
        prev = a[rank][c].clone();
        rank += 1;
    }
    let det = if rows == cols {
        Some(if rank < rows {
            BigInt::zero()
        } else {
            &a[rows - 1][cols - 1] * sign
        })
    } else {
        None
    };
    (rank, det)
}

/// Entries in [−9, 9], sizes up to 8×8.
pub fn random_matrix(r: &mut impl Rng) -> IntMatrix {
    let rows = r.random_range(1..=8);
    let cols = r.random_range(1..=8);
    (0..rows)
        .map(|_| (0..cols).map(|_| BigInt::from(r.random_range(-9..=9))).collect())
        .collect()
}
