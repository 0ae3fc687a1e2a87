//! Critical points of the discrete action: damped Newton, Morse index and
//! nullity, nondegeneracy certificates, seed sweeps and Palais–Smale
//! diagnostics.

use std::f64::consts::PI;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, PencilEigen};
use crate::manifold::BoundaryCondition;
use crate::parallel;
use crate::pathspace::{DiscretePath, HessianPencil, PathSpace};

#[derive(Debug, Clone)]
pub struct CriticalPoint {
    pub id: usize,
    pub path: DiscretePath,
    pub action: f64,
    pub morse_index: usize,
    pub nullity: usize,
    /// `‖∇S‖` in the dual H¹ norm.
    pub residual: f64,
    /// Smallest `|λ|` of `(H, G₀)` outside the null band.
    pub spectral_gap: f64,
    pub null_tol: f64,
    pub component: Vec<i64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iterations: usize,
    /// Largest accepted step in the H¹ norm.
    pub box_bound: f64,
    pub min_damping: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iterations: 60,
            box_bound: 1e3,
            min_damping: 2f64.powi(-20),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MorseData {
    pub index: usize,
    pub nullity: usize,
    pub spectral_gap: f64,
    pub null_tol: f64,
    pub eigen: PencilEigen,
}

/// Inertia of the pencil `(H, G₀)` with `null_tol = 1e-8 · max|λ|`.
pub fn morse_index(pencil: &HessianPencil) -> Result<MorseData> {
    let eigen = linalg::generalized_eigen(&pencil.h, &pencil.gram_zero)?;
    Ok(classify(eigen))
}

fn classify(eigen: PencilEigen) -> MorseData {
    let scale = eigen.values.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let null_tol = 1e-8 * scale;
    let mut index = 0;
    let mut nullity = 0;
    let mut gap = f64::INFINITY;
    for &l in eigen.values.iter() {
        if l.abs() <= null_tol {
            nullity += 1;
        } else {
            if l < 0.0 {
                index += 1;
            }
            gap = gap.min(l.abs());
        }
    }
    MorseData {
        index,
        nullity,
        spectral_gap: gap,
        null_tol,
        eigen,
    }
}

/// Condition (L0) at `cp`: no null directions and a clear spectral gap.
pub fn certify_l0(cp: &CriticalPoint) -> bool {
    cp.nullity == 0 && cp.spectral_gap > 10.0 * cp.null_tol
}

/// Fills in index, nullity and gap for a converged path.
pub fn analyze(space: &PathSpace, path: DiscretePath, iterations: usize) -> Result<CriticalPoint> {
    let pencil = space.hessian(&path)?;
    let data = morse_index(&pencil)?;
    let g = space.gradient(&path)?;
    let residual = space.dual_norm(&g)?;
    Ok(CriticalPoint {
        id: 0,
        action: space.action(&path)?,
        morse_index: data.index,
        nullity: data.nullity,
        residual,
        spectral_gap: data.spectral_gap,
        null_tol: data.null_tol,
        component: space.component_key(&path),
        path,
        iterations,
    })
}

/// Damped Newton on the constrained gradient, Armijo on `‖∇S‖²_{G⁻¹}`.
pub fn newton_solve(space: &PathSpace, seed: &DiscretePath, opts: &NewtonOptions) -> Result<CriticalPoint> {
    let mut path = space.project_admissible(seed)?;
    let gram = space.hilbert_product_h1();
    let chol = linalg::cholesky(gram)?;
    let merit = |g: &DVector<f64>| g.dot(&chol.solve(g)).max(0.0);

    let mut g = space.gradient(&path)?;
    let mut phi = merit(&g);
    let mut iterations = 0;
    while phi.sqrt() > opts.tol {
        if iterations >= opts.max_iterations {
            return Err(Error::NewtonMaxIterations {
                iterations,
                residual: phi.sqrt(),
            });
        }
        iterations += 1;
        let pencil = space.hessian(&path)?;
        let step_norm = |d: &DVector<f64>| linalg::quad_form(gram, d).max(0.0).sqrt();
        let lu_step = pencil
            .h
            .clone()
            .lu()
            .solve(&(-&g))
            .filter(|d| d.iter().all(|x| x.is_finite()) && step_norm(d) <= opts.box_bound);
        let step = match lu_step {
            Some(d) => d,
            None => {
                warn!("singular or oversized Newton step at iteration {iterations}; using pseudo-inverse");
                pseudo_inverse_step(&pencil.h, gram, &g)?
            }
        };

        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha >= opts.min_damping {
            let trial = space.displace(&path, &(&step * alpha));
            if let Ok(gt) = space.gradient(&trial) {
                let pt = merit(&gt);
                if pt.is_finite() && pt <= (1.0 - 1e-4 * alpha) * phi {
                    accepted = Some((trial, gt, pt));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let (next, gn, pn) = match accepted {
            Some(a) => a,
            None => descent_step(space, &path, &g, &chol, opts)?,
        };
        let moved = step_norm(&space.displacement(&path, &next));
        if !moved.is_finite() || moved > opts.box_bound {
            return Err(Error::NewtonDivergence {
                norm: moved,
                bound: opts.box_bound,
            });
        }
        debug!(
            "newton iteration {iterations}: residual {:.3e} -> {:.3e}",
            phi.sqrt(),
            pn.sqrt()
        );
        path = next;
        g = gn;
        phi = pn;
    }
    analyze(space, path, iterations)
}

/// Pseudo-inverse Newton step, with steepest descent in near-null
/// directions.
fn pseudo_inverse_step(h: &DMatrix<f64>, gram: &DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    let eig = linalg::generalized_eigen(h, gram)?;
    let scale = eig.values.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let cut = 1e-8 * scale.max(1e-300);
    let mut step = DVector::zeros(g.len());
    for (k, &l) in eig.values.iter().enumerate() {
        let x = eig.vectors.column(k);
        let c = x.dot(g);
        if l.abs() > cut {
            step -= x * (c / l);
        } else {
            step -= x * c;
        }
    }
    Ok(step)
}

/// Backtracking steepest descent on the action itself.
fn descent_step(
    space: &PathSpace,
    path: &DiscretePath,
    g: &DVector<f64>,
    chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
    opts: &NewtonOptions,
) -> Result<(DiscretePath, DVector<f64>, f64)> {
    let dir = -chol.solve(g);
    let slope = g.dot(&dir);
    let s0 = space.action(path)?;
    let mut alpha = 1.0;
    while alpha >= opts.min_damping {
        let trial = space.displace(path, &(&dir * alpha));
        if let (Ok(s), Ok(gt)) = (space.action(&trial), space.gradient(&trial)) {
            if s <= s0 + 1e-4 * alpha * slope {
                let pt = gt.dot(&chol.solve(&gt));
                return Ok((trial, gt, pt));
            }
        }
        alpha *= 0.5;
    }
    Err(Error::NewtonMaxIterations {
        iterations: 0,
        residual: (-slope).max(0.0).sqrt(),
    })
}

// ---------------------------------------------------------------------------
// Seed sweeps

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum SeedStrategy {
    /// Constant paths on a grid over `[low, high)` in every coordinate.
    ConstantGrid { count: usize, low: f64, high: f64 },
    /// Straight lines winding `k` times in each periodic coordinate.
    Winding { min: i64, max: i64 },
    /// Admissible line plus random sine modes.
    RandomFourier {
        count: usize,
        modes: usize,
        amplitude: f64,
        rng_seed: u64,
    },
}

impl SeedStrategy {
    pub fn seeds(&self, space: &PathSpace) -> Vec<DiscretePath> {
        let n = space.dim();
        let cells = space.cells();
        let (start, end) = reference_endpoints(space);
        match *self {
            SeedStrategy::ConstantGrid { count, low, high } => {
                let total = count.pow(n as u32);
                (0..total)
                    .map(|mut idx| {
                        let q: Vec<f64> = (0..n)
                            .map(|_| {
                                let i = idx % count;
                                idx /= count;
                                low + (high - low) * i as f64 / count as f64
                            })
                            .collect();
                        DiscretePath::constant(&q, cells)
                    })
                    .collect()
            }
            SeedStrategy::Winding { min, max } => {
                let periodic: Vec<usize> = (0..n).filter(|&j| space.manifold().is_periodic(j)).collect();
                let span = (max - min + 1).max(0) as usize;
                let total = span.pow(periodic.len() as u32);
                (0..total)
                    .map(|mut idx| {
                        let mut stop = end.clone();
                        for &j in &periodic {
                            stop[j] += (min + (idx % span) as i64) as f64;
                            idx /= span;
                        }
                        DiscretePath::line(&start, &stop, cells)
                    })
                    .collect()
            }
            SeedStrategy::RandomFourier {
                count,
                modes,
                amplitude,
                rng_seed,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
                (0..count)
                    .map(|_| {
                        let coeffs: Vec<f64> = (0..n * modes).map(|_| StandardNormal.sample(&mut rng)).collect();
                        let shift: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
                        let free_ends = !matches!(space.boundary(), BoundaryCondition::Dirichlet { .. });
                        DiscretePath::from_fn(n, cells, |t| {
                            DVector::from_fn(n, |j, _| {
                                let mut x = start[j] + t * (end[j] - start[j]);
                                if free_ends {
                                    x += amplitude * shift[j];
                                }
                                for k in 0..modes {
                                    let kk = (k + 1) as f64;
                                    x += amplitude * coeffs[j * modes + k] * (kk * PI * t).sin() / kk;
                                }
                                x
                            })
                        })
                    })
                    .collect()
            }
        }
    }
}

fn reference_endpoints(space: &PathSpace) -> (Vec<f64>, Vec<f64>) {
    let n = space.dim();
    match space.boundary() {
        BoundaryCondition::Dirichlet { start, end } => (start.iter().copied().collect(), end.iter().copied().collect()),
        BoundaryCondition::Subspace { anchor, .. } => {
            (anchor.0.iter().copied().collect(), anchor.1.iter().copied().collect())
        }
        _ => (vec![0.0; n], vec![0.0; n]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub points: Vec<CriticalPoint>,
    pub failures: Vec<SeedFailure>,
    pub seeds: usize,
}

/// Shifts periodic coordinates so node 0 lies in `[0, 1)`.
pub fn canonical_lift(space: &PathSpace, path: &DiscretePath) -> DiscretePath {
    let shift: Vec<f64> = (0..space.dim())
        .map(|j| {
            if space.manifold().is_periodic(j) {
                -(path.node_slice(0)[j] + 1e-9).floor()
            } else {
                0.0
            }
        })
        .collect();
    if shift.iter().all(|&s| s == 0.0) {
        path.clone()
    } else {
        path.translate(&shift)
    }
}

pub const DEDUP_ACTION_TOL: f64 = 1e-8;
pub const DEDUP_PATH_TOL: f64 = 1e-4;

/// Runs Newton from every seed (concurrently), then deduplicates by action
/// and lifted L∞ distance. Results are sorted by action and numbered.
pub fn seed_sweep(space: &PathSpace, strategy: &SeedStrategy, opts: &NewtonOptions) -> SweepResult {
    let seeds = strategy.seeds(space);
    let results = parallel::map(&seeds, |seed| newton_solve(space, seed, opts));
    let mut found = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(mut cp) => {
                cp.path = canonical_lift(space, &cp.path);
                found.push(cp);
            }
            Err(e) => {
                debug!("seed {i} failed: {e}");
                failures.push(SeedFailure {
                    seed: i,
                    message: e.to_string(),
                });
            }
        }
    }
    SweepResult {
        points: deduplicate(space, found),
        failures,
        seeds: seeds.len(),
    }
}

/// Deterministic sequential reduction: sort, drop near-duplicates, renumber.
pub fn deduplicate(space: &PathSpace, mut found: Vec<CriticalPoint>) -> Vec<CriticalPoint> {
    found.sort_by(|a, b| {
        a.action
            .total_cmp(&b.action)
            .then_with(|| a.component.cmp(&b.component))
            .then_with(|| a.path.as_slice()[0].total_cmp(&b.path.as_slice()[0]))
    });
    let mut out: Vec<CriticalPoint> = Vec::new();
    for cp in found {
        let dup = out.iter().any(|kept| {
            (kept.action - cp.action).abs() <= DEDUP_ACTION_TOL
                && space.linf_distance_mod_lift(&kept.path, &cp.path) <= DEDUP_PATH_TOL
        });
        if !dup {
            out.push(cp);
        }
    }
    // survivors sorted by action, then renumbered
    out.sort_by(|a, b| {
        a.action
            .total_cmp(&b.action)
            .then_with(|| a.component.cmp(&b.component))
            .then_with(|| a.path.as_slice()[0].total_cmp(&b.path.as_slice()[0]))
    });
    for (i, cp) in out.iter_mut().enumerate() {
        cp.id = i;
    }
    out
}

// ---------------------------------------------------------------------------
// Palais–Smale diagnostics

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsStatus {
    Converged,
    /// Action keeps dropping while the path leaves every bounded set.
    Escaping,
    /// Action bounded but the gradient does not tend to zero.
    PsViolationSuspected,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsReport {
    pub actions: Vec<f64>,
    pub gradient_norms: Vec<f64>,
    /// H¹ distances between consecutive tail paths.
    pub cauchy_increments: Vec<f64>,
    pub sup_norms: Vec<f64>,
    pub status: PsStatus,
}

/// Inspects the tail of a trajectory for Palais–Smale symptoms.
pub fn ps_diagnostic(space: &PathSpace, tail: &[DiscretePath], grad_tol: f64) -> Result<PsReport> {
    let mut actions = Vec::with_capacity(tail.len());
    let mut gradient_norms = Vec::with_capacity(tail.len());
    let mut sup_norms = Vec::with_capacity(tail.len());
    for p in tail {
        actions.push(space.action(p)?);
        gradient_norms.push(space.dual_norm(&space.gradient(p)?)?);
        sup_norms.push(p.as_slice().iter().fold(0.0_f64, |m, x| m.max(x.abs())));
    }
    let cauchy_increments: Vec<f64> = tail
        .windows(2)
        .map(|w| space.h1_distance_mod_lift(&w[0], &w[1]))
        .collect();
    let status = match (gradient_norms.last(), actions.first(), actions.last()) {
        (None, _, _) => PsStatus::Inconclusive,
        (Some(&g), _, _) if g <= grad_tol => PsStatus::Converged,
        (Some(_), Some(&a0), Some(&a1)) => {
            let decreasing = actions.windows(2).all(|w| w[1] <= w[0] + 1e-10);
            let grows = *sup_norms.last().unwrap_or(&0.0) > 2.0 * sup_norms[0].max(1e-12);
            if decreasing && grows && a1 < a0 {
                PsStatus::Escaping
            } else if tail.len() >= 3 {
                PsStatus::PsViolationSuspected
            } else {
                PsStatus::Inconclusive
            }
        }
        _ => PsStatus::Inconclusive,
    };
    Ok(PsReport {
        actions,
        gradient_norms,
        cauchy_increments,
        sup_norms,
        status,
    })
}
