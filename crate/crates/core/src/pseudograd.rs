//! Pseudo-gradient vector field: linear fields `−G₀⁻¹H₀(γ − γ₀)` near each
//! critical point, the negative H¹ gradient elsewhere, a smooth bump blend
//! and a conformal cap. Includes the flow integrator.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::critical::{morse_index, CriticalPoint};
use crate::error::{Error, Result};
use crate::linalg;
use crate::pathspace::{DiscretePath, HessianPencil, PathSpace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldOptions {
    /// Initial radius in the `⟨·,·⟩₀` norm.
    pub r0: f64,
    pub radius_floor: f64,
    /// Bound on `‖X‖` in the H¹ norm.
    pub cap_bound: f64,
    /// Samples per calibration pass (shell and interior each).
    pub samples: usize,
    pub rng_seed: u64,
}

impl Default for FieldOptions {
    fn default() -> Self {
        Self {
            r0: 0.5,
            radius_floor: 1e-6,
            cap_bound: 10.0,
            samples: 200,
            rng_seed: 0,
        }
    }
}

/// Lyapunov constants from `(H, G₀)`; refuses degenerate points.
pub fn certify_spectral_gap(cp: &CriticalPoint, pencil: &HessianPencil) -> Result<f64> {
    if cp.nullity > 0 {
        return Err(Error::Degenerate {
            id: cp.id,
            nullity: cp.nullity,
        });
    }
    let data = morse_index(pencil)?;
    if data.nullity > 0 {
        return Err(Error::Degenerate {
            id: cp.id,
            nullity: data.nullity,
        });
    }
    Ok(data.spectral_gap)
}

/// G₀-orthonormal eigenvectors with negative eigenvalue, ordered by
/// eigenvalue, sign fixed so the first nonzero nodal entry is positive.
pub fn unstable_basis(space: &PathSpace, cp: &CriticalPoint, pencil: &HessianPencil) -> Result<Vec<DVector<f64>>> {
    if cp.nullity > 0 {
        return Err(Error::Degenerate {
            id: cp.id,
            nullity: cp.nullity,
        });
    }
    let data = morse_index(pencil)?;
    let mut out = Vec::with_capacity(data.index);
    for k in 0..data.eigen.values.len() {
        if data.eigen.values[k] >= -data.null_tol {
            break;
        }
        let mut v = data.eigen.vectors.column(k).into_owned();
        let nodal = space.constraint_map().expand(&v);
        let scale = nodal.amax();
        if let Some(first) = nodal.iter().find(|x| x.abs() > 1e-8 * scale) {
            if *first < 0.0 {
                v = -v;
            }
        }
        out.push(v);
    }
    Ok(out)
}

/// Linear field `Y(γ) = −G₀⁻¹H₀(γ − γ₀)` on a ball around one critical point.
#[derive(Debug, Clone)]
pub struct LocalLinearField {
    pub center_id: usize,
    pub center: DiscretePath,
    pub component: Vec<i64>,
    pub index: usize,
    pub gram_zero: DMatrix<f64>,
    pub hessian: DMatrix<f64>,
    /// `G₀⁻¹H₀`.
    pub hessian_op: DMatrix<f64>,
    pub r_in: f64,
    pub r_out: f64,
    pub lambda: f64,
    pub mu: f64,
    chol_zero: Cholesky<f64, Dyn>,
}

impl LocalLinearField {
    fn new(space: &PathSpace, cp: &CriticalPoint, pencil: &HessianPencil, mu: f64) -> Result<Self> {
        let gram_zero = space.hilbert_product_zero(&cp.path)?;
        let chol_zero = linalg::cholesky(&gram_zero)?;
        let hessian_op = chol_zero.solve(&pencil.h);
        Ok(Self {
            center_id: cp.id,
            center: cp.path.clone(),
            component: cp.component.clone(),
            index: cp.morse_index,
            gram_zero,
            hessian: pencil.h.clone(),
            hessian_op,
            r_in: 0.0,
            r_out: 0.0,
            lambda: mu * mu / 2.0,
            mu,
            chol_zero,
        })
    }

    /// Reduced displacement from the center, modulo lift.
    pub fn offset(&self, space: &PathSpace, path: &DiscretePath) -> DVector<f64> {
        space.displacement(&self.center, path)
    }

    pub fn norm_zero(&self, delta: &DVector<f64>) -> f64 {
        linalg::quad_form(&self.gram_zero, delta).max(0.0).sqrt()
    }

    /// `Y = −G₀⁻¹H₀ δ`.
    pub fn linear_field(&self, delta: &DVector<f64>) -> DVector<f64> {
        -(&self.hessian_op * delta)
    }

    /// Largest `‖Y‖_{H¹}` per unit `‖δ‖₀`.
    fn operator_bound(&self, gram: &DMatrix<f64>) -> Result<f64> {
        let m = self.hessian_op.transpose() * gram * &self.hessian_op;
        let mut m = m;
        linalg::symmetrize(&mut m);
        let eig = linalg::generalized_eigen_with(&m, &self.chol_zero);
        Ok(eig.values.iter().fold(0.0_f64, |a, &x| a.max(x)).max(0.0).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub r_in: f64,
    pub r_out: f64,
    pub lambda: f64,
    pub mu: f64,
    pub nu: f64,
    pub halvings: usize,
    pub samples_checked: usize,
    /// Worst sampled `−D𝕊[Y] / ‖δ‖₀²`.
    pub worst_ratio: f64,
}

/// Picks the largest radius `r ≤ r₀` (by halving) on which the sampled
/// Lyapunov inequalities hold and `‖Y‖` stays under the cap threshold.
pub fn calibrate_radius(
    space: &PathSpace,
    cp: &CriticalPoint,
    pencil: &HessianPencil,
    opts: &FieldOptions,
) -> Result<Calibration> {
    let mu = certify_spectral_gap(cp, pencil)?;
    let local = LocalLinearField::new(space, cp, pencil, mu)?;
    let chol = linalg::cholesky(space.hilbert_product_h1())?;
    calibrate_local(space, &local, &chol, opts)
}

fn calibrate_local(
    space: &PathSpace,
    local: &LocalLinearField,
    chol: &Cholesky<f64, Dyn>,
    opts: &FieldOptions,
) -> Result<Calibration> {
    let mu = local.mu;
    let lambda = mu * mu / 2.0;
    let nu = 0.5_f64.min(mu);
    let s1 = opts.cap_bound / 2.0;
    let bound = local.operator_bound(space.hilbert_product_h1())?;
    let m = space.reduced_dim();

    // Directions: smooth low modes of the pencil and generic ones.
    let eig = linalg::generalized_eigen_with(&local.hessian, &local.chol_zero);
    let low = eig.values.len().min(8);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed ^ (local.center_id as u64).wrapping_mul(0x9E37_79B9));
    let mut directions = Vec::with_capacity(2 * opts.samples);
    for k in 0..2 * opts.samples {
        let v: DVector<f64> = if k % 2 == 0 {
            let mut v = DVector::zeros(m);
            for j in 0..low {
                let z: f64 = StandardNormal.sample(&mut rng);
                v += eig.vectors.column(j) * z;
            }
            v
        } else {
            DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng))
        };
        let norm = local.norm_zero(&v);
        let radial: f64 = rand::Rng::random_range(&mut rng, 0.0..1.0);
        directions.push((v / norm, radial));
    }

    let mut r = opts.r0;
    let mut halvings = 0;
    loop {
        if r < opts.radius_floor {
            return Err(Error::RadiusUnderflow {
                id: local.center_id,
                radius: r,
            });
        }
        let mut ok = r * bound <= s1;
        let mut worst = f64::INFINITY;
        if ok {
            for (k, (u, radial)) in directions.iter().enumerate() {
                // first half on the shell r/2..r, second half inside r/2
                let rho = if k < opts.samples {
                    r * (0.5 + 0.5 * radial)
                } else {
                    0.5 * r * radial
                };
                if rho == 0.0 {
                    continue;
                }
                let delta = u * rho;
                let path = space.displace(&local.center, &delta);
                let g = match space.gradient(&path) {
                    Ok(g) => g,
                    Err(_) => {
                        ok = false;
                        break;
                    }
                };
                let y = local.linear_field(&delta);
                let ds = g.dot(&y);
                let grad2 = g.dot(&chol.solve(&g));
                worst = worst.min(-ds / (rho * rho));
                if ds > -lambda * rho * rho || ds > -nu * grad2 {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok(Calibration {
                r_in: r / 2.0,
                r_out: r,
                lambda,
                mu,
                nu,
                halvings,
                samples_checked: directions.len(),
                worst_ratio: worst,
            });
        }
        r /= 2.0;
        halvings += 1;
    }
}

/// Smooth transition from 1 (at `d ≤ r_in`) to 0 (at `d ≥ r_out`).
pub fn bump(d: f64, r_in: f64, r_out: f64) -> f64 {
    if d <= r_in {
        return 1.0;
    }
    if d >= r_out {
        return 0.0;
    }
    let x = (r_out - d) / (r_out - r_in);
    let f = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    let a = f(x);
    a / (a + f(1.0 - x))
}

/// `s · χ(s)`: identity up to `s₁`, then saturating smoothly below `cap`.
pub fn capped_norm(s: f64, s1: f64, cap: f64) -> f64 {
    if s <= s1 {
        s
    } else {
        s1 + (cap - s1) * ((s - s1) / (cap - s1)).tanh()
    }
}

#[derive(Debug, Clone)]
pub struct FieldEval {
    pub x: DVector<f64>,
    /// Reduced gradient covector.
    pub gradient: DVector<f64>,
    /// `‖∇S‖` in the dual H¹ norm.
    pub grad_norm: f64,
    pub beta: f64,
    pub active: Option<usize>,
    pub capped: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalSummary {
    pub center_id: usize,
    pub index: usize,
    pub r_in: f64,
    pub r_out: f64,
    pub lambda: f64,
    pub mu: f64,
    pub halvings: usize,
    pub worst_ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldSummary {
    pub cap_bound: f64,
    pub cap_threshold: f64,
    pub shrink_steps: usize,
    pub locals: Vec<LocalSummary>,
}

#[derive(Debug, Clone)]
pub struct PseudoGradientField {
    space: PathSpace,
    pub locals: Vec<LocalLinearField>,
    pub cap_bound: f64,
    pub cap_threshold: f64,
    chol: Cholesky<f64, Dyn>,
    summary: FieldSummary,
}

/// Builds `X` from certified critical points; overlapping balls are shrunk
/// uniformly until disjoint.
pub fn assemble_field(space: &PathSpace, cps: &[CriticalPoint], opts: &FieldOptions) -> Result<PseudoGradientField> {
    let chol = linalg::cholesky(space.hilbert_product_h1())?;
    let mut locals = Vec::with_capacity(cps.len());
    let mut summaries = Vec::with_capacity(cps.len());
    for cp in cps {
        let pencil = space.hessian(&cp.path)?;
        let mu = certify_spectral_gap(cp, &pencil)?;
        let mut local = LocalLinearField::new(space, cp, &pencil, mu)?;
        let cal = calibrate_local(space, &local, &chol, opts)?;
        local.r_in = cal.r_in;
        local.r_out = cal.r_out;
        local.lambda = cal.lambda;
        summaries.push(LocalSummary {
            center_id: cp.id,
            index: cp.morse_index,
            r_in: cal.r_in,
            r_out: cal.r_out,
            lambda: cal.lambda,
            mu,
            halvings: cal.halvings,
            worst_ratio: cal.worst_ratio,
        });
        locals.push(local);
    }

    let mut shrink_steps = 0;
    loop {
        match first_overlap(space, &locals)? {
            None => break,
            Some((a, b)) => {
                let smallest = locals.iter().map(|l| l.r_out).fold(f64::INFINITY, f64::min);
                if smallest * 0.5 < opts.radius_floor {
                    return Err(Error::Overlap {
                        a: locals[a].center_id,
                        b: locals[b].center_id,
                    });
                }
                for l in locals.iter_mut() {
                    l.r_in *= 0.5;
                    l.r_out *= 0.5;
                }
                shrink_steps += 1;
            }
        }
    }
    for (s, l) in summaries.iter_mut().zip(&locals) {
        s.r_in = l.r_in;
        s.r_out = l.r_out;
    }
    let summary = FieldSummary {
        cap_bound: opts.cap_bound,
        cap_threshold: opts.cap_bound / 2.0,
        shrink_steps,
        locals: summaries,
    };
    Ok(PseudoGradientField {
        space: space.clone(),
        locals,
        cap_bound: opts.cap_bound,
        cap_threshold: opts.cap_bound / 2.0,
        chol,
        summary,
    })
}

fn first_overlap(space: &PathSpace, locals: &[LocalLinearField]) -> Result<Option<(usize, usize)>> {
    for (a, la) in locals.iter().enumerate() {
        // integer translates of the same center must stay outside the ball
        for j in 0..space.dim() {
            if space.manifold().is_periodic(j) {
                let mut shift = vec![0.0; space.dim()];
                shift[j] = 1.0;
                let translated = la.center.translate(&shift);
                let d = DVector::from_column_slice(
                    &translated
                        .as_slice()
                        .iter()
                        .zip(la.center.as_slice())
                        .map(|(x, y)| x - y)
                        .collect::<Vec<_>>(),
                );
                let lattice = nodal_mass_norm(space, &d);
                if 2.0 * la.r_out > lattice {
                    return Ok(Some((a, a)));
                }
            }
        }
        for (b, lb) in locals.iter().enumerate().skip(a + 1) {
            if la.component != lb.component {
                continue;
            }
            let delta = space.displacement(&la.center, &lb.center);
            let dist = la.norm_zero(&delta);
            let kappa = norm_ratio(&la.gram_zero, &lb.chol_zero);
            if dist < la.r_out + kappa.sqrt() * lb.r_out {
                return Ok(Some((a, b)));
            }
        }
    }
    Ok(None)
}

/// `⟨·,·⟩₀` norm of a full nodal displacement via the Euclidean mass term
/// only (exact for uniform translations).
fn nodal_mass_norm(space: &PathSpace, d: &DVector<f64>) -> f64 {
    let n = space.dim();
    let h = space.mesh();
    let mut total = 0.0;
    for i in 0..space.cells() {
        for j in 0..n {
            let a = d[i * n + j];
            let b = d[(i + 1) * n + j];
            total += h / 6.0 * (2.0 * a * a + 2.0 * a * b + 2.0 * b * b);
        }
    }
    total.sqrt()
}

/// Smallest `κ` with `‖v‖²_a ≤ κ ‖v‖²_b`.
fn norm_ratio(gram_a: &DMatrix<f64>, chol_b: &Cholesky<f64, Dyn>) -> f64 {
    let eig = linalg::generalized_eigen_with(gram_a, chol_b);
    eig.values.iter().fold(0.0_f64, |m, &x| m.max(x))
}

impl PseudoGradientField {
    pub fn space(&self) -> &PathSpace {
        &self.space
    }

    pub fn summary(&self) -> &FieldSummary {
        &self.summary
    }

    /// Local field whose ball is nearest (relative to `r_out`), with the
    /// offset and its `⟨·,·⟩₀` norm.
    pub fn nearest_local(&self, path: &DiscretePath) -> Option<(usize, DVector<f64>, f64)> {
        let key = self.space.component_key(path);
        let mut best: Option<(usize, DVector<f64>, f64)> = None;
        for (k, l) in self.locals.iter().enumerate() {
            if l.component != key {
                continue;
            }
            let delta = l.offset(&self.space, path);
            let d = l.norm_zero(&delta);
            let better = match &best {
                None => true,
                Some((b, _, bd)) => d / l.r_out < bd / self.locals[*b].r_out,
            };
            if better {
                best = Some((k, delta, d));
            }
        }
        best
    }

    pub fn eval(&self, path: &DiscretePath) -> Result<FieldEval> {
        let g = self.space.gradient(path)?;
        let grad_vec = self.chol.solve(&g);
        let grad_norm = g.dot(&grad_vec).max(0.0).sqrt();
        let near = self.nearest_local(path);
        let (beta, active, y) = match near {
            Some((k, delta, d)) if d < self.locals[k].r_out => {
                let l = &self.locals[k];
                let b = bump(d, l.r_in, l.r_out);
                (b, Some(k), Some(l.linear_field(&delta)))
            }
            _ => (0.0, None, None),
        };
        let raw = match (&y, beta) {
            (Some(y), 1.0) => y.clone(),
            (Some(y), b) => y * b - &grad_vec * (1.0 - b),
            (None, _) => -&grad_vec,
        };
        let s = linalg::quad_form(self.space.hilbert_product_h1(), &raw).max(0.0).sqrt();
        let (x, capped) = if s <= self.cap_threshold {
            (raw, false)
        } else {
            let factor = capped_norm(s, self.cap_threshold, self.cap_bound) / s;
            let mut x = raw * factor;
            let mut n = self.h1_norm(&x);
            while n >= self.cap_bound {
                x *= (self.cap_bound / n) * (1.0 - 4.0 * f64::EPSILON);
                n = self.h1_norm(&x);
            }
            (x, true)
        };
        Ok(FieldEval {
            x,
            gradient: g,
            grad_norm,
            beta,
            active,
            capped,
        })
    }

    /// `D𝕊(γ)[X(γ)]`.
    pub fn lyapunov_derivative(&self, path: &DiscretePath) -> Result<f64> {
        let e = self.eval(path)?;
        Ok(e.gradient.dot(&e.x))
    }

    pub fn h1_norm(&self, v: &DVector<f64>) -> f64 {
        linalg::quad_form(self.space.hilbert_product_h1(), v).max(0.0).sqrt()
    }
}

// ---------------------------------------------------------------------------
// Flow

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowOptions {
    pub t_max: f64,
    /// Stop when `‖∇S‖` drops below this.
    pub stop_tol: f64,
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_steps: usize,
    /// Allowed action increase per accepted step.
    pub action_slack: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            t_max: 200.0,
            stop_tol: 1e-8,
            rtol: 1e-8,
            atol: 1e-10,
            initial_step: 1e-2,
            min_step: 1e-12,
            max_steps: 200_000,
            action_slack: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub action: f64,
    pub grad_norm: f64,
    pub nearest_id: Option<usize>,
    pub nearest_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStatus {
    Converged,
    Timeout,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub end: DiscretePath,
    pub status: FlowStatus,
    /// Nearest reference critical point at the end, with its H¹ distance.
    pub nearest: Option<(usize, f64)>,
    pub steps: usize,
    pub rejected: usize,
    /// Largest action increase over an accepted step.
    pub max_action_increase: f64,
    /// A few paths from the end of the run, for diagnostics.
    pub tail: Vec<DiscretePath>,
}

impl Trajectory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,action,grad_norm,nearest_cp,distance_to_nearest_cp\n");
        for s in &self.samples {
            let id = s.nearest_id.map_or(String::new(), |i| i.to_string());
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.t, s.action, s.grad_norm, id, s.nearest_distance
            ));
        }
        out
    }
}

const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn nearest_reference(space: &PathSpace, path: &DiscretePath, refs: &[CriticalPoint]) -> Option<(usize, f64)> {
    refs.iter()
        .map(|cp| (cp.id, space.h1_distance_mod_lift(&cp.path, path)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Integrates `γ̇ = X(γ)` with Dormand–Prince 5(4). Steps that raise the
/// action by more than the slack are rejected and retried with a smaller
/// step and tighter tolerance, up to three times.
pub fn flow(
    field: &PseudoGradientField,
    start: &DiscretePath,
    refs: &[CriticalPoint],
    opts: &FlowOptions,
) -> Result<Trajectory> {
    let space = field.space();
    let mut current = space.project_admissible(start)?;
    let m = space.reduced_dim();

    let mut t = 0.0;
    let mut e0 = field.eval(&current)?;
    let mut action = space.action(&current)?;
    let mut samples = vec![TrajectorySample {
        t,
        action,
        grad_norm: e0.grad_norm,
        nearest_id: None,
        nearest_distance: f64::NAN,
    }];
    if let Some((id, d)) = nearest_reference(space, &current, refs) {
        samples[0].nearest_id = Some(id);
        samples[0].nearest_distance = d;
    }
    let mut tail = vec![current.clone()];
    let mut h = opts.initial_step;
    let mut rtol = opts.rtol;
    let mut steps = 0;
    let mut rejected = 0;
    let mut breaches = 0;
    let mut max_increase = f64::NEG_INFINITY;
    let mut status = FlowStatus::Timeout;

    // each step integrates the increment from the current path
    while e0.grad_norm > opts.stop_tol {
        if t >= opts.t_max || steps >= opts.max_steps {
            break;
        }
        if h < opts.min_step {
            return Err(Error::StepUnderflow { t });
        }
        h = h.min(opts.t_max - t).max(opts.min_step);
        let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
        k.push(e0.x.clone());
        let mut last_eval = None;
        for s in 1..7 {
            let mut cs = DVector::zeros(m);
            for (j, kj) in k.iter().enumerate() {
                let a = DP_A[s][j];
                if a != 0.0 {
                    cs.axpy(h * a, kj, 1.0);
                }
            }
            let ev = field.eval(&space.displace(&current, &cs))?;
            k.push(ev.x.clone());
            if s == 6 {
                last_eval = Some(ev);
            }
        }
        let mut inc = DVector::zeros(m);
        let mut err = DVector::zeros(m);
        for j in 0..7 {
            if DP_B[j] != 0.0 {
                inc.axpy(h * DP_B[j], &k[j], 1.0);
            }
            if DP_E[j] != 0.0 {
                err.axpy(h * DP_E[j], &k[j], 1.0);
            }
        }
        let mut acc = 0.0;
        for i in 0..m {
            let sc = opts.atol + rtol * inc[i].abs();
            acc += (err[i] / sc).powi(2);
        }
        let err_norm = (acc / m.max(1) as f64).sqrt();
        if !err_norm.is_finite() || err_norm > 1.0 {
            rejected += 1;
            let factor = if err_norm.is_finite() {
                (0.9 * err_norm.powf(-0.2)).clamp(0.2, 1.0)
            } else {
                0.2
            };
            h *= factor;
            continue;
        }
        let path_new = space.displace(&current, &inc);
        let action_new = space.action(&path_new)?;
        let increase = action_new - action;
        if increase > opts.action_slack {
            breaches += 1;
            rejected += 1;
            if breaches > 3 {
                return Err(Error::ActionIncrease { t, increase });
            }
            h *= 0.5;
            rtol *= 0.1;
            continue;
        }
        breaches = 0;
        max_increase = max_increase.max(increase);
        steps += 1;
        t += h;
        action = action_new;
        e0 = last_eval.expect("stage 7 evaluated");
        let nearest = nearest_reference(space, &path_new, refs);
        samples.push(TrajectorySample {
            t,
            action,
            grad_norm: e0.grad_norm,
            nearest_id: nearest.map(|r| r.0),
            nearest_distance: nearest.map_or(f64::NAN, |r| r.1),
        });
        tail.push(path_new.clone());
        if tail.len() > 8 {
            tail.remove(0);
        }
        current = path_new;
        let factor = if err_norm == 0.0 {
            5.0
        } else {
            (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
    if e0.grad_norm <= opts.stop_tol {
        status = FlowStatus::Converged;
    }
    let end = current;
    Ok(Trajectory {
        nearest: nearest_reference(space, &end, refs),
        samples,
        end,
        status,
        steps,
        rejected,
        max_action_increase: if steps == 0 { 0.0 } else { max_increase },
        tail,
    })
}
