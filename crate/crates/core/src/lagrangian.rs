//! Lagrangian functions `L(t, q, v)` with analytic first and second
//! derivatives, the built-in families, sampled growth-condition checks and
//! the fiber-wise Legendre inversion.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::manifold::ChartedManifold;

/// A time-dependent Lagrangian in chart coordinates.
///
/// Mixed derivatives follow the convention `d_vq[(i, j)] = ∂²L/∂vᵢ∂qⱼ`.
/// Implementations must be pure.
pub trait Lagrangian: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> f64;
    fn d_q(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;
    fn d_v(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;
    fn d_vv(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64>;
    fn d_vq(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64>;
    fn d_qq(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Electromagnetic,
    PolynomialVelocity,
    Custom,
}

/// Declared growth and convexity constants. Missing entries are estimated
/// by sampling when checked.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstants {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell3: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell4: Option<f64>,
}

#[derive(Clone)]
pub struct LagrangianModel {
    inner: Arc<dyn Lagrangian>,
    family: Family,
    constants: GrowthConstants,
    reduced_accuracy: bool,
    constant_fiber_hessian: bool,
}

impl fmt::Debug for LagrangianModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LagrangianModel")
            .field("dim", &self.dim())
            .field("family", &self.family)
            .field("constants", &self.constants)
            .field("reduced_accuracy", &self.reduced_accuracy)
            .finish()
    }
}

impl LagrangianModel {
    /// Wraps a user Lagrangian with analytic derivatives.
    pub fn custom(inner: Arc<dyn Lagrangian>) -> Self {
        Self {
            inner,
            family: Family::Custom,
            constants: GrowthConstants::default(),
            reduced_accuracy: false,
            constant_fiber_hessian: false,
        }
    }

    /// Wraps a value-only Lagrangian; derivatives come from central
    /// differences and the model is flagged as reduced-accuracy.
    pub fn finite_difference<F>(dim: usize, f: F) -> Self
    where
        F: Fn(f64, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        Self {
            inner: Arc::new(FiniteDifferenceLagrangian { dim, f }),
            family: Family::Custom,
            constants: GrowthConstants::default(),
            reduced_accuracy: true,
            constant_fiber_hessian: false,
        }
    }

    pub fn with_constants(mut self, constants: GrowthConstants) -> Self {
        self.constants = constants;
        self
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn constants(&self) -> &GrowthConstants {
        &self.constants
    }

    pub fn is_reduced_accuracy(&self) -> bool {
        self.reduced_accuracy
    }

    /// True when `d_vv` does not depend on `v` (electromagnetic family).
    pub fn has_constant_fiber_hessian(&self) -> bool {
        self.constant_fiber_hessian
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn value(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.inner.value(t, q, v)
    }
    pub fn d_q(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.inner.d_q(t, q, v)
    }
    pub fn d_v(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.inner.d_v(t, q, v)
    }
    pub fn d_vv(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        self.inner.d_vv(t, q, v)
    }
    pub fn d_vq(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        self.inner.d_vq(t, q, v)
    }
    pub fn d_qq(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        self.inner.d_qq(t, q, v)
    }
}

// ---------------------------------------------------------------------------
// Electromagnetic family: L = ½⟨A v, v⟩ + ⟨α, v⟩ − V

pub trait KineticTensor: Send + Sync {
    fn matrix(&self, t: f64, q: &DVector<f64>) -> DMatrix<f64>;
    /// `∂A/∂q_k` for each `k`.
    fn d_q(&self, t: f64, q: &DVector<f64>) -> Vec<DMatrix<f64>>;
    /// `∂²A/∂q_k∂q_l`, indexed `[k][l]`.
    fn d_qq(&self, t: f64, q: &DVector<f64>) -> Vec<Vec<DMatrix<f64>>>;
    fn is_constant(&self) -> bool {
        false
    }
}

pub trait MagneticPotential: Send + Sync {
    fn value(&self, t: f64, q: &DVector<f64>) -> DVector<f64>;
    /// `(i, j) = ∂αᵢ/∂qⱼ`.
    fn jacobian(&self, t: f64, q: &DVector<f64>) -> DMatrix<f64>;
    /// `Σᵢ vᵢ ∂²αᵢ/∂q∂q`.
    fn contracted_hessian(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64>;
}

pub trait Potential: Send + Sync {
    fn value(&self, t: f64, q: &DVector<f64>) -> f64;
    fn gradient(&self, t: f64, q: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, t: f64, q: &DVector<f64>) -> DMatrix<f64>;
}

#[derive(Debug, Clone)]
pub struct ConstantKinetic(pub DMatrix<f64>);

impl KineticTensor for ConstantKinetic {
    fn matrix(&self, _t: f64, _q: &DVector<f64>) -> DMatrix<f64> {
        self.0.clone()
    }
    fn d_q(&self, _t: f64, q: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let n = q.len();
        vec![DMatrix::zeros(n, n); n]
    }
    fn d_qq(&self, _t: f64, q: &DVector<f64>) -> Vec<Vec<DMatrix<f64>>> {
        let n = q.len();
        vec![vec![DMatrix::zeros(n, n); n]; n]
    }
    fn is_constant(&self) -> bool {
        true
    }
}

/// `α(q) = B q + b`.
#[derive(Debug, Clone)]
pub struct LinearMagnetic {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl MagneticPotential for LinearMagnetic {
    fn value(&self, _t: f64, q: &DVector<f64>) -> DVector<f64> {
        &self.matrix * q + &self.offset
    }
    fn jacobian(&self, _t: f64, _q: &DVector<f64>) -> DMatrix<f64> {
        self.matrix.clone()
    }
    fn contracted_hessian(&self, _t: f64, q: &DVector<f64>, _v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(q.len(), q.len())
    }
}

/// `V(q) = Σₖ aₖ cos(2π qₖ)`.
#[derive(Debug, Clone)]
pub struct CosinePotential {
    pub amplitudes: Vec<f64>,
}

impl Potential for CosinePotential {
    fn value(&self, _t: f64, q: &DVector<f64>) -> f64 {
        self.amplitudes
            .iter()
            .zip(q.iter())
            .map(|(a, x)| a * (2.0 * PI * x).cos())
            .sum()
    }
    fn gradient(&self, _t: f64, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(q.len(), |k, _| -2.0 * PI * self.amplitudes[k] * (2.0 * PI * q[k]).sin())
    }
    fn hessian(&self, _t: f64, q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(q.len(), q.len(), |k, l| {
            if k == l {
                -4.0 * PI * PI * self.amplitudes[k] * (2.0 * PI * q[k]).cos()
            } else {
                0.0
            }
        })
    }
}

/// `V(q) = Σₖ (½ a qₖ² + ¼ b qₖ⁴)`.
#[derive(Debug, Clone, Copy)]
pub struct PolynomialPotential {
    pub quadratic: f64,
    pub quartic: f64,
}

impl Potential for PolynomialPotential {
    fn value(&self, _t: f64, q: &DVector<f64>) -> f64 {
        q.iter()
            .map(|x| 0.5 * self.quadratic * x * x + 0.25 * self.quartic * x.powi(4))
            .sum()
    }
    fn gradient(&self, _t: f64, q: &DVector<f64>) -> DVector<f64> {
        q.map(|x| self.quadratic * x + self.quartic * x.powi(3))
    }
    fn hessian(&self, _t: f64, q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&q.map(|x| self.quadratic + 3.0 * self.quartic * x * x))
    }
}

#[derive(Clone)]
pub struct ElectromagneticData {
    pub kinetic: Arc<dyn KineticTensor>,
    pub magnetic: Option<Arc<dyn MagneticPotential>>,
    pub potential: Option<Arc<dyn Potential>>,
}

struct ElectromagneticLagrangian {
    dim: usize,
    data: ElectromagneticData,
}

impl ElectromagneticLagrangian {
    fn magnetic(&self, t: f64, q: &DVector<f64>) -> DVector<f64> {
        match &self.data.magnetic {
            Some(a) => a.value(t, q),
            None => DVector::zeros(self.dim),
        }
    }
}

impl Lagrangian for ElectromagneticLagrangian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let a = self.data.kinetic.matrix(t, q);
        let mut l = 0.5 * v.dot(&(a * v)) + self.magnetic(t, q).dot(v);
        if let Some(pot) = &self.data.potential {
            l -= pot.value(t, q);
        }
        l
    }

    fn d_q(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        if !self.data.kinetic.is_constant() {
            for (k, da) in self.data.kinetic.d_q(t, q).iter().enumerate() {
                out[k] += 0.5 * v.dot(&(da * v));
            }
        }
        if let Some(m) = &self.data.magnetic {
            out += m.jacobian(t, q).tr_mul(v);
        }
        if let Some(pot) = &self.data.potential {
            out -= pot.gradient(t, q);
        }
        out
    }

    fn d_v(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.data.kinetic.matrix(t, q) * v + self.magnetic(t, q)
    }

    fn d_vv(&self, t: f64, q: &DVector<f64>, _v: &DVector<f64>) -> DMatrix<f64> {
        self.data.kinetic.matrix(t, q)
    }

    fn d_vq(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        let mut out = match &self.data.magnetic {
            Some(m) => m.jacobian(t, q),
            None => DMatrix::zeros(self.dim, self.dim),
        };
        if !self.data.kinetic.is_constant() {
            for (k, da) in self.data.kinetic.d_q(t, q).iter().enumerate() {
                let col = da * v;
                for i in 0..self.dim {
                    out[(i, k)] += col[i];
                }
            }
        }
        out
    }

    fn d_qq(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim;
        let mut out = DMatrix::zeros(n, n);
        if !self.data.kinetic.is_constant() {
            let second = self.data.kinetic.d_qq(t, q);
            for k in 0..n {
                for l in 0..n {
                    out[(k, l)] += 0.5 * v.dot(&(&second[k][l] * v));
                }
            }
        }
        if let Some(m) = &self.data.magnetic {
            out += m.contracted_hessian(t, q, v);
        }
        if let Some(pot) = &self.data.potential {
            out -= pot.hessian(t, q);
        }
        out
    }
}

const PROBE_POINTS: [f64; 4] = [0.0, 0.37, -0.81, 1.6];

/// Builds the electromagnetic model. The kinetic tensor is checked for
/// symmetry and positivity at a few probe points.
pub fn assemble_electromagnetic(dim: usize, data: ElectromagneticData) -> Result<LagrangianModel> {
    for (i, &s) in PROBE_POINTS.iter().enumerate() {
        let q = DVector::from_fn(dim, |k, _| s + 0.17 * k as f64);
        let t = i as f64 / 3.0;
        let a = data.kinetic.matrix(t, &q);
        if a.nrows() != dim || a.ncols() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: a.nrows(),
            });
        }
        if (&a - a.transpose()).amax() > 1e-12 * a.amax().max(1.0) {
            return Err(Error::InvalidLagrangian("kinetic matrix is not symmetric".into()));
        }
        if linalg::symmetric_extremes(&a).0 <= 0.0 {
            return Err(Error::InvalidLagrangian(
                "kinetic matrix is not positive definite".into(),
            ));
        }
    }
    Ok(LagrangianModel {
        inner: Arc::new(ElectromagneticLagrangian { dim, data }),
        family: Family::Electromagnetic,
        constants: GrowthConstants::default(),
        reduced_accuracy: false,
        constant_fiber_hessian: true,
    })
}

/// `L = ½ v² − Σ aₖ cos(2π qₖ)` on `Tⁿ`.
pub fn pendulum(dim: usize, amplitude: f64) -> LagrangianModel {
    assemble_electromagnetic(
        dim,
        ElectromagneticData {
            kinetic: Arc::new(ConstantKinetic(DMatrix::identity(dim, dim))),
            magnetic: None,
            potential: Some(Arc::new(CosinePotential {
                amplitudes: vec![amplitude; dim],
            })),
        },
    )
    .expect("identity kinetic tensor is valid")
}

/// `L = ½ v² − ½ ω² q² + ¼ b q⁴` on `ℝ¹`; `b = 0` gives the inverted
/// oscillator.
pub fn duffing(omega: f64, quartic: f64) -> LagrangianModel {
    assemble_electromagnetic(
        1,
        ElectromagneticData {
            kinetic: Arc::new(ConstantKinetic(DMatrix::identity(1, 1))),
            magnetic: None,
            potential: Some(Arc::new(PolynomialPotential {
                quadratic: omega * omega,
                quartic: -quartic,
            })),
        },
    )
    .expect("identity kinetic tensor is valid")
}

/// `L = ½ |v|²` on `ℝⁿ` or `Tⁿ`.
pub fn free_particle(dim: usize) -> LagrangianModel {
    assemble_electromagnetic(
        dim,
        ElectromagneticData {
            kinetic: Arc::new(ConstantKinetic(DMatrix::identity(dim, dim))),
            magnetic: None,
            potential: None,
        },
    )
    .expect("identity kinetic tensor is valid")
}

/// `L = ½ a |v|² + ¼ b |v|⁴`, violating the bounded fiber Hessian condition.
#[derive(Debug, Clone, Copy)]
pub struct QuarticVelocity {
    pub dim: usize,
    pub quadratic: f64,
    pub quartic: f64,
}

impl QuarticVelocity {
    pub fn model(self) -> LagrangianModel {
        LagrangianModel {
            inner: Arc::new(self),
            family: Family::PolynomialVelocity,
            constants: GrowthConstants::default(),
            reduced_accuracy: false,
            constant_fiber_hessian: self.quartic == 0.0,
        }
    }
}

impl Lagrangian for QuarticVelocity {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _t: f64, _q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let s = v.norm_squared();
        0.5 * self.quadratic * s + 0.25 * self.quartic * s * s
    }
    fn d_q(&self, _t: f64, _q: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.dim)
    }
    fn d_v(&self, _t: f64, _q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        v * (self.quadratic + self.quartic * v.norm_squared())
    }
    fn d_vv(&self, _t: f64, _q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        let s = v.norm_squared();
        DMatrix::identity(self.dim, self.dim) * (self.quadratic + self.quartic * s)
            + v * v.transpose() * (2.0 * self.quartic)
    }
    fn d_vq(&self, _t: f64, _q: &DVector<f64>, _v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.dim, self.dim)
    }
    fn d_qq(&self, _t: f64, _q: &DVector<f64>, _v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.dim, self.dim)
    }
}

// ---------------------------------------------------------------------------
// Finite-difference fallback

struct FiniteDifferenceLagrangian<F> {
    dim: usize,
    f: F,
}

const FD_STEP: f64 = 1e-5;

impl<F> FiniteDifferenceLagrangian<F>
where
    F: Fn(f64, &DVector<f64>, &DVector<f64>) -> f64,
{
    /// Joint coordinates `z = (q, v)`.
    fn eval_z(&self, t: f64, z: &DVector<f64>) -> f64 {
        let n = self.dim;
        let q = z.rows(0, n).into_owned();
        let v = z.rows(n, n).into_owned();
        (self.f)(t, &q, &v)
    }

    fn joint(q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let n = q.len();
        DVector::from_fn(2 * n, |i, _| if i < n { q[i] } else { v[i - n] })
    }

    fn grad_z(&self, t: f64, z: &DVector<f64>, i: usize) -> f64 {
        let h = FD_STEP * (1.0 + z[i].abs());
        let mut p = z.clone();
        let mut m = z.clone();
        p[i] += h;
        m[i] -= h;
        (self.eval_z(t, &p) - self.eval_z(t, &m)) / (2.0 * h)
    }

    fn hess_z(&self, t: f64, z: &DVector<f64>, i: usize, j: usize) -> f64 {
        let hi = 1e-4 * (1.0 + z[i].abs());
        let hj = 1e-4 * (1.0 + z[j].abs());
        let e = |si: f64, sj: f64| {
            let mut w = z.clone();
            w[i] += si * hi;
            w[j] += sj * hj;
            self.eval_z(t, &w)
        };
        (e(1.0, 1.0) - e(1.0, -1.0) - e(-1.0, 1.0) + e(-1.0, -1.0)) / (4.0 * hi * hj)
    }
}

impl<F> Lagrangian for FiniteDifferenceLagrangian<F>
where
    F: Fn(f64, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (self.f)(t, q, v)
    }
    fn d_q(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let z = Self::joint(q, v);
        DVector::from_fn(self.dim, |i, _| self.grad_z(t, &z, i))
    }
    fn d_v(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let z = Self::joint(q, v);
        DVector::from_fn(self.dim, |i, _| self.grad_z(t, &z, self.dim + i))
    }
    fn d_vv(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        let z = Self::joint(q, v);
        let n = self.dim;
        let mut m = DMatrix::from_fn(n, n, |i, j| self.hess_z(t, &z, n + i, n + j));
        linalg::symmetrize(&mut m);
        m
    }
    fn d_vq(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        let z = Self::joint(q, v);
        let n = self.dim;
        DMatrix::from_fn(n, n, |i, j| self.hess_z(t, &z, n + i, j))
    }
    fn d_qq(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        let z = Self::joint(q, v);
        let n = self.dim;
        let mut m = DMatrix::from_fn(n, n, |i, j| self.hess_z(t, &z, i, j));
        linalg::symmetrize(&mut m);
        m
    }
}

// ---------------------------------------------------------------------------
// Legendre inversion

#[derive(Debug, Clone, Copy)]
pub struct LegendreOptions {
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for LegendreOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iterations: 100,
        }
    }
}

/// Solves `∂L/∂v(t, q, v) = p` for `v` by damped Newton on the fiber.
pub fn legendre_velocity(
    model: &LagrangianModel,
    t: f64,
    q: &DVector<f64>,
    p: &DVector<f64>,
    opts: LegendreOptions,
) -> Result<DVector<f64>> {
    let n = model.dim();
    let zero = DVector::zeros(n);
    // Start at v = d_vv(t, q, 0)⁻¹ p.
    let mut v = model.d_vv(t, q, &zero).lu().solve(p).unwrap_or_else(|| p.clone());
    let mut residual = model.d_v(t, q, &v) - p;
    let mut res_norm = residual.norm();
    for _ in 0..opts.max_iterations {
        if res_norm <= opts.tol * (1.0 + p.norm()) {
            return Ok(v);
        }
        let Some(step) = model.d_vv(t, q, &v).lu().solve(&residual) else {
            break;
        };
        let mut alpha = 1.0;
        loop {
            let trial = &v - &step * alpha;
            let r = model.d_v(t, q, &trial) - p;
            let rn = r.norm();
            if rn < res_norm || alpha < 1e-12 {
                v = trial;
                residual = r;
                res_norm = rn;
                break;
            }
            alpha *= 0.5;
        }
    }
    if res_norm <= opts.tol * (1.0 + p.norm()) {
        return Ok(v);
    }
    Err(Error::LegendreStalled {
        iterations: opts.max_iterations,
        residual: res_norm,
    })
}

// ---------------------------------------------------------------------------
// Growth-condition sampling

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub q_min: Vec<f64>,
    pub q_max: Vec<f64>,
    pub v_max: f64,
}

impl SampleBox {
    pub fn symmetric(dim: usize, q_radius: f64, v_max: f64) -> Self {
        Self {
            q_min: vec![-q_radius; dim],
            q_max: vec![q_radius; dim],
            v_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    /// Smallest sampled `rhs − lhs`; negative means violated.
    pub worst_margin: f64,
    pub worst_at: SamplePoint,
    pub declared: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub t: f64,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub samples: usize,
    pub checks: Vec<ConditionCheck>,
    /// Tightest constants consistent with the samples.
    pub estimated: GrowthConstants,
    pub reduced_accuracy: bool,
    pub all_passed: bool,
}

struct Sample {
    t: f64,
    q: DVector<f64>,
    v: DVector<f64>,
}

fn growth_samples(dim: usize, region: &SampleBox, n_samples: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_samples + 4 * dim + 4);
    let lo = DVector::from_column_slice(&region.q_min);
    let hi = DVector::from_column_slice(&region.q_max);
    let centre = (&lo + &hi) * 0.5;
    // Structured points: box corners and extreme velocities along each axis.
    for q in [lo.clone(), hi.clone(), centre] {
        out.push(Sample {
            t: 0.0,
            q: q.clone(),
            v: DVector::zeros(dim),
        });
        for j in 0..dim {
            for sign in [-1.0, 1.0] {
                let mut v = DVector::zeros(dim);
                v[j] = sign * region.v_max;
                out.push(Sample {
                    t: 0.5,
                    q: q.clone(),
                    v,
                });
            }
        }
    }
    for _ in 0..n_samples {
        let q = DVector::from_fn(dim, |j, _| rng.random_range(lo[j]..=hi[j]));
        let v = DVector::from_fn(dim, |_, _| rng.random_range(-region.v_max..=region.v_max));
        out.push(Sample {
            t: rng.random_range(0.0..=1.0),
            q,
            v,
        });
    }
    out
}

/// Samples (L1'), (L2') and the coercivity bound `L ≥ ℓ₀ g(v,v) − c` over
/// the box and reports the worst margins. Never claims a proof.
pub fn check_growth_conditions(
    model: &LagrangianModel,
    manifold: &ChartedManifold,
    region: &SampleBox,
    n_samples: usize,
    seed: u64,
) -> Result<GrowthReport> {
    let dim = model.dim();
    if region.q_min.len() != dim || region.q_max.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: region.q_min.len(),
        });
    }
    let samples = growth_samples(dim, region, n_samples, seed);

    struct Row {
        vv: f64,
        vq: f64,
        qq: f64,
        lmin: f64,
        value: f64,
        speed: f64,
        g_speed2: f64,
        dv: f64,
        dq: f64,
    }
    let mut g_max = 0.0_f64;
    let rows: Vec<Row> = samples
        .iter()
        .map(|s| {
            let d_vv = model.d_vv(s.t, &s.q, &s.v);
            let (lmin, _) = linalg::symmetric_extremes(&d_vv);
            let g = manifold.metric_at(&s.q);
            g_max = g_max.max(linalg::symmetric_extremes(&g).1);
            Row {
                vv: linalg::spectral_norm(&d_vv),
                vq: linalg::spectral_norm(&model.d_vq(s.t, &s.q, &s.v)),
                qq: linalg::spectral_norm(&model.d_qq(s.t, &s.q, &s.v)),
                lmin,
                value: model.value(s.t, &s.q, &s.v),
                speed: s.v.norm(),
                g_speed2: linalg::quad_form(&g, &s.v),
                dv: model.d_v(s.t, &s.q, &s.v).norm(),
                dq: model.d_q(s.t, &s.q, &s.v).norm(),
            }
        })
        .collect();

    let ell1_est = rows
        .iter()
        .map(|r| r.vv.max(r.vq / (1.0 + r.speed)).max(r.qq / (1.0 + r.speed * r.speed)))
        .fold(0.0, f64::max);
    let ell2_est = rows.iter().map(|r| r.lmin).fold(f64::INFINITY, f64::min);
    let ell0_est = if ell2_est > 0.0 && g_max > 0.0 {
        0.5 * ell2_est / g_max
    } else {
        0.0
    };
    let c_est = rows
        .iter()
        .map(|r| ell0_est * r.g_speed2 - r.value)
        .fold(f64::NEG_INFINITY, f64::max);
    let ell3_est = rows
        .iter()
        .map(|r| (r.dv / (1.0 + r.speed)).max(r.dq / (1.0 + r.speed * r.speed)))
        .fold(0.0, f64::max);
    let ell4_est = rows
        .iter()
        .map(|r| r.value / (1.0 + r.speed * r.speed))
        .fold(f64::NEG_INFINITY, f64::max);
    let estimated = GrowthConstants {
        ell0: Some(ell0_est),
        c: Some(c_est),
        ell1: Some(ell1_est),
        ell2: Some(ell2_est),
        ell3: Some(ell3_est),
        ell4: Some(ell4_est),
    };

    let declared = model.constants();
    let ell1 = declared.ell1.unwrap_or(ell1_est);
    let ell2 = declared.ell2.unwrap_or(ell2_est);
    let ell0 = declared.ell0.unwrap_or(ell0_est);
    let c = declared.c.unwrap_or(c_est);

    let mut checks = Vec::new();
    let mut push = |name: &str, declared: bool, margin: &dyn Fn(&Row) -> f64, extra_ok: bool| {
        let (idx, worst) = rows
            .iter()
            .enumerate()
            .map(|(i, r)| (i, margin(r)))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        let s = &samples[idx];
        checks.push(ConditionCheck {
            name: name.to_string(),
            worst_margin: worst,
            worst_at: SamplePoint {
                t: s.t,
                q: s.q.iter().copied().collect(),
                v: s.v.iter().copied().collect(),
            },
            declared,
            passed: extra_ok && worst >= -1e-12 * (1.0 + worst.abs()),
        });
    };
    let l1_declared = declared.ell1.is_some();
    push("L1' |d_vv| <= l1", l1_declared, &|r| ell1 - r.vv, true);
    push(
        "L1' |d_vq| <= l1 (1 + |v|)",
        l1_declared,
        &|r| ell1 * (1.0 + r.speed) - r.vq,
        true,
    );
    push(
        "L1' |d_qq| <= l1 (1 + |v|^2)",
        l1_declared,
        &|r| ell1 * (1.0 + r.speed * r.speed) - r.qq,
        true,
    );
    push(
        "L2' d_vv >= l2 I",
        declared.ell2.is_some(),
        &|r| r.lmin - ell2,
        ell2 > 0.0,
    );
    push(
        "L >= l0 g(v,v) - c",
        declared.ell0.is_some() || declared.c.is_some(),
        &|r| r.value - (ell0 * r.g_speed2 - c),
        ell0 > 0.0,
    );
    let all_passed = checks.iter().all(|c| c.passed);
    Ok(GrowthReport {
        samples: samples.len(),
        checks,
        estimated,
        reduced_accuracy: model.is_reduced_accuracy(),
        all_passed,
    })
}
