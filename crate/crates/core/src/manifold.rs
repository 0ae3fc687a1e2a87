//! Configuration manifolds in a single global chart and the linearized
//! boundary conditions on the endpoint pair.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub type MetricFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
pub enum Metric {
    Constant(DMatrix<f64>),
    Variable(MetricFn),
}

impl fmt::Debug for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Constant(g) => f.debug_tuple("Constant").field(g).finish(),
            Metric::Variable(_) => f.write_str("Variable(..)"),
        }
    }
}

/// `ℝᵏ × Tᵐ` in one chart. Periodic coordinates have period 1.
#[derive(Clone, Debug)]
pub struct ChartedManifold {
    dim: usize,
    periodic: Vec<bool>,
    metric: Metric,
}

const METRIC_SAMPLES: [f64; 5] = [0.0, 0.13, 0.5, 0.77, -1.4];

impl ChartedManifold {
    pub fn euclidean(dim: usize) -> Self {
        Self {
            dim,
            periodic: vec![false; dim],
            metric: Metric::Constant(DMatrix::identity(dim, dim)),
        }
    }

    pub fn torus(dim: usize) -> Self {
        Self {
            dim,
            periodic: vec![true; dim],
            metric: Metric::Constant(DMatrix::identity(dim, dim)),
        }
    }

    /// Validates the metric on a fixed set of sample points: symmetric
    /// positive definite, and invariant under unit translation of each
    /// periodic coordinate.
    pub fn new(periodic: Vec<bool>, metric: Metric) -> Result<Self> {
        let dim = periodic.len();
        if dim == 0 {
            return Err(Error::Problem("manifold dimension must be positive".into()));
        }
        let m = Self { dim, periodic, metric };
        for &s in &METRIC_SAMPLES {
            let q = DVector::from_fn(dim, |i, _| s + 0.31 * i as f64);
            let g = m.metric_at(&q);
            if g.nrows() != dim || g.ncols() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: g.nrows(),
                });
            }
            if (&g - g.transpose()).amax() > 1e-12 * g.amax().max(1.0) {
                return Err(Error::Problem("metric is not symmetric".into()));
            }
            if linalg::symmetric_extremes(&g).0 <= 0.0 {
                return Err(Error::Problem("metric is not positive definite".into()));
            }
            for j in (0..dim).filter(|&j| m.periodic[j]) {
                let mut shifted = q.clone();
                shifted[j] += 1.0;
                if (m.metric_at(&shifted) - &g).amax() > 1e-12 {
                    return Err(Error::Problem(format!("metric is not periodic in coordinate {j}")));
                }
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    pub fn is_periodic(&self, coord: usize) -> bool {
        self.periodic[coord]
    }

    pub fn is_compact(&self) -> bool {
        self.periodic.iter().all(|&p| p)
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn metric_at(&self, q: &DVector<f64>) -> DMatrix<f64> {
        match &self.metric {
            Metric::Constant(g) => g.clone(),
            Metric::Variable(f) => f(q),
        }
    }

    /// Flat-chart products need a constant metric.
    pub fn constant_metric(&self) -> Result<&DMatrix<f64>> {
        match &self.metric {
            Metric::Constant(g) => Ok(g),
            Metric::Variable(_) => Err(Error::Unsupported(
                "H1 products are implemented for constant metrics only".into(),
            )),
        }
    }

    /// Maps periodic coordinates into `[0, 1)`.
    pub fn reduce_point(&self, q: &DVector<f64>) -> DVector<f64> {
        let mut out = q.clone();
        for (j, x) in out.iter_mut().enumerate() {
            if self.periodic[j] {
                *x = reduce_unit(*x);
            }
        }
        out
    }

    /// Whether the Palais–Smale hypothesis on the boundary condition holds:
    /// at least one endpoint projection of `Q` is bounded.
    pub fn check_ps_admissible(&self, bc: &BoundaryCondition) -> PsAdmissibility {
        let compact = self.is_compact();
        let (start_bounded, end_bounded) = match bc {
            BoundaryCondition::Dirichlet { .. } => (true, true),
            BoundaryCondition::Periodic | BoundaryCondition::Free => (compact, compact),
            BoundaryCondition::Subspace { basis, .. } => {
                let n = self.dim;
                let free_in = |offset: usize| {
                    basis
                        .iter()
                        .any(|w| (0..n).any(|j| !self.periodic[j] && w[offset + j].abs() > 1e-12))
                };
                (!free_in(0), !free_in(n))
            }
        };
        let admissible = start_bounded || end_bounded;
        let reason = if compact {
            "compact manifold: both projections bounded".to_string()
        } else if admissible {
            format!("bounded projections: start={start_bounded}, end={end_bounded}")
        } else {
            "both endpoint projections are unbounded".to_string()
        };
        PsAdmissibility {
            admissible,
            start_bounded,
            end_bounded,
            compact,
            reason,
        }
    }
}

pub(crate) fn reduce_unit(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsAdmissibility {
    pub admissible: bool,
    pub start_bounded: bool,
    pub end_bounded: bool,
    pub compact: bool,
    pub reason: String,
}

/// Constraint on `(γ(0), γ(1))`, represented by its tangent space `W` plus
/// the anchor data that fixes the affine translate.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryCondition {
    Dirichlet {
        start: DVector<f64>,
        end: DVector<f64>,
    },
    Periodic,
    Free,
    /// `(γ(0), γ(1)) ∈ anchor + span(basis)`, basis vectors in `ℝ²ⁿ`.
    Subspace {
        basis: Vec<DVector<f64>>,
        anchor: (DVector<f64>, DVector<f64>),
    },
}

impl BoundaryCondition {
    pub fn dirichlet(start: &[f64], end: &[f64]) -> Self {
        BoundaryCondition::Dirichlet {
            start: DVector::from_column_slice(start),
            end: DVector::from_column_slice(end),
        }
    }

    pub fn validate(&self, manifold: &ChartedManifold) -> Result<()> {
        let n = manifold.dim();
        let check = |v: &DVector<f64>, expected: usize| {
            if v.len() != expected {
                Err(Error::Dimension { expected, got: v.len() })
            } else if v.iter().any(|x| !x.is_finite()) {
                Err(Error::InvalidBoundary("non-finite coordinate".into()))
            } else {
                Ok(())
            }
        };
        match self {
            BoundaryCondition::Dirichlet { start, end } => {
                check(start, n)?;
                check(end, n)
            }
            BoundaryCondition::Periodic | BoundaryCondition::Free => Ok(()),
            BoundaryCondition::Subspace { basis, anchor } => {
                check(&anchor.0, n)?;
                check(&anchor.1, n)?;
                for w in basis {
                    check(w, 2 * n)?;
                }
                tangent_constraint_basis(self, n).map(|_| ())
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            BoundaryCondition::Dirichlet { .. } => "dirichlet",
            BoundaryCondition::Periodic => "periodic",
            BoundaryCondition::Free => "free",
            BoundaryCondition::Subspace { .. } => "subspace",
        }
    }
}

/// Orthonormal basis of the space `W ⊂ ℝ²ⁿ` of admissible endpoint
/// variations `(ξ(0), ξ(1))`.
pub fn tangent_constraint_basis(bc: &BoundaryCondition, n: usize) -> Result<Vec<DVector<f64>>> {
    match bc {
        BoundaryCondition::Dirichlet { .. } => Ok(Vec::new()),
        BoundaryCondition::Periodic => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            Ok((0..n)
                .map(|j| {
                    let mut w = DVector::zeros(2 * n);
                    w[j] = s;
                    w[n + j] = s;
                    w
                })
                .collect())
        }
        BoundaryCondition::Free => Ok((0..2 * n)
            .map(|j| {
                let mut w = DVector::zeros(2 * n);
                w[j] = 1.0;
                w
            })
            .collect()),
        BoundaryCondition::Subspace { basis, .. } => orthonormalize(basis),
    }
}

/// Modified Gram–Schmidt with one reorthogonalization pass; rejects
/// rank-deficient input.
fn orthonormalize(vectors: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    let scale = vectors.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for u in &out {
                let c = u.dot(&w);
                w -= u * c;
            }
        }
        let norm = w.norm();
        if norm <= 1e-10 * scale.max(1e-300) {
            return Err(Error::RankDeficient {
                rank: out.len(),
                expected: vectors.len(),
            });
        }
        out.push(w / norm);
    }
    Ok(out)
}

/// Orthogonal projector `B Bᵀ` onto `W`.
pub fn projector(basis: &[DVector<f64>], n: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(2 * n, 2 * n);
    for w in basis {
        p += w * w.transpose();
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn basis_dimensions() {
        let d = tangent_constraint_basis(&BoundaryCondition::dirichlet(&[0.0], &[1.0]), 1).unwrap();
        assert!(d.is_empty());
        let p = tangent_constraint_basis(&BoundaryCondition::Periodic, 2).unwrap();
        assert_eq!(p.len(), 2);
        for w in &p {
            assert_eq!(w[0], w[2]);
            assert_eq!(w[1], w[3]);
        }
        let f = tangent_constraint_basis(&BoundaryCondition::Free, 1).unwrap();
        assert_eq!(f, vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])]);
    }

    #[test]
    fn projector_is_orthogonal() {
        let bc = BoundaryCondition::Subspace {
            basis: vec![v(&[1.0, 2.0, 0.0, 1.0]), v(&[0.0, 1.0, 1.0, 3.0])],
            anchor: (v(&[0.0, 0.0]), v(&[0.0, 0.0])),
        };
        let b = tangent_constraint_basis(&bc, 2).unwrap();
        for (i, a) in b.iter().enumerate() {
            for (j, c) in b.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((a.dot(c) - expect).abs() < 1e-12);
            }
        }
        let p = projector(&b, 2);
        assert!((&p * &p - &p).amax() < 1e-12);
        assert!((&p - p.transpose()).amax() < 1e-12);
    }

    #[test]
    fn rank_deficient_subspace_rejected() {
        let bc = BoundaryCondition::Subspace {
            basis: vec![v(&[1.0, 1.0]), v(&[2.0, 2.0])],
            anchor: (v(&[0.0]), v(&[0.0])),
        };
        let err = tangent_constraint_basis(&bc, 1).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { rank: 1, expected: 2 }));
        assert!(bc.validate(&ChartedManifold::euclidean(1)).is_err());
    }

    #[test]
    fn reduce_point_examples() {
        let t1 = ChartedManifold::torus(1);
        assert_eq!(t1.reduce_point(&v(&[1.25]))[0], 0.25);
        assert_eq!(t1.reduce_point(&v(&[-0.5]))[0], 0.5);
        assert_eq!(t1.reduce_point(&v(&[-1e-18]))[0], 0.0);
        let r2 = ChartedManifold::euclidean(2);
        assert_eq!(r2.reduce_point(&v(&[3.0, -2.0])), v(&[3.0, -2.0]));
    }

    #[test]
    fn ps_admissibility_examples() {
        let r1 = ChartedManifold::euclidean(1);
        let t1 = ChartedManifold::torus(1);
        assert!(!r1.check_ps_admissible(&BoundaryCondition::Free).admissible);
        assert!(t1.check_ps_admissible(&BoundaryCondition::Free).admissible);
        assert!(
            r1.check_ps_admissible(&BoundaryCondition::dirichlet(&[0.0], &[0.0]))
                .admissible
        );
        assert!(!r1.check_ps_admissible(&BoundaryCondition::Periodic).admissible);
        // start pinned, end free
        let half = BoundaryCondition::Subspace {
            basis: vec![v(&[0.0, 1.0])],
            anchor: (v(&[0.0]), v(&[0.0])),
        };
        let rep = r1.check_ps_admissible(&half);
        assert!(rep.admissible && rep.start_bounded && !rep.end_bounded);
    }

    #[test]
    fn metric_validation() {
        let bad = Metric::Constant(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert!(ChartedManifold::new(vec![false, false], bad).is_err());
        let wobbly: MetricFn =
            Arc::new(|q: &DVector<f64>| DMatrix::from_element(1, 1, 2.0 + (2.0 * std::f64::consts::PI * q[0]).sin()));
        let m = ChartedManifold::new(vec![true], Metric::Variable(wobbly)).unwrap();
        assert!(m.constant_metric().is_err());
        let aperiodic: MetricFn = Arc::new(|q: &DVector<f64>| DMatrix::from_element(1, 1, 2.0 + q[0].sin()));
        assert!(ChartedManifold::new(vec![true], Metric::Variable(aperiodic)).is_err());
    }

    proptest::proptest! {
        #[test]
        fn reduce_point_idempotent(x in -1e6f64..1e6, y in -1e3f64..1e3) {
            let m = ChartedManifold::new(
                vec![true, false],
                Metric::Constant(DMatrix::identity(2, 2)),
            ).unwrap();
            let once = m.reduce_point(&v(&[x, y]));
            proptest::prop_assert!(once[0] >= 0.0 && once[0] < 1.0);
            proptest::prop_assert_eq!(m.reduce_point(&once), once.clone());
            proptest::prop_assert_eq!(once[1], y);
        }
    }
}
