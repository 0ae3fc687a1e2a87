//! JSON problem files.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::critical::{NewtonOptions, SeedStrategy};
use crate::error::{Error, Result};
use crate::lagrangian::{
    self, ConstantKinetic, CosinePotential, ElectromagneticData, GrowthConstants, LagrangianModel, LinearMagnetic,
    PolynomialPotential, QuarticVelocity, SampleBox,
};
use crate::manifold::{BoundaryCondition, ChartedManifold};
use crate::morse_complex::{ConnectionOptions, Reference};
use crate::pathspace::PathSpace;
use crate::pseudograd::{FieldOptions, FlowOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldSpec {
    /// One flag per coordinate; periodic coordinates have period 1.
    pub periodic: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundarySpec {
    Dirichlet {
        start: Vec<f64>,
        end: Vec<f64>,
    },
    Periodic,
    Free,
    Subspace {
        basis: Vec<Vec<f64>>,
        anchor_start: Vec<f64>,
        anchor_end: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// `V = Σ a_j cos(2π q_j)`.
    Cosine(Vec<f64>),
    /// `V = Σ ½ a q_j² + ¼ b q_j⁴`.
    Polynomial { quadratic: f64, quartic: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagneticSpec {
    pub matrix: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum LagrangianSpec {
    /// `½|v|² − Σ a cos(2π q_j)`.
    Pendulum {
        amplitude: f64,
    },
    /// `½v² − ½ω²q² + ¼ b q⁴`.
    Duffing {
        omega: f64,
        quartic: f64,
    },
    FreeParticle,
    /// `½ vᵀ K v + ⟨A(q), v⟩ − V(q)`.
    Electromagnetic {
        kinetic: Vec<Vec<f64>>,
        #[serde(default)]
        magnetic: Option<MagneticSpec>,
        #[serde(default)]
        potential: Option<PotentialSpec>,
    },
    /// `½ a |v|² + ¼ b |v|⁴`.
    QuarticVelocity {
        quadratic: f64,
        quartic: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Discretization {
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    pub q_radius: f64,
    pub v_max: f64,
    pub samples: usize,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            q_radius: 5.0,
            v_max: 10.0,
            samples: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub newton: NewtonOptions,
    pub field: FieldOptions,
    pub flow: FlowOptions,
    pub connections: ConnectionTolerances,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConnectionTolerances {
    pub terminal_tol: f64,
    pub ambiguity_tol: f64,
    pub perturbation: f64,
    pub retries: usize,
    pub circle_points: usize,
}

impl Default for ConnectionTolerances {
    fn default() -> Self {
        let d = ConnectionOptions::default();
        Self {
            terminal_tol: d.terminal_tol,
            ambiguity_tol: d.ambiguity_tol,
            perturbation: d.perturbation,
            retries: d.retries,
            circle_points: d.circle_points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub name: String,
    pub manifold: ManifoldSpec,
    pub boundary: BoundarySpec,
    pub lagrangian: LagrangianSpec,
    /// Declared constants checked by `verify`.
    #[serde(default)]
    pub constants: GrowthConstants,
    pub discretization: Discretization,
    #[serde(default)]
    pub solver: SolverSpec,
    pub seeds: SeedStrategy,
    pub sublevel: f64,
    /// Expected homology, e.g. `"circle_component"`.
    #[serde(default)]
    pub reference: Option<String>,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub output: Option<String>,
}

pub const MIN_CELLS: usize = 8;

fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(Error::Problem(format!("{what}: ragged or empty matrix")));
    }
    Ok(DMatrix::from_fn(n, rows[0].len(), |i, j| rows[i][j]))
}

impl ProblemSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn dim(&self) -> usize {
        self.manifold.periodic.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Problem(m));
        if self.dim() == 0 {
            return bad("manifold.periodic must list at least one coordinate".into());
        }
        if self.discretization.cells < MIN_CELLS {
            return bad(format!(
                "discretization.cells must be at least {MIN_CELLS}, got {}",
                self.discretization.cells
            ));
        }
        if !self.sublevel.is_finite() {
            return bad("sublevel must be finite".into());
        }
        let s = &self.solver;
        let positive = [
            ("solver.newton.tol", s.newton.tol),
            ("solver.newton.box_bound", s.newton.box_bound),
            ("solver.newton.min_damping", s.newton.min_damping),
            ("solver.field.r0", s.field.r0),
            ("solver.field.radius_floor", s.field.radius_floor),
            ("solver.field.cap_bound", s.field.cap_bound),
            ("solver.flow.t_max", s.flow.t_max),
            ("solver.flow.stop_tol", s.flow.stop_tol),
            ("solver.flow.rtol", s.flow.rtol),
            ("solver.flow.atol", s.flow.atol),
            ("solver.flow.initial_step", s.flow.initial_step),
            ("solver.flow.min_step", s.flow.min_step),
            ("solver.flow.action_slack", s.flow.action_slack),
            ("solver.connections.terminal_tol", s.connections.terminal_tol),
            ("solver.connections.ambiguity_tol", s.connections.ambiguity_tol),
            ("solver.connections.perturbation", s.connections.perturbation),
            ("verify.q_radius", self.verify.q_radius),
            ("verify.v_max", self.verify.v_max),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if s.newton.max_iterations == 0 || s.field.samples == 0 || self.verify.samples == 0 {
            return bad("iteration and sample counts must be positive".into());
        }
        if let Some(r) = &self.reference {
            if Reference::parse(r).is_none() {
                return bad(format!("unknown reference {r:?}"));
            }
        }
        Ok(())
    }

    pub fn manifold(&self) -> ChartedManifold {
        let p = &self.manifold.periodic;
        if p.iter().all(|&x| x) {
            ChartedManifold::torus(p.len())
        } else if p.iter().all(|&x| !x) {
            ChartedManifold::euclidean(p.len())
        } else {
            ChartedManifold::new(
                p.clone(),
                crate::manifold::Metric::Constant(DMatrix::identity(p.len(), p.len())),
            )
            .expect("identity metric is valid")
        }
    }

    pub fn boundary(&self) -> Result<BoundaryCondition> {
        let bc = match &self.boundary {
            BoundarySpec::Dirichlet { start, end } => BoundaryCondition::dirichlet(start, end),
            BoundarySpec::Periodic => BoundaryCondition::Periodic,
            BoundarySpec::Free => BoundaryCondition::Free,
            BoundarySpec::Subspace {
                basis,
                anchor_start,
                anchor_end,
            } => BoundaryCondition::Subspace {
                basis: basis.iter().map(|w| vector(w)).collect(),
                anchor: (vector(anchor_start), vector(anchor_end)),
            },
        };
        bc.validate(&self.manifold())?;
        Ok(bc)
    }

    pub fn lagrangian(&self) -> Result<LagrangianModel> {
        let n = self.dim();
        let model = match &self.lagrangian {
            LagrangianSpec::Pendulum { amplitude } => lagrangian::pendulum(n, *amplitude),
            LagrangianSpec::Duffing { omega, quartic } => {
                if n != 1 {
                    return Err(Error::Problem("duffing is one-dimensional".into()));
                }
                lagrangian::duffing(*omega, *quartic)
            }
            LagrangianSpec::FreeParticle => lagrangian::free_particle(n),
            LagrangianSpec::Electromagnetic {
                kinetic,
                magnetic,
                potential,
            } => {
                let k = matrix(kinetic, "lagrangian.kinetic")?;
                if k.nrows() != n || k.ncols() != n {
                    return Err(Error::Dimension {
                        expected: n,
                        got: k.nrows(),
                    });
                }
                let magnetic = match magnetic {
                    None => None,
                    Some(m) => {
                        let a = matrix(&m.matrix, "lagrangian.magnetic.matrix")?;
                        if a.nrows() != n || a.ncols() != n || m.offset.len() != n {
                            return Err(Error::Dimension {
                                expected: n,
                                got: a.nrows(),
                            });
                        }
                        Some(Arc::new(LinearMagnetic {
                            matrix: a,
                            offset: vector(&m.offset),
                        }) as Arc<dyn lagrangian::MagneticPotential>)
                    }
                };
                let potential = match potential {
                    None => None,
                    Some(PotentialSpec::Cosine(a)) => {
                        if a.len() != n {
                            return Err(Error::Dimension {
                                expected: n,
                                got: a.len(),
                            });
                        }
                        Some(Arc::new(CosinePotential { amplitudes: a.clone() }) as Arc<dyn lagrangian::Potential>)
                    }
                    Some(PotentialSpec::Polynomial { quadratic, quartic }) => Some(Arc::new(PolynomialPotential {
                        quadratic: *quadratic,
                        quartic: *quartic,
                    })
                        as Arc<dyn lagrangian::Potential>),
                };
                lagrangian::assemble_electromagnetic(
                    n,
                    ElectromagneticData {
                        kinetic: Arc::new(ConstantKinetic(k)),
                        magnetic,
                        potential,
                    },
                )?
            }
            LagrangianSpec::QuarticVelocity { quadratic, quartic } => {
                if *quadratic <= 0.0 || *quartic < 0.0 {
                    return Err(Error::InvalidLagrangian(
                        "quartic_velocity needs quadratic > 0 and quartic ≥ 0".into(),
                    ));
                }
                QuarticVelocity {
                    dim: n,
                    quadratic: *quadratic,
                    quartic: *quartic,
                }
                .model()
            }
        };
        Ok(model.with_constants(self.constants.clone()))
    }

    pub fn space(&self, cells: Option<usize>) -> Result<PathSpace> {
        let cells = cells.unwrap_or(self.discretization.cells);
        if cells < MIN_CELLS {
            return Err(Error::Problem(format!(
                "mesh must be at least {MIN_CELLS} cells, got {cells}"
            )));
        }
        PathSpace::new(self.manifold(), self.lagrangian()?, self.boundary()?, cells)
    }

    pub fn sample_box(&self) -> SampleBox {
        SampleBox::symmetric(self.dim(), self.verify.q_radius, self.verify.v_max)
    }

    pub fn reference(&self) -> Option<Reference> {
        self.reference.as_deref().and_then(Reference::parse)
    }

    pub fn connection_options(&self, seed: u64) -> ConnectionOptions {
        let c = &self.solver.connections;
        ConnectionOptions {
            flow: self.solver.flow,
            terminal_tol: c.terminal_tol,
            ambiguity_tol: c.ambiguity_tol,
            perturbation_seed: seed,
            perturbation: c.perturbation,
            retries: c.retries,
            circle_points: c.circle_points,
        }
    }

    pub fn field_options(&self, seed: u64) -> FieldOptions {
        FieldOptions {
            rng_seed: seed,
            ..self.solver.field
        }
    }
}
