//! Pipeline stages: verify → find → index → flow → complex → homology.

use std::fmt;
use std::path::{Path, PathBuf};

use morse_action::critical::{analyze, morse_index, seed_sweep, CriticalPoint};
use morse_action::lagrangian::check_growth_conditions;
use morse_action::morse_complex::{self, compare_reference, MorseComplexData};
use morse_action::pathspace::{hessian_continuity_probe, DiscretePath, PathSpace};
use morse_action::problem::ProblemSpec;
use morse_action::pseudograd::{assemble_field, flow as integrate, unstable_basis, FlowStatus};
use morse_action::Error;

use crate::artifacts::*;

#[derive(Debug)]
pub enum Failure {
    /// Malformed input: exit 2.
    Input(String),
    /// A checked condition failed: exit 1.
    Condition(String),
    /// An earlier stage has not been run: exit 3.
    Missing { stage: &'static str, detail: String },
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Condition(_) => 1,
            Failure::Input(_) => 2,
            Failure::Missing { .. } => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) => write!(f, "invalid input: {m}"),
            Failure::Condition(m) => write!(f, "{m}"),
            Failure::Missing { stage, detail } => {
                write!(
                    f,
                    "missing artifact from stage `{stage}`: {detail}; run `morse-action {stage}` first"
                )
            }
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Problem(_)
            | Error::Json(_)
            | Error::Dimension { .. }
            | Error::InvalidBoundary(_)
            | Error::RankDeficient { .. }
            | Error::Inadmissible(_)
            | Error::InvalidLagrangian(_)
            | Error::Unsupported(_) => Failure::Input(e.to_string()),
            other => Failure::Condition(other.to_string()),
        }
    }
}

fn io(e: std::io::Error) -> Failure {
    Failure::Condition(format!("i/o error: {e}"))
}

pub struct Settings {
    pub spec: ProblemSpec,
    pub mesh: usize,
    pub sublevel: f64,
    pub seed: u64,
    pub out: OutputDir,
    pub force: bool,
}

impl Settings {
    pub fn load(
        problem: &Path,
        mesh: Option<usize>,
        sublevel: Option<f64>,
        seed: Option<u64>,
        out: Option<PathBuf>,
        force: bool,
    ) -> Result<Self, Failure> {
        let text =
            std::fs::read_to_string(problem).map_err(|e| Failure::Input(format!("{}: {e}", problem.display())))?;
        let spec = ProblemSpec::from_json(&text).map_err(|e| Failure::Input(format!("{}: {e}", problem.display())))?;
        let mesh = mesh.unwrap_or(spec.discretization.cells);
        if mesh < morse_action::problem::MIN_CELLS {
            return Err(Failure::Input(format!(
                "--mesh must be at least {}, got {mesh}",
                morse_action::problem::MIN_CELLS
            )));
        }
        let sublevel = sublevel.unwrap_or(spec.sublevel);
        if !sublevel.is_finite() {
            return Err(Failure::Input("--sublevel must be finite".into()));
        }
        let seed = seed.unwrap_or(spec.rng_seed);
        let root = out
            .or_else(|| spec.output.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out").join(&spec.name));
        Ok(Self {
            spec,
            mesh,
            sublevel,
            seed,
            out: OutputDir::new(root),
            force,
        })
    }

    fn space(&self) -> Result<PathSpace, Failure> {
        Ok(self.spec.space(Some(self.mesh))?)
    }
}

pub fn verify(s: &Settings) -> Result<(), Failure> {
    let manifold = s.spec.manifold();
    let model = s.spec.lagrangian()?;
    let bc = s.spec.boundary()?;
    let growth = check_growth_conditions(&model, &manifold, &s.spec.sample_box(), s.spec.verify.samples, s.seed)?;
    let ps = manifold.check_ps_admissible(&bc);
    let mut failures: Vec<String> = growth
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} (worst margin {:e})", c.name, c.worst_margin))
        .collect();
    if !ps.admissible {
        failures.push(format!("boundary admissibility: {}", ps.reason));
    }
    for c in &growth.checks {
        println!("{:<6} {}", if c.passed { "pass" } else { "FAIL" }, c.name);
    }
    println!(
        "{:<6} boundary admissibility ({})",
        if ps.admissible { "pass" } else { "FAIL" },
        ps.reason
    );
    let report = VerifyReport {
        problem: s.spec.name.clone(),
        growth,
        ps_admissibility: ps,
        passed: failures.is_empty(),
        failures: failures.clone(),
    };
    s.out.write_json(VERIFY, &report).map_err(io)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Condition(format!(
            "conditions failed: {}",
            failures.join("; ")
        )))
    }
}

fn require_verified(s: &Settings) -> Result<(), Failure> {
    if s.force {
        return Ok(());
    }
    match s.out.read_json::<VerifyReport>(VERIFY) {
        None => Err(Failure::Missing {
            stage: "verify",
            detail: format!("{} not found (or pass --force)", display(&s.out.path(VERIFY))),
        }),
        Some(Err(e)) => Err(Failure::Missing {
            stage: "verify",
            detail: format!("unreadable report {e}"),
        }),
        Some(Ok(r)) if !r.passed => Err(Failure::Condition(format!(
            "verify reported failed conditions ({}); pass --force to continue anyway",
            r.failures.join("; ")
        ))),
        Some(Ok(_)) => Ok(()),
    }
}

fn path_file(id: usize) -> String {
    format!("paths/cp_{id:03}.csv")
}

pub fn find(s: &Settings) -> Result<(), Failure> {
    require_verified(s)?;
    let space = s.space()?;
    let sweep = seed_sweep(&space, &s.spec.seeds, &s.spec.solver.newton);
    let mut points = Vec::with_capacity(sweep.points.len());
    for cp in &sweep.points {
        let file = path_file(cp.id);
        s.out.write_text(&file, &cp.path.to_csv()).map_err(io)?;
        points.push(CriticalPointRecord {
            id: cp.id,
            action: cp.action,
            morse_index: cp.morse_index,
            nullity: cp.nullity,
            residual: cp.residual,
            spectral_gap: cp.spectral_gap,
            component: cp.component.clone(),
            iterations: cp.iterations,
            path_file: file,
        });
        println!(
            "critical point {}: action {:.10} index {} nullity {}",
            cp.id, cp.action, cp.morse_index, cp.nullity
        );
    }
    println!(
        "{} critical points from {} seeds ({} failed)",
        points.len(),
        sweep.seeds,
        sweep.failures.len()
    );
    let report = CriticalPointsReport {
        problem: s.spec.name.clone(),
        mesh: s.mesh,
        seeds: sweep.seeds,
        points,
        failures: sweep.failures,
    };
    s.out.write_json(CRITICAL_POINTS, &report).map_err(io)?;
    Ok(())
}

fn missing(stage: &'static str, s: &Settings, name: &str) -> Failure {
    Failure::Missing {
        stage,
        detail: format!("{} not found", display(&s.out.path(name))),
    }
}

fn load_points(s: &Settings, space: &PathSpace) -> Result<Vec<CriticalPoint>, Failure> {
    let report: CriticalPointsReport = match s.out.read_json(CRITICAL_POINTS) {
        None => return Err(missing("find", s, CRITICAL_POINTS)),
        Some(r) => r.map_err(|e| Failure::Missing {
            stage: "find",
            detail: format!("unreadable report {e}"),
        })?,
    };
    if report.mesh != s.mesh {
        return Err(Failure::Missing {
            stage: "find",
            detail: format!("critical points were computed at mesh {}, not {}", report.mesh, s.mesh),
        });
    }
    let mut out = Vec::with_capacity(report.points.len());
    for rec in &report.points {
        let text = s
            .out
            .read_text(&rec.path_file)
            .ok_or_else(|| missing("find", s, &rec.path_file))?;
        let path = DiscretePath::from_csv(&text).map_err(|e| Failure::Missing {
            stage: "find",
            detail: format!("{}: {e}", rec.path_file),
        })?;
        let mut cp = analyze(space, path, rec.iterations)?;
        cp.id = rec.id;
        out.push(cp);
    }
    Ok(out)
}

pub fn index(s: &Settings) -> Result<(), Failure> {
    let space = s.space()?;
    let points = load_points(s, &space)?;
    let mut records = Vec::with_capacity(points.len());
    for cp in &points {
        let data = morse_index(&space.hessian(&cp.path)?)?;
        let lowest: Vec<f64> = data.eigen.values.iter().take(8).copied().collect();
        println!(
            "critical point {}: index {} nullity {} gap {:.6e}",
            cp.id, data.index, data.nullity, data.spectral_gap
        );
        records.push(IndexRecord {
            id: cp.id,
            action: cp.action,
            morse_index: data.index,
            nullity: data.nullity,
            spectral_gap: data.spectral_gap,
            null_tol: data.null_tol,
            nondegenerate: morse_action::critical::certify_l0(cp),
            lowest_eigenvalues: lowest,
        });
    }
    let all = records.iter().all(|r| r.nondegenerate);
    if !all {
        println!("warning: degenerate critical points present; the complex cannot be assembled");
    }
    let report = IndexReport {
        problem: s.spec.name.clone(),
        mesh: s.mesh,
        points: records,
        all_nondegenerate: all,
    };
    s.out.write_json(INDEX, &report).map_err(io)?;
    Ok(())
}

pub fn flow(s: &Settings) -> Result<(), Failure> {
    if s.out.read_text(INDEX).is_none() {
        return Err(missing("index", s, INDEX));
    }
    let space = s.space()?;
    let points: Vec<CriticalPoint> = load_points(s, &space)?.into_iter().filter(|c| c.nullity == 0).collect();
    let field = assemble_field(&space, &points, &s.spec.field_options(s.seed))?;
    let opts = s.spec.solver.flow;
    let mut records = Vec::new();
    let mut monotone = true;
    for cp in points.iter().filter(|c| c.morse_index >= 1) {
        let local = field
            .locals
            .iter()
            .find(|l| l.center_id == cp.id)
            .expect("every point has a local field");
        let basis = unstable_basis(&space, cp, &space.hessian(&cp.path)?)?;
        for (k, e) in basis.iter().enumerate() {
            for branch in [1i64, -1] {
                let start = space.displace(&cp.path, &(e * (branch as f64 * local.r_in / 2.0)));
                let tr = integrate(&field, &start, &points, &opts)?;
                let file = format!(
                    "trajectories/flow_{:03}_{k}_{}.csv",
                    cp.id,
                    if branch > 0 { "plus" } else { "minus" }
                );
                s.out.write_text(&file, &tr.to_csv()).map_err(io)?;
                monotone &= tr.max_action_increase <= opts.action_slack;
                let status = match tr.status {
                    FlowStatus::Converged => "converged",
                    FlowStatus::Timeout => "timeout",
                };
                println!(
                    "flow from {} direction {k} branch {branch:+}: {status}, ends near {:?}",
                    cp.id,
                    tr.nearest.map(|n| n.0)
                );
                records.push(FlowRecord {
                    from: cp.id,
                    direction: k,
                    branch,
                    status: status.into(),
                    terminal: tr.nearest.map(|n| n.0),
                    terminal_distance: tr.nearest.map(|n| n.1),
                    steps: tr.steps,
                    rejected: tr.rejected,
                    max_action_increase: tr.max_action_increase,
                    action_start: tr.samples.first().map_or(f64::NAN, |x| x.action),
                    action_end: tr.samples.last().map_or(f64::NAN, |x| x.action),
                    file,
                });
            }
        }
    }
    let report = FlowReport {
        problem: s.spec.name.clone(),
        mesh: s.mesh,
        seed: s.seed,
        field: field.summary().clone(),
        trajectories: records,
        monotone,
    };
    s.out.write_json(FLOW, &report).map_err(io)?;
    if monotone {
        Ok(())
    } else {
        Err(Failure::Condition("action increased along a trajectory".into()))
    }
}

pub fn complex(s: &Settings) -> Result<(), Failure> {
    if s.out.read_text(FLOW).is_none() {
        return Err(missing("flow", s, FLOW));
    }
    let space = s.space()?;
    let points = load_points(s, &space)?;
    let data = morse_complex::assemble_complex(
        &space,
        &points,
        s.sublevel,
        &s.spec.field_options(s.seed),
        &s.spec.connection_options(s.seed),
    )?;
    for (k, gens) in data.generators.iter().enumerate() {
        println!(
            "degree {k}: {} generators {:?}",
            gens.len(),
            gens.iter().map(|g| g.id).collect::<Vec<_>>()
        );
    }
    for (k, m) in data.boundary.iter().enumerate() {
        println!("boundary {}: {:?}", k + 1, m);
    }
    let report = ComplexReport {
        problem: s.spec.name.clone(),
        mesh: s.mesh,
        sublevel: data.sublevel,
        seed: s.seed,
        coefficients: data.coefficients,
        generators: data.generators,
        boundary: data.boundary,
        connections: data.connections,
    };
    s.out.write_json(COMPLEX, &report).map_err(io)?;
    Ok(())
}

pub fn homology(s: &Settings) -> Result<(), Failure> {
    let report: ComplexReport = match s.out.read_json(COMPLEX) {
        None => return Err(missing("complex", s, COMPLEX)),
        Some(r) => r.map_err(|e| Failure::Missing {
            stage: "complex",
            detail: format!("unreadable report {e}"),
        })?,
    };
    if report.mesh != s.mesh {
        return Err(Failure::Missing {
            stage: "complex",
            detail: format!("complex was assembled at mesh {}, not {}", report.mesh, s.mesh),
        });
    }
    let data = MorseComplexData {
        sublevel: report.sublevel,
        generators: report.generators,
        boundary: report.boundary,
        connections: report.connections,
        coefficients: report.coefficients,
        perturbation_seed: report.seed,
    };
    let h = morse_complex::homology(&data)?;
    for (k, b) in h.betti.iter().enumerate() {
        println!("H_{k}: rank {b} torsion {:?}", h.torsion[k]);
    }
    let comparison = s.spec.reference().map(|r| compare_reference(&h, &data, &r));
    if let Some(c) = &comparison {
        println!(
            "reference {}: {} (expected betti {:?})",
            c.reference,
            if c.passed { "PASS" } else { "FAIL" },
            c.expected_betti
        );
    }
    let passed = comparison.as_ref().is_none_or(|c| c.passed);
    let out = HomologyReport {
        problem: s.spec.name.clone(),
        mesh: report.mesh,
        sublevel: data.sublevel,
        coefficients: h.coefficients,
        betti: h.betti,
        torsion: h.torsion,
        reference: comparison,
        passed,
    };
    s.out.write_json(HOMOLOGY, &out).map_err(io)?;
    if passed {
        Ok(())
    } else {
        Err(Failure::Condition("homology does not match the reference".into()))
    }
}

pub const PROBE_MESHES: [usize; 7] = [8, 16, 32, 64, 128, 256, 512];

pub fn probe(s: &Settings) -> Result<(), Failure> {
    let space = s.space()?;
    let seeds = s.spec.seeds.seeds(&space);
    let base = match seeds.first() {
        Some(p) => space.project_admissible(p)?,
        None => return Err(Failure::Input("the seed strategy produced no paths".into())),
    };
    let report = hessian_continuity_probe(&space, &base, &PROBE_MESHES, 1.0)?;
    let mut csv = String::from("cells,epsilon,eta_norm,eta_h1_norm,gap\n");
    for r in &report.rows {
        println!("N = {:>4}: gap {:.6} eta {:.6e}", r.cells, r.gap, r.eta_norm);
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.cells, r.epsilon, r.eta_norm, r.eta_h1_norm, r.gap
        ));
    }
    s.out.write_text("probe_c2.csv", &csv).map_err(io)?;
    s.out.write_json(PROBE, &report).map_err(io)?;
    Ok(())
}
