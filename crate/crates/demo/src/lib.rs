//! Browser bindings. Every export takes a problem file as a JSON string and
//! returns a JSON string; the `*_json` functions are the native entry points.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use morse_action::critical::{seed_sweep, CriticalPoint};
use morse_action::morse_complex::{self, compare_reference, ReferenceComparison};
use morse_action::pathspace::{DiscretePath, PathSpace};
use morse_action::problem::ProblemSpec;
use morse_action::pseudograd::{assemble_field, flow, unstable_basis, FlowStatus};

/// Upper bound on the mesh the page may request.
pub const MAX_CELLS: usize = 256;
const MAX_SAMPLES: usize = 200;

#[derive(Serialize)]
pub struct PointView {
    pub id: usize,
    pub action: f64,
    pub index: usize,
    pub nullity: usize,
    pub component: Vec<i64>,
    /// `[t, q₁, …, q_n]` per node.
    pub curve: Vec<Vec<f64>>,
}

#[derive(Serialize)]
pub struct FlowView {
    pub from: usize,
    pub direction: usize,
    pub branch: i64,
    pub to: Option<usize>,
    pub converged: bool,
    /// `[t, action]`, thinned to at most 200 samples.
    pub action: Vec<[f64; 2]>,
    pub start: Vec<Vec<f64>>,
    pub end: Vec<Vec<f64>>,
}

#[derive(Serialize)]
pub struct HomologyView {
    pub sublevel: f64,
    pub generators: Vec<Vec<usize>>,
    pub boundary: Vec<Vec<Vec<i64>>>,
    pub betti: Vec<usize>,
    pub torsion: Vec<Vec<String>>,
    pub mod2: bool,
    pub reference: Option<ReferenceComparison>,
}

fn setup(problem: &str, cells: usize) -> Result<(ProblemSpec, PathSpace), String> {
    let spec = ProblemSpec::from_json(problem).map_err(|e| e.to_string())?;
    if cells > MAX_CELLS {
        return Err(format!("mesh {cells} exceeds the demo limit {MAX_CELLS}"));
    }
    let space = spec.space(Some(cells)).map_err(|e| e.to_string())?;
    Ok((spec, space))
}

fn points(spec: &ProblemSpec, space: &PathSpace) -> Vec<CriticalPoint> {
    seed_sweep(space, &spec.seeds, &spec.solver.newton).points
}

fn curve(path: &DiscretePath) -> Vec<Vec<f64>> {
    let n = path.cells();
    (0..=n)
        .map(|i| {
            let mut row = vec![i as f64 / n as f64];
            row.extend_from_slice(path.node_slice(i));
            row
        })
        .collect()
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

pub fn critical_points_json(problem: &str, cells: usize) -> Result<String, String> {
    let (spec, space) = setup(problem, cells)?;
    let views: Vec<PointView> = points(&spec, &space)
        .iter()
        .map(|cp| PointView {
            id: cp.id,
            action: cp.action,
            index: cp.morse_index,
            nullity: cp.nullity,
            component: cp.component.clone(),
            curve: curve(&cp.path),
        })
        .collect();
    to_json(&views)
}

pub fn flow_lines_json(problem: &str, cells: usize) -> Result<String, String> {
    let (spec, space) = setup(problem, cells)?;
    let pts: Vec<CriticalPoint> = points(&spec, &space).into_iter().filter(|c| c.nullity == 0).collect();
    let field = assemble_field(&space, &pts, &spec.field_options(spec.rng_seed)).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for cp in pts.iter().filter(|c| c.morse_index >= 1) {
        let r_in = field
            .locals
            .iter()
            .find(|l| l.center_id == cp.id)
            .map(|l| l.r_in)
            .ok_or("missing local field")?;
        let pencil = space.hessian(&cp.path).map_err(|e| e.to_string())?;
        let basis = unstable_basis(&space, cp, &pencil).map_err(|e| e.to_string())?;
        for (k, e) in basis.iter().enumerate() {
            for branch in [1i64, -1] {
                let start = space.displace(&cp.path, &(e * (branch as f64 * r_in / 2.0)));
                let tr = flow(&field, &start, &pts, &spec.solver.flow).map_err(|e| e.to_string())?;
                let stride = tr.samples.len().div_ceil(MAX_SAMPLES).max(1);
                let mut action: Vec<[f64; 2]> = tr.samples.iter().step_by(stride).map(|s| [s.t, s.action]).collect();
                if let Some(last) = tr.samples.last() {
                    if action.last().map(|a| a[0]) != Some(last.t) {
                        action.push([last.t, last.action]);
                    }
                }
                out.push(FlowView {
                    from: cp.id,
                    direction: k,
                    branch,
                    to: tr.nearest.map(|n| n.0),
                    converged: tr.status == FlowStatus::Converged,
                    action,
                    start: curve(&start),
                    end: curve(&tr.end),
                });
            }
        }
    }
    to_json(&out)
}

pub fn homology_json(problem: &str, cells: usize, sublevel: f64) -> Result<String, String> {
    let (spec, space) = setup(problem, cells)?;
    let pts = points(&spec, &space);
    let data = morse_complex::assemble_complex(
        &space,
        &pts,
        sublevel,
        &spec.field_options(spec.rng_seed),
        &spec.connection_options(spec.rng_seed),
    )
    .map_err(|e| e.to_string())?;
    let h = morse_complex::homology(&data).map_err(|e| e.to_string())?;
    let reference = spec.reference().map(|r| compare_reference(&h, &data, &r));
    to_json(&HomologyView {
        sublevel,
        generators: data
            .generators
            .iter()
            .map(|g| g.iter().map(|x| x.id).collect())
            .collect(),
        boundary: data.boundary,
        betti: h.betti,
        torsion: h.torsion,
        mod2: data.coefficients == morse_complex::Coefficients::Mod2Exploratory,
        reference,
    })
}

#[wasm_bindgen]
pub fn critical_points(problem: &str, cells: usize) -> Result<String, JsError> {
    critical_points_json(problem, cells).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn flow_lines(problem: &str, cells: usize) -> Result<String, JsError> {
    flow_lines_json(problem, cells).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn morse_homology(problem: &str, cells: usize, sublevel: f64) -> Result<String, JsError> {
    homology_json(problem, cells, sublevel).map_err(|e| JsError::new(&e))
}
