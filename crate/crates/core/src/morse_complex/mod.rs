//! Morse complex on a sublevel: generators, signed connection counts,
//! boundary matrices and integral homology.

pub mod snf;

use std::collections::BTreeMap;

use nalgebra::DVector;
use num_bigint::BigInt;
use num_traits::One;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::critical::CriticalPoint;
use crate::error::{Error, Result};
use crate::parallel;
use crate::pathspace::{DiscretePath, PathSpace};
use crate::pseudograd::{
    assemble_field, flow, unstable_basis, FieldOptions, FlowOptions, FlowStatus, PseudoGradientField, Trajectory,
};

pub use snf::{smith_normal_form, SmithForm};

#[derive(Debug, Clone)]
pub struct Generator {
    pub id: usize,
    pub degree: usize,
    pub action: f64,
    /// ±1; flips the sign of every count involving this generator.
    pub orientation: i64,
    /// Oriented unstable basis (reduced coordinates, G₀-orthonormal).
    pub unstable: Vec<DVector<f64>>,
    pub path: DiscretePath,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GeneratorInfo {
    pub id: usize,
    pub action: f64,
    pub orientation: i64,
}

#[derive(Debug, Clone)]
pub struct GradedGenerators {
    pub sublevel: f64,
    pub degrees: Vec<Vec<Generator>>,
}

impl GradedGenerators {
    pub fn count(&self, degree: usize) -> usize {
        self.degrees.get(degree).map_or(0, |g| g.len())
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.iter().all(|g| g.is_empty())
    }

    fn position(&self, id: usize) -> Option<(usize, usize)> {
        for (k, gens) in self.degrees.iter().enumerate() {
            if let Some(i) = gens.iter().position(|g| g.id == id) {
                return Some((k, i));
            }
        }
        None
    }
}

/// Generators with action below `a`, grouped by Morse index in input order.
pub fn collect_generators(space: &PathSpace, cps: &[CriticalPoint], a: f64) -> Result<GradedGenerators> {
    if !a.is_finite() {
        return Err(Error::Problem(format!("sublevel must be finite, got {a}")));
    }
    let mut degrees: Vec<Vec<Generator>> = Vec::new();
    for cp in cps.iter().filter(|c| c.action < a) {
        if cp.nullity > 0 {
            return Err(Error::Degenerate {
                id: cp.id,
                nullity: cp.nullity,
            });
        }
        let pencil = space.hessian(&cp.path)?;
        let unstable = unstable_basis(space, cp, &pencil)?;
        let k = cp.morse_index;
        if degrees.len() <= k {
            degrees.resize_with(k + 1, Vec::new);
        }
        degrees[k].push(Generator {
            id: cp.id,
            degree: k,
            action: cp.action,
            orientation: 1,
            unstable,
            path: cp.path.clone(),
        });
    }
    Ok(GradedGenerators { sublevel: a, degrees })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnectionOptions {
    pub flow: FlowOptions,
    /// H¹ distance at which a trajectory counts as reaching a point.
    pub terminal_tol: f64,
    /// A second candidate this close makes the terminal ambiguous.
    pub ambiguity_tol: f64,
    /// Seed of the small random perturbation applied to branch starts.
    pub perturbation_seed: u64,
    /// Perturbation size relative to the branch offset.
    pub perturbation: f64,
    /// Retries with a larger perturbation when a branch stops at an
    /// index ≥ 1 point.
    pub retries: usize,
    /// Points on the unstable circle of index-2 generators.
    pub circle_points: usize,
}

impl Default for ConnectionOptions {
    fn default() -> Self {
        Self {
            flow: FlowOptions::default(),
            terminal_tol: 1e-4,
            ambiguity_tol: 1e-3,
            perturbation_seed: 0,
            perturbation: 1e-3,
            retries: 3,
            circle_points: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionRecord {
    pub from: usize,
    pub to: usize,
    /// +1 for the branch along the oriented unstable vector, −1 opposite.
    pub branch: i64,
    pub sign: i64,
    pub terminal_distance: f64,
    pub action_start: f64,
    pub action_end: f64,
    pub steps: usize,
    pub retries: usize,
    /// Gradient norm decreasing over the last samples.
    pub contracting: bool,
    #[serde(skip)]
    pub trajectory: Option<Vec<crate::pseudograd::TrajectorySample>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficients {
    Integers,
    /// Index-2 counts known only modulo 2.
    Mod2Exploratory,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MorseComplexData {
    pub sublevel: f64,
    pub generators: Vec<Vec<GeneratorInfo>>,
    /// `boundary[k-1]` is `∂_k`: rows indexed by degree `k−1` generators,
    /// columns by degree `k` generators.
    pub boundary: Vec<Vec<Vec<i64>>>,
    pub connections: Vec<ConnectionRecord>,
    pub coefficients: Coefficients,
    pub perturbation_seed: u64,
}

struct Terminal {
    id: usize,
    distance: f64,
    shift: Vec<f64>,
}

fn identify_terminal(
    space: &PathSpace,
    tr: &Trajectory,
    refs: &[CriticalPoint],
    opts: &ConnectionOptions,
) -> Result<Terminal> {
    if tr.status != FlowStatus::Converged {
        return Err(Error::Connection(format!(
            "trajectory timed out at t = {} with gradient {:e}",
            tr.samples.last().map_or(0.0, |s| s.t),
            tr.samples.last().map_or(f64::NAN, |s| s.grad_norm)
        )));
    }
    let mut d: Vec<(usize, f64, usize)> = refs
        .iter()
        .enumerate()
        .map(|(k, cp)| (cp.id, space.h1_distance_mod_lift(&cp.path, &tr.end), k))
        .collect();
    d.sort_by(|a, b| a.1.total_cmp(&b.1));
    let Some(&(id, distance, k)) = d.first() else {
        return Err(Error::Connection("no critical points to compare against".into()));
    };
    if distance > opts.terminal_tol {
        return Err(Error::Connection(format!(
            "trajectory ended {distance:e} from the nearest critical point {id}"
        )));
    }
    if let Some(&(other, od, _)) = d.get(1) {
        if od <= opts.ambiguity_tol {
            return Err(Error::Connection(format!(
                "ambiguous terminal: {id} and {other} both within {od:e}"
            )));
        }
    }
    Ok(Terminal {
        id,
        distance,
        shift: space.lift_shift(&refs[k].path, &tr.end),
    })
}

fn perturbation(space: &PathSpace, seed: u64, id: usize, branch: usize, attempt: usize, size: f64) -> DVector<f64> {
    let mix = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((id as u64) << 20)
        .wrapping_add((branch as u64) << 8)
        .wrapping_add(attempt as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(mix);
    let v = DVector::from_fn(space.reduced_dim(), |_, _| StandardNormal.sample(&mut rng));
    let norm = v.norm();
    if norm == 0.0 {
        v
    } else {
        v * (size / norm)
    }
}

struct BranchOutcome {
    terminal: Terminal,
    trajectory: Trajectory,
    retries: usize,
}

/// Flows from `center + direction` (plus the seeded perturbation), retrying
/// with a larger perturbation when the flow stops at an index ≥ 1 point.
fn run_branch(
    field: &PseudoGradientField,
    refs: &[CriticalPoint],
    gen: &Generator,
    direction: &DVector<f64>,
    branch: usize,
    opts: &ConnectionOptions,
) -> Result<BranchOutcome> {
    let space = field.space();
    let offset_norm = field
        .locals
        .iter()
        .find(|l| l.center_id == gen.id)
        .map_or(1.0, |l| l.norm_zero(direction));
    let mut last_err = None;
    for attempt in 0..=opts.retries {
        let size = opts.perturbation * offset_norm * 10f64.powi(attempt as i32);
        let kick = perturbation(space, opts.perturbation_seed, gen.id, branch, attempt, size);
        let start = space.displace(&gen.path, &(direction + kick));
        let trajectory = flow(field, &start, refs, &opts.flow)?;
        let terminal = identify_terminal(space, &trajectory, refs, opts)?;
        let index = refs.iter().find(|c| c.id == terminal.id).map_or(0, |c| c.morse_index);
        if index >= gen.degree {
            last_err = Some(Error::Connection(format!(
                "branch from {} stopped at {} of index {index}",
                gen.id, terminal.id
            )));
            continue;
        }
        return Ok(BranchOutcome {
            terminal,
            trajectory,
            retries: attempt,
        });
    }
    Err(last_err.unwrap_or_else(|| Error::Connection(format!("branch from {} failed", gen.id))))
}

fn contracting(tr: &Trajectory) -> bool {
    let s = &tr.samples;
    if s.len() < 3 {
        return true;
    }
    let tail = &s[s.len().saturating_sub(6)..];
    tail.windows(2)
        .all(|w| w[1].grad_norm <= w[0].grad_norm * (1.0 + 1e-6) + 1e-12)
}

/// Signed counts `n(x, y)` for an index-1 generator `x`; keys are
/// critical-point ids of index-0 generators.
pub fn count_connections(
    field: &PseudoGradientField,
    refs: &[CriticalPoint],
    gens: &GradedGenerators,
    x: &Generator,
    opts: &ConnectionOptions,
) -> Result<(BTreeMap<usize, i64>, Vec<ConnectionRecord>)> {
    let mut counts = BTreeMap::new();
    if x.degree != 1 {
        return Ok((counts, Vec::new()));
    }
    let local = field
        .locals
        .iter()
        .find(|l| l.center_id == x.id)
        .ok_or_else(|| Error::Connection(format!("no local field at {}", x.id)))?;
    let e = &x.unstable[0];
    let delta = local.r_in / 2.0;
    let branches: Vec<(i64, DVector<f64>)> = vec![(1, e * delta), (-1, e * -delta)];
    let outcomes = parallel::map(&branches, |(b, dir)| {
        run_branch(field, refs, x, dir, if *b > 0 { 0 } else { 1 }, opts)
    });
    let mut records = Vec::new();
    for ((branch, _), outcome) in branches.iter().zip(outcomes) {
        let o = outcome?;
        let Some((deg, pos)) = gens.position(o.terminal.id) else {
            return Err(Error::Connection(format!(
                "branch from {} reached {} outside the sublevel {}",
                x.id, o.terminal.id, gens.sublevel
            )));
        };
        if deg != 0 {
            return Err(Error::Connection(format!(
                "branch from {} reached {} of degree {deg}",
                x.id, o.terminal.id
            )));
        }
        let y = &gens.degrees[0][pos];
        let sign = branch * x.orientation * y.orientation;
        *counts.entry(y.id).or_insert(0) += sign;
        let samples = &o.trajectory.samples;
        records.push(ConnectionRecord {
            from: x.id,
            to: y.id,
            branch: *branch,
            sign,
            terminal_distance: o.terminal.distance,
            action_start: samples.first().map_or(f64::NAN, |s| s.action),
            action_end: samples.last().map_or(f64::NAN, |s| s.action),
            steps: o.trajectory.steps,
            retries: o.retries,
            contracting: contracting(&o.trajectory),
            trajectory: Some(o.trajectory.samples.clone()),
        });
    }
    Ok((counts, records))
}

/// Counts modulo 2 of broken flow lines from an index-2 generator through
/// index-1 generators.
pub fn count_connections_mod2(
    field: &PseudoGradientField,
    refs: &[CriticalPoint],
    gens: &GradedGenerators,
    x: &Generator,
    opts: &ConnectionOptions,
) -> Result<BTreeMap<usize, i64>> {
    let mut counts = circle_breakings(field, refs, gens, x, opts)?;
    for v in counts.values_mut() {
        *v = v.rem_euclid(2);
    }
    Ok(counts)
}

/// Breakings through each index-1 generator seen while sampling the
/// unstable circle of an index-2 generator: adjacent samples whose flows end
/// at different lifts of the terminal point.
pub fn circle_breakings(
    field: &PseudoGradientField,
    refs: &[CriticalPoint],
    gens: &GradedGenerators,
    x: &Generator,
    opts: &ConnectionOptions,
) -> Result<BTreeMap<usize, i64>> {
    let mut counts = BTreeMap::new();
    if x.degree != 2 || x.unstable.len() < 2 {
        return Ok(counts);
    }
    let space = field.space();
    let local = field
        .locals
        .iter()
        .find(|l| l.center_id == x.id)
        .ok_or_else(|| Error::Connection(format!("no local field at {}", x.id)))?;
    let rho = local.r_in / 2.0;
    let m = opts.circle_points.max(4);
    let starts: Vec<DVector<f64>> = (0..m)
        .map(|i| {
            // samples at half-step offsets (i + ½)/m
            let th = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / m as f64;
            (&x.unstable[0] * th.cos() + &x.unstable[1] * th.sin()) * rho
        })
        .collect();
    let index1: Vec<&Generator> = gens.degrees.get(1).map(|g| g.iter().collect()).unwrap_or_default();
    let runs = parallel::map(&starts, |dir| -> Result<(usize, Vec<i64>, Vec<f64>)> {
        let start = space.displace(&x.path, dir);
        let tr = flow(field, &start, refs, &opts.flow)?;
        let t = identify_terminal(space, &tr, refs, opts)?;
        // closest approach to each index-1 generator along the trajectory
        let closest: Vec<f64> = index1
            .iter()
            .map(|g| {
                tr.samples
                    .iter()
                    .filter(|s| s.nearest_id == Some(g.id))
                    .map(|s| s.nearest_distance)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let shift: Vec<i64> = t.shift.iter().map(|s| *s as i64).collect();
        Ok((t.id, shift, closest))
    });
    let runs: Vec<(usize, Vec<i64>, Vec<f64>)> = runs.into_iter().collect::<Result<_>>()?;
    for i in 0..m {
        let a = &runs[i];
        let b = &runs[(i + 1) % m];
        if a.0 == b.0 && a.1 == b.1 {
            continue;
        }
        // the breaking sits at the index-1 point both neighbours passed closest
        let mut best = None;
        for k in 0..index1.len() {
            let d = a.2[k].min(b.2[k]);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((k, d));
            }
        }
        if let Some((k, _)) = best {
            *counts.entry(index1[k].id).or_insert(0) += 1;
        }
    }
    Ok(counts)
}

/// Assembles `∂_k` from the counts and verifies `∂_{k−1} ∂_k = 0`.
pub fn boundary_matrices(
    gens: &GradedGenerators,
    counts: &BTreeMap<(usize, usize), i64>,
    connections: Vec<ConnectionRecord>,
    coefficients: Coefficients,
    perturbation_seed: u64,
) -> Result<MorseComplexData> {
    let top = gens.degrees.len();
    let mut boundary = Vec::new();
    for k in 1..top {
        let rows = &gens.degrees[k - 1];
        let cols = &gens.degrees[k];
        let mat: Vec<Vec<i64>> = rows
            .iter()
            .map(|y| {
                cols.iter()
                    .map(|x| counts.get(&(x.id, y.id)).copied().unwrap_or(0))
                    .collect()
            })
            .collect();
        boundary.push(mat);
    }
    let data = MorseComplexData {
        sublevel: gens.sublevel,
        generators: gens
            .degrees
            .iter()
            .map(|g| {
                g.iter()
                    .map(|x| GeneratorInfo {
                        id: x.id,
                        action: x.action,
                        orientation: x.orientation,
                    })
                    .collect()
            })
            .collect(),
        boundary,
        connections,
        coefficients,
        perturbation_seed,
    };
    check_boundary_square(&data)?;
    Ok(data)
}

pub fn check_boundary_square(data: &MorseComplexData) -> Result<()> {
    for k in 1..data.boundary.len() {
        let lower = &data.boundary[k - 1];
        let upper = &data.boundary[k];
        let inner = upper.len();
        for row in lower {
            for j in 0..upper.first().map_or(0, |r| r.len()) {
                let mut s: i128 = 0;
                for i in 0..inner {
                    s += row[i] as i128 * upper[i][j] as i128;
                }
                let bad = match data.coefficients {
                    Coefficients::Integers => s != 0,
                    Coefficients::Mod2Exploratory => s.rem_euclid(2) != 0,
                };
                if bad {
                    return Err(Error::BoundarySquare { k });
                }
            }
        }
    }
    Ok(())
}

/// Full pipeline: field, connection counts and boundary matrices on the
/// sublevel `a`. `cps` may contain points above `a`; they shape the field
/// but are not generators.
pub fn assemble_complex(
    space: &PathSpace,
    cps: &[CriticalPoint],
    a: f64,
    field_opts: &FieldOptions,
    opts: &ConnectionOptions,
) -> Result<MorseComplexData> {
    let gens = collect_generators(space, cps, a)?;
    let certified: Vec<CriticalPoint> = cps.iter().filter(|c| c.nullity == 0).cloned().collect();
    if gens.is_empty() {
        return boundary_matrices(
            &gens,
            &BTreeMap::new(),
            Vec::new(),
            Coefficients::Integers,
            opts.perturbation_seed,
        );
    }
    let field = assemble_field(space, &certified, field_opts)?;
    assemble_with_field(&field, &certified, gens, opts)
}

pub fn assemble_with_field(
    field: &PseudoGradientField,
    refs: &[CriticalPoint],
    gens: GradedGenerators,
    opts: &ConnectionOptions,
) -> Result<MorseComplexData> {
    let mut counts = BTreeMap::new();
    let mut records = Vec::new();
    for x in gens.degrees.get(1).into_iter().flatten() {
        let (c, r) = count_connections(field, refs, &gens, x, opts)?;
        for (y, n) in c {
            counts.insert((x.id, y), n);
        }
        records.extend(r);
    }
    let mut coefficients = Coefficients::Integers;
    if gens.degrees.len() > 3 {
        return Err(Error::Connection("generators of index ≥ 3 are not supported".into()));
    }
    for x in gens.degrees.get(2).into_iter().flatten() {
        coefficients = Coefficients::Mod2Exploratory;
        let c = count_connections_mod2(field, refs, &gens, x, opts)?;
        for (y, n) in c {
            counts.insert((x.id, y), n);
        }
    }
    boundary_matrices(&gens, &counts, records, coefficients, opts.perturbation_seed)
}

/// Flips the orientation of generator `index` in degree `degree`: negates
/// its column in `∂_degree` and its row in `∂_{degree+1}`.
pub fn flip_orientation(data: &MorseComplexData, degree: usize, index: usize) -> MorseComplexData {
    let mut out = data.clone();
    out.generators[degree][index].orientation *= -1;
    if degree >= 1 {
        for row in out.boundary[degree - 1].iter_mut() {
            row[index] = -row[index];
        }
    }
    if let Some(m) = out.boundary.get_mut(degree) {
        for x in m[index].iter_mut() {
            *x = -*x;
        }
    }
    for c in out.connections.iter_mut() {
        let id = data.generators[degree][index].id;
        if c.from == id || c.to == id {
            c.sign = -c.sign;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomologyResult {
    pub betti: Vec<usize>,
    /// Torsion coefficients per degree, in divisibility order.
    pub torsion: Vec<Vec<String>>,
    pub coefficients: Coefficients,
}

pub fn homology(data: &MorseComplexData) -> Result<HomologyResult> {
    check_boundary_square(data)?;
    let n = data.generators.len();
    let mut ranks = vec![0usize; n + 1];
    let mut diag: Vec<Vec<BigInt>> = vec![Vec::new(); n + 1];
    for (k1, mat) in data.boundary.iter().enumerate() {
        let k = k1 + 1;
        if mat.is_empty() || mat[0].is_empty() {
            continue;
        }
        match data.coefficients {
            Coefficients::Integers => {
                let s = smith_normal_form(&snf::from_i64(mat));
                ranks[k] = s.rank;
                diag[k] = s.diagonal;
            }
            Coefficients::Mod2Exploratory => ranks[k] = snf::rank_mod2(mat),
        }
    }
    let mut betti = Vec::with_capacity(n);
    let mut torsion: Vec<Vec<String>> = Vec::with_capacity(n);
    for k in 0..n {
        let gens = data.generators[k].len();
        betti.push(gens - ranks[k] - ranks[k + 1]);
        torsion.push(
            diag[k + 1]
                .iter()
                .filter(|d| **d > BigInt::one())
                .map(|d| d.to_string())
                .collect(),
        );
    }
    if betti.is_empty() {
        betti.push(0);
        torsion.push(Vec::new());
    }
    Ok(HomologyResult {
        betti,
        torsion,
        coefficients: data.coefficients,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Reference {
    /// Contractible path space.
    Contractible,
    /// Component of free loops of S¹, homotopy equivalent to S¹.
    CircleComponent,
    /// Based loops of S¹ with energy below `a`: one point per winding `k`
    /// with `k²/2 < a`.
    BasedLoopsS1Sublevel { a: f64 },
    /// Contractible component of free loops of the n-torus, equivalent to Tⁿ.
    TorusFreeComponent { n: usize },
}

impl Reference {
    pub fn parse(name: &str) -> Option<Self> {
        let name = name.trim();
        match name {
            "contractible" => return Some(Self::Contractible),
            "circle_component" => return Some(Self::CircleComponent),
            _ => {}
        }
        let arg = |prefix: &str| {
            name.strip_prefix(prefix)
                .and_then(|r| r.strip_prefix('('))
                .and_then(|r| r.strip_suffix(')'))
                .map(str::trim)
        };
        if let Some(a) = arg("based_loops_S1_sublevel") {
            return a.parse().ok().map(|a| Self::BasedLoopsS1Sublevel { a });
        }
        if let Some(n) = arg("torus_free_component") {
            return n.parse().ok().map(|n| Self::TorusFreeComponent { n });
        }
        None
    }

    pub fn label(&self) -> String {
        match self {
            Self::Contractible => "contractible".into(),
            Self::CircleComponent => "circle_component".into(),
            Self::BasedLoopsS1Sublevel { a } => format!("based_loops_S1_sublevel({a})"),
            Self::TorusFreeComponent { n } => format!("torus_free_component({n})"),
        }
    }

    /// Betti numbers; all references are torsion-free.
    pub fn betti(&self) -> Vec<usize> {
        match self {
            Self::Contractible => vec![1],
            Self::CircleComponent => vec![1, 1],
            Self::BasedLoopsS1Sublevel { a } => {
                let mut count = 0;
                let mut k: i64 = 0;
                while (k * k) as f64 / 2.0 < *a {
                    count += if k == 0 { 1 } else { 2 };
                    k += 1;
                }
                vec![count]
            }
            Self::TorusFreeComponent { n } => {
                let mut row = vec![1usize];
                for i in 0..*n {
                    row.push(row[i] * (n - i) / (i + 1));
                }
                row
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceComparison {
    pub reference: String,
    pub expected_betti: Vec<usize>,
    pub betti: Vec<usize>,
    pub torsion: Vec<Vec<String>>,
    pub generators: Vec<usize>,
    pub homology_matches: bool,
    /// `#generators_k ≥ rank H_k` in every degree.
    pub multiplicity_bound: bool,
    pub passed: bool,
}

pub fn compare_reference(
    result: &HomologyResult,
    data: &MorseComplexData,
    reference: &Reference,
) -> ReferenceComparison {
    let expected = reference.betti();
    let len = expected.len().max(result.betti.len());
    let at = |v: &[usize], k: usize| v.get(k).copied().unwrap_or(0);
    let homology_matches =
        (0..len).all(|k| at(&expected, k) == at(&result.betti, k)) && result.torsion.iter().all(|t| t.is_empty());
    let generators: Vec<usize> = data.generators.iter().map(|g| g.len()).collect();
    let multiplicity_bound = (0..len).all(|k| at(&generators, k) >= at(&result.betti, k));
    ReferenceComparison {
        reference: reference.label(),
        expected_betti: expected,
        betti: result.betti.clone(),
        torsion: result.torsion.clone(),
        generators,
        homology_matches,
        multiplicity_bound,
        passed: homology_matches && multiplicity_bound,
    }
}
