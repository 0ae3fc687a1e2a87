//! Piecewise-linear discretization of `H¹([0,1], M)` with the action, its
//! gradient, the Hessian pencil and the two Hilbert products.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lagrangian::LagrangianModel;
use crate::linalg;
use crate::manifold::{tangent_constraint_basis, BoundaryCondition, ChartedManifold};

/// Nodes `q₀..q_N` of a piecewise-linear path on the uniform mesh `h = 1/N`.
///
/// Periodic coordinates are stored lifted, so slopes are well defined.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    dim: usize,
    data: Vec<f64>,
}

impl DiscretePath {
    /// Node-major flat storage of length `(N + 1) · dim`.
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) || data.len() / dim < 2 {
            return Err(Error::Dimension {
                expected: 2 * dim.max(1),
                got: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Problem("path contains non-finite node values".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn from_nodes(nodes: &[DVector<f64>]) -> Result<Self> {
        let dim = nodes.first().map_or(0, |q| q.len());
        let mut data = Vec::with_capacity(nodes.len() * dim);
        for q in nodes {
            if q.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: q.len(),
                });
            }
            data.extend(q.iter());
        }
        Self::from_flat(dim, data)
    }

    /// Samples `f` at the mesh nodes `t = i / N`.
    pub fn from_fn(dim: usize, cells: usize, f: impl Fn(f64) -> DVector<f64>) -> Self {
        let mut data = Vec::with_capacity((cells + 1) * dim);
        for i in 0..=cells {
            let q = f(i as f64 / cells as f64);
            assert_eq!(q.len(), dim, "path sampler returned wrong dimension");
            data.extend(q.iter());
        }
        Self { dim, data }
    }

    pub fn constant(q: &[f64], cells: usize) -> Self {
        let mut data = Vec::with_capacity((cells + 1) * q.len());
        for _ in 0..=cells {
            data.extend_from_slice(q);
        }
        Self { dim: q.len(), data }
    }

    pub fn line(start: &[f64], end: &[f64], cells: usize) -> Self {
        assert_eq!(start.len(), end.len());
        Self::from_fn(start.len(), cells, |t| {
            DVector::from_fn(start.len(), |j, _| start[j] + t * (end[j] - start[j]))
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> usize {
        self.data.len() / self.dim - 1
    }

    pub fn mesh(&self) -> f64 {
        1.0 / self.cells() as f64
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn node_slice(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn node(&self, i: usize) -> DVector<f64> {
        DVector::from_column_slice(self.node_slice(i))
    }

    /// Cell slope `(q_{i+1} − q_i) / h`.
    pub fn slope(&self, cell: usize) -> DVector<f64> {
        let n = self.cells() as f64;
        DVector::from_fn(self.dim, |j, _| {
            (self.data[(cell + 1) * self.dim + j] - self.data[cell * self.dim + j]) * n
        })
    }

    pub fn midpoint(&self, cell: usize) -> DVector<f64> {
        DVector::from_fn(self.dim, |j, _| {
            0.5 * (self.data[cell * self.dim + j] + self.data[(cell + 1) * self.dim + j])
        })
    }

    /// Adds `shift` to every node.
    pub fn translate(&self, shift: &[f64]) -> Self {
        let mut out = self.clone();
        for (k, x) in out.data.iter_mut().enumerate() {
            *x += shift[k % self.dim];
        }
        out
    }

    /// Value of the piecewise-linear interpolant at `t ∈ [0, 1]`.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let cells = self.cells();
        let x = (t.clamp(0.0, 1.0) * cells as f64).min(cells as f64);
        let i = (x.floor() as usize).min(cells - 1);
        let s = x - i as f64;
        DVector::from_fn(self.dim, |j, _| {
            let a = self.data[i * self.dim + j];
            let b = self.data[(i + 1) * self.dim + j];
            a + s * (b - a)
        })
    }

    /// Linear interpolation onto a mesh with `cells` cells.
    pub fn resample(&self, cells: usize) -> Self {
        Self::from_fn(self.dim, cells, |t| self.eval(t))
    }

    pub fn linf_distance(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// CSV with header `t,q1,..,qn`, one row per node.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for j in 0..self.dim {
            let _ = write!(out, ",q{}", j + 1);
        }
        out.push('\n');
        let cells = self.cells();
        for i in 0..=cells {
            let _ = write!(out, "{}", i as f64 / cells as f64);
            for x in self.node_slice(i) {
                let _ = write!(out, ",{x}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Problem("empty path CSV".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.first() != Some(&"t") || cols.len() < 2 {
            return Err(Error::Problem(format!("bad path CSV header '{header}'")));
        }
        let dim = cols.len() - 1;
        let mut data = Vec::new();
        let mut times = Vec::new();
        for (row, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Problem(format!("path CSV row {}: {e}", row + 2)))?;
            if vals.len() != dim + 1 {
                return Err(Error::Problem(format!(
                    "path CSV row {} has {} columns, expected {}",
                    row + 2,
                    vals.len(),
                    dim + 1
                )));
            }
            times.push(vals[0]);
            data.extend_from_slice(&vals[1..]);
        }
        let path = Self::from_flat(dim, data)?;
        let cells = path.cells() as f64;
        for (i, t) in times.iter().enumerate() {
            if (t - i as f64 / cells).abs() > 1e-9 {
                return Err(Error::Problem(format!(
                    "path CSV node {i} is not on the uniform mesh (t = {t})"
                )));
            }
        }
        Ok(path)
    }
}

/// Isometric embedding `E` of the constrained coordinates into the nodal
/// space: the orthonormal `W` directions on the endpoint nodes first, then
/// the interior node coordinates. `EᵀE = I`.
#[derive(Debug, Clone)]
pub struct ConstraintMap {
    dim: usize,
    w_basis: Vec<DVector<f64>>,
    /// For each nodal dof, the nonzero `E` entries `(column, weight)`.
    dof_map: Vec<Vec<(usize, f64)>>,
    reduced_dim: usize,
}

impl ConstraintMap {
    pub fn new(bc: &BoundaryCondition, dim: usize, cells: usize) -> Result<Self> {
        if cells < 2 {
            return Err(Error::Problem(format!("mesh needs at least 2 cells, got {cells}")));
        }
        let w_basis = tangent_constraint_basis(bc, dim)?;
        let full = (cells + 1) * dim;
        let mut dof_map = vec![Vec::new(); full];
        for (c, w) in w_basis.iter().enumerate() {
            for j in 0..dim {
                if w[j] != 0.0 {
                    dof_map[j].push((c, w[j]));
                }
                if w[dim + j] != 0.0 {
                    dof_map[cells * dim + j].push((c, w[dim + j]));
                }
            }
        }
        let mut col = w_basis.len();
        for dof in dof_map.iter_mut().take(cells * dim).skip(dim) {
            dof.push((col, 1.0));
            col += 1;
        }
        Ok(Self {
            dim,
            w_basis,
            dof_map,
            reduced_dim: col,
        })
    }

    pub fn reduced_dim(&self) -> usize {
        self.reduced_dim
    }

    pub fn full_dim(&self) -> usize {
        self.dof_map.len()
    }

    pub fn w_dim(&self) -> usize {
        self.w_basis.len()
    }

    pub fn w_basis(&self) -> &[DVector<f64>] {
        &self.w_basis
    }

    /// `E c`.
    pub fn expand(&self, c: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.full_dim(), |a, _| {
            self.dof_map[a].iter().map(|&(r, w)| w * c[r]).sum()
        })
    }

    /// `Eᵀ g`.
    pub fn reduce_covector(&self, g: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.reduced_dim);
        for (a, entries) in self.dof_map.iter().enumerate() {
            for &(r, w) in entries {
                out[r] += w * g[a];
            }
        }
        out
    }

    /// Adds `Eᵀ B E` for a `2n × 2n` cell block `B` on nodes `cell, cell+1`.
    fn scatter(&self, out: &mut DMatrix<f64>, cell: usize, block: &DMatrix<f64>) {
        let n = self.dim;
        let base = cell * n;
        for a in 0..2 * n {
            let ea = &self.dof_map[base + a];
            if ea.is_empty() {
                continue;
            }
            for b in 0..2 * n {
                let v = block[(a, b)];
                if v == 0.0 {
                    continue;
                }
                for &(r, wr) in ea {
                    for &(s, ws) in &self.dof_map[base + b] {
                        out[(r, s)] += wr * ws * v;
                    }
                }
            }
        }
    }
}

/// Hessian pencil at a path: `h = a_part + k_part` on the constrained space,
/// `gram` the H¹ product and `gram_zero` the product `⟨·,·⟩₀` at this path.
#[derive(Debug, Clone)]
pub struct HessianPencil {
    pub h: DMatrix<f64>,
    pub gram: DMatrix<f64>,
    pub gram_zero: DMatrix<f64>,
    pub a_part: DMatrix<f64>,
    pub k_part: DMatrix<f64>,
}

/// A Lagrangian, manifold, boundary condition and mesh: everything needed to
/// evaluate the discretized action functional.
#[derive(Debug, Clone)]
pub struct PathSpace {
    manifold: ChartedManifold,
    model: LagrangianModel,
    bc: BoundaryCondition,
    cells: usize,
    map: ConstraintMap,
    metric: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl PathSpace {
    pub fn new(manifold: ChartedManifold, model: LagrangianModel, bc: BoundaryCondition, cells: usize) -> Result<Self> {
        if model.dim() != manifold.dim() {
            return Err(Error::Dimension {
                expected: manifold.dim(),
                got: model.dim(),
            });
        }
        bc.validate(&manifold)?;
        let metric = manifold.constant_metric()?.clone();
        let map = ConstraintMap::new(&bc, manifold.dim(), cells)?;
        let mut space = Self {
            manifold,
            model,
            bc,
            cells,
            map,
            metric,
            gram: DMatrix::zeros(0, 0),
        };
        space.gram = space.assemble_gram();
        Ok(space)
    }

    /// Same problem on a different mesh.
    pub fn with_cells(&self, cells: usize) -> Result<Self> {
        Self::new(self.manifold.clone(), self.model.clone(), self.bc.clone(), cells)
    }

    pub fn manifold(&self) -> &ChartedManifold {
        &self.manifold
    }
    pub fn model(&self) -> &LagrangianModel {
        &self.model
    }
    pub fn boundary(&self) -> &BoundaryCondition {
        &self.bc
    }
    pub fn cells(&self) -> usize {
        self.cells
    }
    pub fn dim(&self) -> usize {
        self.manifold.dim()
    }
    pub fn mesh(&self) -> f64 {
        1.0 / self.cells as f64
    }
    pub fn constraint_map(&self) -> &ConstraintMap {
        &self.map
    }
    pub fn reduced_dim(&self) -> usize {
        self.map.reduced_dim()
    }

    fn check_path(&self, path: &DiscretePath) -> Result<()> {
        if path.dim() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: path.dim(),
            });
        }
        if path.cells() != self.cells {
            return Err(Error::Dimension {
                expected: self.cells,
                got: path.cells(),
            });
        }
        Ok(())
    }

    fn cell_time(&self, cell: usize) -> f64 {
        (cell as f64 + 0.5) / self.cells as f64
    }

    /// Midpoint-rule action `Σ h L(tᵢ, mᵢ, sᵢ)`.
    pub fn action(&self, path: &DiscretePath) -> Result<f64> {
        self.check_path(path)?;
        let h = self.mesh();
        let mut total = 0.0;
        for i in 0..self.cells {
            let l = self.model.value(self.cell_time(i), &path.midpoint(i), &path.slope(i));
            if !l.is_finite() {
                return Err(Error::NonFinite { cell: i });
            }
            total += h * l;
        }
        Ok(total)
    }

    /// Gradient of the discrete action with respect to all nodal values.
    pub fn gradient_full(&self, path: &DiscretePath) -> Result<DVector<f64>> {
        self.check_path(path)?;
        let n = self.dim();
        let h = self.mesh();
        let mut g = DVector::zeros((self.cells + 1) * n);
        for i in 0..self.cells {
            let (t, m, s) = (self.cell_time(i), path.midpoint(i), path.slope(i));
            let lq = self.model.d_q(t, &m, &s);
            let lv = self.model.d_v(t, &m, &s);
            if lq.iter().chain(lv.iter()).any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { cell: i });
            }
            for j in 0..n {
                g[i * n + j] += 0.5 * h * lq[j] - lv[j];
                g[(i + 1) * n + j] += 0.5 * h * lq[j] + lv[j];
            }
        }
        Ok(g)
    }

    /// Gradient restricted to the constrained space, `Eᵀ ∇S`.
    pub fn gradient(&self, path: &DiscretePath) -> Result<DVector<f64>> {
        Ok(self.map.reduce_covector(self.gradient_full(path)?.as_slice()))
    }

    /// Consistent mass block `(h/6)[[2M, M], [M, 2M]]`.
    fn mass_block(&self, metric: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.dim();
        let h = self.mesh();
        let mut b = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let m = metric[(i, j)] * h / 6.0;
                b[(i, j)] = 2.0 * m;
                b[(n + i, n + j)] = 2.0 * m;
                b[(i, n + j)] = m;
                b[(n + i, j)] = m;
            }
        }
        b
    }

    /// Stiffness block `(1/h)[[D, −D], [−D, D]]`.
    fn stiffness_block(&self, d: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.dim();
        let inv_h = self.cells as f64;
        let mut b = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let k = d[(i, j)] * inv_h;
                b[(i, j)] = k;
                b[(n + i, n + j)] = k;
                b[(i, n + j)] = -k;
                b[(n + i, j)] = -k;
            }
        }
        b
    }

    fn assemble_gram(&self) -> DMatrix<f64> {
        let m = self.reduced_dim();
        let mut out = DMatrix::zeros(m, m);
        let block = self.stiffness_block(&self.metric) + self.mass_block(&self.metric);
        for i in 0..self.cells {
            self.map.scatter(&mut out, i, &block);
        }
        linalg::symmetrize(&mut out);
        out
    }

    /// Gram matrix of `∫ g(ξ′, η′) + ∫ g(ξ, η)` on the constrained space.
    pub fn hilbert_product_h1(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `A(γ)`: kinetic stiffness with `∂²L/∂v²` along `γ` plus the
    /// Euclidean mass term.
    fn assemble_a_part(&self, path: &DiscretePath, require_positive: bool) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let m = self.reduced_dim();
        let mass = self.mass_block(&DMatrix::identity(n, n));
        let mut out = DMatrix::zeros(m, m);
        for i in 0..self.cells {
            let d = self.model.d_vv(self.cell_time(i), &path.midpoint(i), &path.slope(i));
            if d.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { cell: i });
            }
            if require_positive && linalg::symmetric_extremes(&d).0 <= 0.0 {
                return Err(Error::NotPositive { cell: i });
            }
            self.map.scatter(&mut out, i, &(self.stiffness_block(&d) + &mass));
        }
        linalg::symmetrize(&mut out);
        Ok(out)
    }

    /// Gram matrix of `⟨ξ,η⟩₀ = ∫ ∂²L/∂v²(t,γ₀,γ₀′) ξ′·η′ + ∫ ξ·η`.
    pub fn hilbert_product_zero(&self, center: &DiscretePath) -> Result<DMatrix<f64>> {
        self.check_path(center)?;
        self.assemble_a_part(center, true)
    }

    /// Second differential of the discrete action on the constrained space,
    /// split as `A + K`.
    pub fn hessian(&self, path: &DiscretePath) -> Result<HessianPencil> {
        self.check_path(path)?;
        let n = self.dim();
        let h = self.mesh();
        let m = self.reduced_dim();
        let a_part = self.assemble_a_part(path, false)?;
        let mass = self.mass_block(&DMatrix::identity(n, n));
        let mut jac = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            jac[(i, i)] = 0.5;
            jac[(i, n + i)] = 0.5;
            jac[(n + i, i)] = -1.0 / h;
            jac[(n + i, n + i)] = 1.0 / h;
        }
        let mut k_part = DMatrix::zeros(m, m);
        for i in 0..self.cells {
            let (t, mid, s) = (self.cell_time(i), path.midpoint(i), path.slope(i));
            let qq = self.model.d_qq(t, &mid, &s);
            let vq = self.model.d_vq(t, &mid, &s);
            if qq.iter().chain(vq.iter()).any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { cell: i });
            }
            let mut q = DMatrix::zeros(2 * n, 2 * n);
            q.view_mut((0, 0), (n, n)).copy_from(&qq);
            q.view_mut((0, n), (n, n)).copy_from(&vq.transpose());
            q.view_mut((n, 0), (n, n)).copy_from(&vq);
            let block = jac.transpose() * q * &jac * h - &mass;
            self.map.scatter(&mut k_part, i, &block);
        }
        linalg::symmetrize(&mut k_part);
        let hess = &a_part + &k_part;
        Ok(HessianPencil {
            h: hess,
            gram: self.gram.clone(),
            gram_zero: a_part.clone(),
            a_part,
            k_part,
        })
    }

    /// `path + E c`.
    pub fn displace(&self, path: &DiscretePath, c: &DVector<f64>) -> DiscretePath {
        let d = self.map.expand(c);
        let mut out = path.clone();
        for (x, dx) in out.as_mut_slice().iter_mut().zip(d.iter()) {
            *x += dx;
        }
        out
    }

    /// Integer shift per coordinate (zero on non-periodic coordinates) that
    /// brings `other` closest to `path` at node 0.
    pub fn lift_shift(&self, path: &DiscretePath, other: &DiscretePath) -> Vec<f64> {
        (0..self.dim())
            .map(|j| {
                if self.manifold.is_periodic(j) {
                    (other.node_slice(0)[j] - path.node_slice(0)[j]).round()
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// `other − path` after removing the integer lift offset.
    pub fn lifted_difference(&self, path: &DiscretePath, other: &DiscretePath) -> DVector<f64> {
        let shift = self.lift_shift(path, other);
        let n = self.dim();
        DVector::from_fn(path.as_slice().len(), |k, _| {
            other.as_slice()[k] - shift[k % n] - path.as_slice()[k]
        })
    }

    /// Reduced coordinates of `other − path` (modulo lift). Exact when both
    /// paths satisfy the boundary condition in the same component.
    pub fn displacement(&self, path: &DiscretePath, other: &DiscretePath) -> DVector<f64> {
        self.map.reduce_covector(self.lifted_difference(path, other).as_slice())
    }

    /// L∞ distance modulo a uniform integer translation of periodic
    /// coordinates.
    pub fn linf_distance_mod_lift(&self, a: &DiscretePath, b: &DiscretePath) -> f64 {
        self.lifted_difference(a, b).amax()
    }

    /// H¹ distance modulo lift, computed on full nodal differences.
    pub fn h1_distance_mod_lift(&self, a: &DiscretePath, b: &DiscretePath) -> f64 {
        let d = self.lifted_difference(a, b);
        let n = self.dim();
        let block = self.stiffness_block(&self.metric) + self.mass_block(&self.metric);
        let mut total = 0.0;
        for i in 0..self.cells {
            let x = d.rows(i * n, 2 * n);
            total += x.dot(&(&block * x));
        }
        total.max(0.0).sqrt()
    }

    /// `‖g‖_{G⁻¹}` for a reduced covector.
    pub fn dual_norm(&self, g: &DVector<f64>) -> Result<f64> {
        let chol = linalg::cholesky(&self.gram)?;
        Ok(g.dot(&chol.solve(g)).max(0.0).sqrt())
    }

    /// Winding numbers on the periodic coordinates the boundary condition
    /// pins down; paths with different keys lie in different components.
    pub fn component_key(&self, path: &DiscretePath) -> Vec<i64> {
        let n = self.dim();
        let q0 = path.node_slice(0);
        let qn = path.node_slice(path.cells());
        let mut key = Vec::new();
        for j in 0..n {
            if !self.manifold.is_periodic(j) {
                continue;
            }
            let offset = match &self.bc {
                BoundaryCondition::Free => continue,
                BoundaryCondition::Periodic => 0.0,
                BoundaryCondition::Dirichlet { start, end } => end[j] - start[j],
                BoundaryCondition::Subspace { anchor, .. } => {
                    let pinned = self.map.w_basis().iter().all(|w| (w[n + j] - w[j]).abs() <= 1e-12);
                    if !pinned {
                        continue;
                    }
                    anchor.1[j] - anchor.0[j]
                }
            };
            key.push((qn[j] - q0[j] - offset).round() as i64);
        }
        key
    }

    /// Moves the endpoints of `path` onto the constraint set, keeping the
    /// seed's lift and winding.
    pub fn project_admissible(&self, path: &DiscretePath) -> Result<DiscretePath> {
        self.check_path(path)?;
        let n = self.dim();
        let last = path.cells();
        let mut out = path.clone();
        let q0 = path.node(0);
        let qn = path.node(last);
        let nearest = |target: f64, near: f64, j: usize| {
            if self.manifold.is_periodic(j) {
                target + (near - target).round()
            } else {
                target
            }
        };
        let (new0, newn): (DVector<f64>, DVector<f64>) = match &self.bc {
            BoundaryCondition::Free => return Ok(out),
            BoundaryCondition::Dirichlet { start, end } => (
                DVector::from_fn(n, |j, _| nearest(start[j], q0[j], j)),
                DVector::from_fn(n, |j, _| nearest(end[j], qn[j], j)),
            ),
            BoundaryCondition::Periodic => {
                let k = DVector::from_fn(n, |j, _| {
                    if self.manifold.is_periodic(j) {
                        (qn[j] - q0[j]).round()
                    } else {
                        0.0
                    }
                });
                let a = (&q0 + &qn - &k) * 0.5;
                let b = &a + &k;
                (a, b)
            }
            BoundaryCondition::Subspace { anchor, .. } => {
                let a0 = DVector::from_fn(n, |j, _| nearest(anchor.0[j], q0[j], j));
                let an = DVector::from_fn(n, |j, _| nearest(anchor.1[j], qn[j], j));
                let mut e = DVector::zeros(2 * n);
                for j in 0..n {
                    e[j] = q0[j] - a0[j];
                    e[n + j] = qn[j] - an[j];
                }
                let mut p = DVector::zeros(2 * n);
                for w in self.map.w_basis() {
                    p += w * w.dot(&e);
                }
                (
                    DVector::from_fn(n, |j, _| a0[j] + p[j]),
                    DVector::from_fn(n, |j, _| an[j] + p[n + j]),
                )
            }
        };
        let data = out.as_mut_slice();
        for j in 0..n {
            data[j] = new0[j];
            data[last * n + j] = newn[j];
        }
        Ok(out)
    }

    /// Largest violation of the affine endpoint constraint.
    pub fn constraint_residual(&self, path: &DiscretePath) -> f64 {
        match self.project_admissible(path) {
            Ok(p) => p.linf_distance(path),
            Err(_) => f64::INFINITY,
        }
    }
}

/// Dense text dump of a matrix, one row per line.
pub fn dense_text(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.17e}", m[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Hessian continuity probe

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub cells: usize,
    pub epsilon: f64,
    /// `(|η(0)|² + ‖η′‖²_{L²})^{1/2}`.
    pub eta_norm: f64,
    /// Full H¹ norm of `η`.
    pub eta_h1_norm: f64,
    /// Largest `|λ|` of the pencil `(H(γ+η) − H(γ), G)`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub velocity: f64,
    pub rows: Vec<ProbeRow>,
    pub min_gap: f64,
    pub max_gap: f64,
    /// Least-squares slope of `log ‖η‖` against `log ε`.
    pub eta_decay_exponent: f64,
}

/// Concentrated perturbation: slope `velocity` (along the first coordinate)
/// on the middle cell, zero slope elsewhere, `η(0) = 0`.
pub fn concentrated_perturbation(dim: usize, cells: usize, velocity: f64) -> DiscretePath {
    let k = cells / 2;
    let h = 1.0 / cells as f64;
    DiscretePath::from_fn(dim, cells, |t| {
        let i = (t * cells as f64).round() as usize;
        let mut q = DVector::zeros(dim);
        if i > k {
            q[0] = velocity * h;
        }
        q
    })
}

/// Measures `‖H(γ + η_ε) − H(γ)‖` relative to the H¹ product for each mesh,
/// with `ε = 1/N`.
pub fn hessian_continuity_probe(
    space: &PathSpace,
    base: &DiscretePath,
    meshes: &[usize],
    velocity: f64,
) -> Result<ProbeReport> {
    let mut rows = Vec::with_capacity(meshes.len());
    for &cells in meshes {
        let sp = space.with_cells(cells)?;
        let gamma = base.resample(cells);
        let eta = concentrated_perturbation(sp.dim(), cells, velocity);
        let perturbed = DiscretePath::from_flat(
            sp.dim(),
            gamma
                .as_slice()
                .iter()
                .zip(eta.as_slice())
                .map(|(a, b)| a + b)
                .collect(),
        )?;
        let h0 = sp.hessian(&gamma)?;
        let h1 = sp.hessian(&perturbed)?;
        let diff = &h1.h - &h0.h;
        let gap = if diff.amax() == 0.0 {
            0.0
        } else {
            linalg::pencil_norm(&diff, sp.hilbert_product_h1())?
        };
        let zero = DiscretePath::constant(&vec![0.0; sp.dim()], cells);
        let eta_h1_norm = PathSpace::h1_distance_mod_lift(&sp, &zero, &eta);
        let mut eta_norm2 = eta.node(0).norm_squared();
        for i in 0..cells {
            eta_norm2 += eta.slope(i).norm_squared() / cells as f64;
        }
        rows.push(ProbeRow {
            cells,
            epsilon: 1.0 / cells as f64,
            eta_norm: eta_norm2.sqrt(),
            eta_h1_norm,
            gap,
        });
    }
    let min_gap = rows.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min);
    let max_gap = rows.iter().map(|r| r.gap).fold(0.0, f64::max);
    let eta_decay_exponent = log_slope(
        &rows.iter().map(|r| r.epsilon).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.eta_norm).collect::<Vec<_>>(),
    );
    Ok(ProbeReport {
        velocity,
        rows,
        min_gap,
        max_gap,
        eta_decay_exponent,
    })
}

fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
