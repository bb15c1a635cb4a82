//! C¹ space-time finite elements on the structured mesh.
//!
//! Every node carries the four Hermite degrees of freedom `(p, p_x, p_t,
//! p_xt)`; on each cell the shape functions are tensor products of cubic
//! Hermite polynomials, which makes the discrete space globally C¹. The
//! boundary conditions `p(0, t) = 0` and `p_x(1, t) = 0` are imposed by
//! removing the corresponding degrees of freedom.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryTrace, QuadField, QuadGrid, QuadRule, SpaceTimeMesh};
use crate::linalg::SparseSpd;
use crate::nonlinear::ControlWeight;

/// Degrees of freedom per node, in storage order.
pub const DOFS_PER_NODE: usize = 4;

/// Index of the value, `x`-slope, `t`-slope and mixed derivative dofs.
pub const DOF_VALUE: usize = 0;
pub const DOF_DX: usize = 1;
pub const DOF_DT: usize = 2;
pub const DOF_DXT: usize = 3;

const LOCAL: usize = 16;
const NONE: u32 = u32::MAX;

/// Values (`d = 0`) or derivatives of the cubic Hermite basis
/// `h00, h10, h01, h11` on the reference interval.
pub fn hermite_basis(xi: f64, d: u8) -> Result<[f64; 4]> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::invalid(format!("reference coordinate {xi} outside [0, 1]")));
    }
    Ok(match d {
        0 => [
            (1.0 + 2.0 * xi) * (1.0 - xi) * (1.0 - xi),
            xi * (1.0 - xi) * (1.0 - xi),
            xi * xi * (3.0 - 2.0 * xi),
            xi * xi * (xi - 1.0),
        ],
        1 => [
            6.0 * xi * xi - 6.0 * xi,
            3.0 * xi * xi - 4.0 * xi + 1.0,
            6.0 * xi - 6.0 * xi * xi,
            3.0 * xi * xi - 2.0 * xi,
        ],
        2 => [
            12.0 * xi - 6.0,
            6.0 * xi - 4.0,
            6.0 - 12.0 * xi,
            6.0 * xi - 2.0,
        ],
        _ => return Err(Error::invalid(format!("derivative order {d} not available"))),
    })
}

/// One-dimensional shape function of the element on a cell of length `h`:
/// `side` picks the left (0) or right (1) node, `slope` the value (0) or
/// slope (1) dof. Returns the `d`-th physical derivative.
fn shape_1d(side: usize, slope: usize, xi: f64, d: u8, h: f64) -> f64 {
    let b = hermite_basis(xi, d).expect("reference point in range");
    let v = match (side, slope) {
        (0, 0) => b[0],
        (0, _) => b[1] * h,
        (_, 0) => b[2],
        _ => b[3] * h,
    };
    v / h.powi(d as i32)
}

/// `(corner side in x, corner side in t, x-derivative dof, t-derivative dof)`
/// for local index `a = 4 * corner + dof`.
#[inline]
fn local_layout(a: usize) -> (usize, usize, usize, usize) {
    let corner = a / 4;
    let dof = a % 4;
    (corner & 1, corner >> 1, dof & 1, dof >> 1)
}

fn shape_2d(a: usize, xi: f64, tau: f64, dxi: u8, dtau: u8, dx: f64, dt: f64) -> f64 {
    let (sx, st, ex, et) = local_layout(a);
    shape_1d(sx, ex, xi, dxi, dx) * shape_1d(st, et, tau, dtau, dt)
}

/// Shape-function tables shared by every cell of a uniform mesh.
#[derive(Debug, Clone)]
struct Tables {
    /// `phi[q][a]` at the interior quadrature points.
    phi: Vec<[f64; LOCAL]>,
    /// `(phi_tt - phi_xx)[q][a]`.
    lphi: Vec<[f64; LOCAL]>,
    /// Values on the right edge `xi = 1` at the time points.
    right: Vec<[f64; LOCAL]>,
    /// Values and `t`-derivatives on the bottom edge `tau = 0`.
    bottom: Vec<[f64; LOCAL]>,
    bottom_dt: Vec<[f64; LOCAL]>,
}

impl Tables {
    fn new(mesh: &SpaceTimeMesh, rule: &QuadRule) -> Self {
        let (dx, dt) = (mesh.dx(), mesh.dt());
        let pts = rule.points();
        let n = pts.len();
        let table = |f: &dyn Fn(usize) -> f64| {
            let mut row = [0.0; LOCAL];
            for (a, r) in row.iter_mut().enumerate() {
                *r = f(a);
            }
            row
        };
        let mut phi = Vec::with_capacity(n * n);
        let mut lphi = Vec::with_capacity(n * n);
        for qt in 0..n {
            for qx in 0..n {
                let (xi, tau) = (pts[qx], pts[qt]);
                phi.push(table(&|a| shape_2d(a, xi, tau, 0, 0, dx, dt)));
                lphi.push(table(&|a| {
                    shape_2d(a, xi, tau, 0, 2, dx, dt) - shape_2d(a, xi, tau, 2, 0, dx, dt)
                }));
            }
        }
        let right = pts
            .iter()
            .map(|&tau| table(&|a| shape_2d(a, 1.0, tau, 0, 0, dx, dt)))
            .collect();
        let bottom = pts
            .iter()
            .map(|&xi| table(&|a| shape_2d(a, xi, 0.0, 0, 0, dx, dt)))
            .collect();
        let bottom_dt = pts
            .iter()
            .map(|&xi| table(&|a| shape_2d(a, xi, 0.0, 0, 1, dx, dt)))
            .collect();
        Self {
            phi,
            lphi,
            right,
            bottom,
            bottom_dt,
        }
    }
}

/// The constrained Hermite space together with its matrix pattern.
#[derive(Debug)]
pub struct C1Space {
    grid: Arc<QuadGrid>,
    /// Free index of every global dof, `NONE` when constrained.
    free_of: Vec<u32>,
    n_free: usize,
    row_ptr: Vec<u32>,
    col_idx: Vec<u32>,
    /// For each cell, the position in the value array of every local pair
    /// `(a, b)` with `free(a) <= free(b)`, `NONE` otherwise.
    scatter: Vec<u32>,
    tables: Tables,
}

impl C1Space {
    pub fn new(grid: Arc<QuadGrid>) -> Self {
        let mesh = grid.mesh().clone();
        let (nx, nt) = (mesh.nx(), mesh.nt());
        let n_nodes = (nx + 1) * (nt + 1);
        let mut free_of = vec![NONE; n_nodes * DOFS_PER_NODE];
        let mut n_free = 0u32;
        for node in 0..n_nodes {
            let i = node % (nx + 1);
            for d in 0..DOFS_PER_NODE {
                let constrained = (i == 0 && (d == DOF_VALUE || d == DOF_DT))
                    || (i == nx && (d == DOF_DX || d == DOF_DXT));
                if !constrained {
                    free_of[node * DOFS_PER_NODE + d] = n_free;
                    n_free += 1;
                }
            }
        }
        let n_free = n_free as usize;

        let mut row_ptr = Vec::with_capacity(n_free + 1);
        row_ptr.push(0u32);
        let mut col_idx = Vec::with_capacity(n_free * 20);
        for node in 0..n_nodes {
            let (i, j) = (node % (nx + 1), node / (nx + 1));
            for d in 0..DOFS_PER_NODE {
                let row = free_of[node * DOFS_PER_NODE + d];
                if row == NONE {
                    continue;
                }
                for jj in j.saturating_sub(1)..=(j + 1).min(nt) {
                    for ii in i.saturating_sub(1)..=(i + 1).min(nx) {
                        let other = ii + jj * (nx + 1);
                        for dd in 0..DOFS_PER_NODE {
                            let col = free_of[other * DOFS_PER_NODE + dd];
                            if col != NONE && col >= row {
                                col_idx.push(col);
                            }
                        }
                    }
                }
                row_ptr.push(col_idx.len() as u32);
            }
        }

        let mut scatter = Vec::with_capacity(mesh.cell_count() * LOCAL * LOCAL);
        for cell in 0..mesh.cell_count() {
            let dofs = cell_dofs(&mesh, &free_of, cell);
            for &fa in &dofs {
                for &fb in &dofs {
                    if fa == NONE || fb == NONE || fa > fb {
                        scatter.push(NONE);
                        continue;
                    }
                    let lo = row_ptr[fa as usize] as usize;
                    let hi = row_ptr[fa as usize + 1] as usize;
                    let k = col_idx[lo..hi]
                        .binary_search(&fb)
                        .expect("pattern covers every cell coupling");
                    scatter.push((lo + k) as u32);
                }
            }
        }

        let tables = Tables::new(&mesh, grid.rule());
        Self {
            grid,
            free_of,
            n_free,
            row_ptr,
            col_idx,
            scatter,
            tables,
        }
    }

    pub fn grid(&self) -> &Arc<QuadGrid> {
        &self.grid
    }

    pub fn mesh(&self) -> &SpaceTimeMesh {
        self.grid.mesh()
    }

    pub fn total_dofs(&self) -> usize {
        self.free_of.len()
    }

    pub fn free_dofs(&self) -> usize {
        self.n_free
    }

    pub fn constrained_dofs(&self) -> usize {
        self.total_dofs() - self.n_free
    }

    /// Free index of dof `d` at node `(i, j)`, `None` if constrained.
    pub fn free_index(&self, i: usize, j: usize, d: usize) -> Option<usize> {
        let nx = self.mesh().nx();
        let g = (i + j * (nx + 1)) * DOFS_PER_NODE + d;
        match self.free_of[g] {
            NONE => None,
            f => Some(f as usize),
        }
    }

    /// Stored upper-triangle entries of every Gram matrix of this space.
    pub fn matrix_nnz(&self) -> usize {
        self.col_idx.len()
    }

    fn check_grid(&self, grid: &Arc<QuadGrid>, what: &str) -> Result<()> {
        if Arc::ptr_eq(grid, &self.grid) || **grid == *self.grid {
            Ok(())
        } else {
            Err(Error::invalid(format!("{what} is sampled on a different grid")))
        }
    }

    fn check_coeffs(&self, coeffs: &[f64]) -> Result<()> {
        if coeffs.len() != self.n_free {
            return Err(Error::invalid(format!(
                "coefficient vector has length {}, space has {} free dofs",
                coeffs.len(),
                self.n_free
            )));
        }
        Ok(())
    }

    fn local_coeffs(&self, coeffs: &[f64], cell: usize) -> [f64; LOCAL] {
        let dofs = cell_dofs(self.mesh(), &self.free_of, cell);
        let mut out = [0.0; LOCAL];
        for (o, &f) in out.iter_mut().zip(&dofs) {
            if f != NONE {
                *o = coeffs[f as usize];
            }
        }
        out
    }

    /// Gram matrix of `(p, q) = ∫∫ (Lp + Ap)(Lq + Aq) + ∫ eta² p(1,t) q(1,t) dt`
    /// with `L = ∂tt - ∂xx`.
    pub fn assemble_gram(&self, a: &QuadField, weight: ControlWeight) -> Result<SparseSpd> {
        self.check_grid(a.grid(), "potential")?;
        let mesh = self.mesh();
        let nq = self.grid.points_per_cell();
        let weights: Vec<f64> = (0..nq).map(|q| self.grid.weight(q)).collect();
        let mut values = vec![0.0; self.col_idx.len()];
        let mut g = vec![[0.0; LOCAL]; nq];
        let mut k = [[0.0; LOCAL]; LOCAL];
        for cell in 0..mesh.cell_count() {
            let av = a.cell_values(cell);
            for q in 0..nq {
                let (phi, lphi) = (&self.tables.phi[q], &self.tables.lphi[q]);
                for b in 0..LOCAL {
                    g[q][b] = lphi[b] + av[q] * phi[b];
                }
            }
            for (ia, row) in k.iter_mut().enumerate() {
                for ib in ia..LOCAL {
                    let mut s = 0.0;
                    for q in 0..nq {
                        s += weights[q] * g[q][ia] * g[q][ib];
                    }
                    row[ib] = s;
                }
            }
            let (_, j) = mesh.cell_coords(cell);
            if cell % mesh.nx() == mesh.nx() - 1 {
                let n = self.grid.rule().order();
                for qt in 0..n {
                    let s = j * n + qt;
                    let t = self.grid.trace_time(s);
                    let eta = weight.eta(t, mesh.t_final());
                    let w = self.grid.trace_weight(s) * eta * eta;
                    if w == 0.0 {
                        continue;
                    }
                    let r = &self.tables.right[qt];
                    for ia in 0..LOCAL {
                        if r[ia] == 0.0 {
                            continue;
                        }
                        for ib in ia..LOCAL {
                            k[ia][ib] += w * r[ia] * r[ib];
                        }
                    }
                }
            }
            let scatter = &self.scatter[cell * LOCAL * LOCAL..(cell + 1) * LOCAL * LOCAL];
            for ia in 0..LOCAL {
                for ib in 0..LOCAL {
                    let pos = scatter[ia * LOCAL + ib];
                    if pos != NONE {
                        values[pos as usize] += if ia <= ib { k[ia][ib] } else { k[ib][ia] };
                    }
                }
            }
        }
        SparseSpd::from_upper_csr(self.n_free, self.row_ptr.clone(), self.col_idx.clone(), values)
    }

    /// Load `∫∫ B q + ∫ u1 q(x,0) dx - ∫ u0 q_t(x,0) dx` for every basis `q`.
    /// `b = None` means a zero source.
    pub fn assemble_load(
        &self,
        b: Option<&QuadField>,
        u0: &dyn Fn(f64) -> f64,
        u1: &dyn Fn(f64) -> f64,
    ) -> Result<Vec<f64>> {
        let mesh = self.mesh();
        let mut load = vec![0.0; self.n_free];
        let mut local = [0.0; LOCAL];
        if let Some(b) = b {
            self.check_grid(b.grid(), "source")?;
            let nq = self.grid.points_per_cell();
            for cell in 0..mesh.cell_count() {
                let bv = b.cell_values(cell);
                local.fill(0.0);
                for q in 0..nq {
                    let wb = self.grid.weight(q) * bv[q];
                    if wb == 0.0 {
                        continue;
                    }
                    for (l, p) in local.iter_mut().zip(&self.tables.phi[q]) {
                        *l += wb * p;
                    }
                }
                self.scatter_load(&mut load, cell, &local);
            }
        }
        let rule = self.grid.rule();
        for i in 0..mesh.nx() {
            let cell = mesh.cell_index(i, 0);
            let (x0, _) = mesh.cell_origin(cell);
            local.fill(0.0);
            for (qx, (&xi, &w)) in rule.points().iter().zip(rule.weights()).enumerate() {
                let x = x0 + xi * mesh.dx();
                let w = w * mesh.dx();
                let (v1, v0) = (u1(x), u0(x));
                for a in 0..LOCAL {
                    local[a] += w * (v1 * self.tables.bottom[qx][a] - v0 * self.tables.bottom_dt[qx][a]);
                }
            }
            self.scatter_load(&mut load, cell, &local);
        }
        Ok(load)
    }

    /// Gram matrix and load of one linear control problem.
    pub fn assemble_system(
        &self,
        a: &QuadField,
        b: Option<&QuadField>,
        u0: &dyn Fn(f64) -> f64,
        u1: &dyn Fn(f64) -> f64,
        weight: ControlWeight,
    ) -> Result<(SparseSpd, Vec<f64>)> {
        Ok((self.assemble_gram(a, weight)?, self.assemble_load(b, u0, u1)?))
    }

    /// Load `(p*, q)` for every basis `q`, where `p*` is given through its
    /// value `p(x, t)` and `Lp(x, t)`. Solving the Gram system with this load
    /// gives the orthogonal projection of `p*` onto the space.
    pub fn assemble_projection_load(
        &self,
        a: &QuadField,
        weight: ControlWeight,
        p: &dyn Fn(f64, f64) -> f64,
        lp: &dyn Fn(f64, f64) -> f64,
    ) -> Result<Vec<f64>> {
        self.check_grid(a.grid(), "potential")?;
        let mesh = self.mesh();
        let nq = self.grid.points_per_cell();
        let n = self.grid.rule().order();
        let mut load = vec![0.0; self.n_free];
        let mut local = [0.0; LOCAL];
        for cell in 0..mesh.cell_count() {
            let av = a.cell_values(cell);
            local.fill(0.0);
            for q in 0..nq {
                let (x, t) = self.grid.point(cell, q);
                let s = self.grid.weight(q) * (lp(x, t) + av[q] * p(x, t));
                for b in 0..LOCAL {
                    local[b] += s * (self.tables.lphi[q][b] + av[q] * self.tables.phi[q][b]);
                }
            }
            if cell % mesh.nx() == mesh.nx() - 1 {
                let (_, j) = mesh.cell_coords(cell);
                for qt in 0..n {
                    let s = j * n + qt;
                    let t = self.grid.trace_time(s);
                    let eta = weight.eta(t, mesh.t_final());
                    let w = self.grid.trace_weight(s) * eta * eta * p(1.0, t);
                    for b in 0..LOCAL {
                        local[b] += w * self.tables.right[qt][b];
                    }
                }
            }
            self.scatter_load(&mut load, cell, &local);
        }
        Ok(load)
    }

    fn scatter_load(&self, load: &mut [f64], cell: usize, local: &[f64; LOCAL]) {
        let dofs = cell_dofs(self.mesh(), &self.free_of, cell);
        for (&f, &v) in dofs.iter().zip(local) {
            if f != NONE {
                load[f as usize] += v;
            }
        }
    }

    /// Hermite interpolant of a function given with its derivatives
    /// `p, p_x, p_t, p_xt`. Constrained dofs are dropped.
    pub fn interpolate(
        &self,
        p: &dyn Fn(f64, f64) -> f64,
        px: &dyn Fn(f64, f64) -> f64,
        pt: &dyn Fn(f64, f64) -> f64,
        pxt: &dyn Fn(f64, f64) -> f64,
    ) -> Vec<f64> {
        let mesh = self.mesh();
        let nx = mesh.nx();
        let mut out = vec![0.0; self.n_free];
        for (g, &f) in self.free_of.iter().enumerate() {
            if f == NONE {
                continue;
            }
            let node = g / DOFS_PER_NODE;
            let x = (node % (nx + 1)) as f64 * mesh.dx();
            let t = (node / (nx + 1)) as f64 * mesh.dt();
            out[f as usize] = match g % DOFS_PER_NODE {
                DOF_VALUE => p(x, t),
                DOF_DX => px(x, t),
                DOF_DT => pt(x, t),
                _ => pxt(x, t),
            };
        }
        out
    }

    /// Value of the discrete function at an arbitrary point of the closed
    /// space-time rectangle.
    pub fn evaluate(&self, coeffs: &[f64], x: f64, t: f64) -> Result<f64> {
        self.check_coeffs(coeffs)?;
        let mesh = self.mesh();
        if !(0.0..=1.0).contains(&x) || !(0.0..=mesh.t_final()).contains(&t) {
            return Err(Error::invalid(format!("point ({x}, {t}) outside the domain")));
        }
        let i = ((x / mesh.dx()) as usize).min(mesh.nx() - 1);
        let j = ((t / mesh.dt()) as usize).min(mesh.nt() - 1);
        let cell = mesh.cell_index(i, j);
        let (x0, t0) = mesh.cell_origin(cell);
        let xi = ((x - x0) / mesh.dx()).clamp(0.0, 1.0);
        let tau = ((t - t0) / mesh.dt()).clamp(0.0, 1.0);
        let c = self.local_coeffs(coeffs, cell);
        Ok((0..LOCAL)
            .map(|a| c[a] * shape_2d(a, xi, tau, 0, 0, mesh.dx(), mesh.dt()))
            .sum())
    }

    /// `y = Lp + Ap` at every quadrature point.
    pub fn extract_state(&self, coeffs: &[f64], a: &QuadField) -> Result<QuadField> {
        self.check_coeffs(coeffs)?;
        self.check_grid(a.grid(), "potential")?;
        let nq = self.grid.points_per_cell();
        let mut values = Vec::with_capacity(self.grid.sample_count());
        for cell in 0..self.mesh().cell_count() {
            let c = self.local_coeffs(coeffs, cell);
            let av = a.cell_values(cell);
            for q in 0..nq {
                let (mut lp, mut p) = (0.0, 0.0);
                for b in 0..LOCAL {
                    lp += c[b] * self.tables.lphi[q][b];
                    p += c[b] * self.tables.phi[q][b];
                }
                values.push(lp + av[q] * p);
            }
        }
        QuadField::from_values(&self.grid, values)
    }

    /// `v(t) = -eta(t)² p(1, t)` at the trace quadrature times.
    pub fn extract_control(&self, coeffs: &[f64], weight: ControlWeight) -> Result<BoundaryTrace> {
        self.check_coeffs(coeffs)?;
        let mesh = self.mesh();
        let n = self.grid.rule().order();
        let mut values = Vec::with_capacity(self.grid.trace_sample_count());
        for j in 0..mesh.nt() {
            let c = self.local_coeffs(coeffs, mesh.cell_index(mesh.nx() - 1, j));
            for qt in 0..n {
                let t = self.grid.trace_time(j * n + qt);
                let eta = weight.eta(t, mesh.t_final());
                let p: f64 = (0..LOCAL).map(|b| c[b] * self.tables.right[qt][b]).sum();
                values.push(-eta * eta * p);
            }
        }
        BoundaryTrace::from_values(&self.grid, values)
    }
}

/// Free indices (or `NONE`) of the 16 local dofs of `cell`.
fn cell_dofs(mesh: &SpaceTimeMesh, free_of: &[u32], cell: usize) -> [u32; LOCAL] {
    let (i, j) = mesh.cell_coords(cell);
    let nx = mesh.nx();
    let mut out = [NONE; LOCAL];
    for (a, o) in out.iter_mut().enumerate() {
        let corner = a / 4;
        let node = (i + (corner & 1)) + (j + (corner >> 1)) * (nx + 1);
        *o = free_of[node * DOFS_PER_NODE + a % 4];
    }
    out
}

pub fn build_c1_space(mesh: SpaceTimeMesh, quad_order: usize) -> Result<C1Space> {
    Ok(C1Space::new(QuadGrid::new(mesh, QuadRule::gauss_legendre(quad_order)?)))
}
