//! Structured space-time mesh of `Q_T = (0,1) x (0,T)`, Gauss-Legendre
//! tensor quadrature, and the sampled fields that live on it.
//!
//! Cells are numbered x-fastest: cell `(i, j)` has index `i + j * nx` and
//! covers `[i dx, (i+1) dx] x [j dt, (j+1) dt]`. A [`QuadField`] stores one
//! value per cell and quadrature point, with points numbered `qx + n * qt`.
//! All reductions run cell by cell, then point by point, so results are
//! bit-reproducible.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Largest supported number of Gauss points per direction.
pub const MAX_QUAD_ORDER: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeMesh {
    nx: usize,
    nt: usize,
    t_final: f64,
}

impl SpaceTimeMesh {
    pub fn new(nx: usize, nt: usize, t_final: f64) -> Result<Self> {
        if nx == 0 || nt == 0 {
            return Err(Error::invalid(format!(
                "mesh needs at least one cell per direction (nx={nx}, nt={nt})"
            )));
        }
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::invalid(format!("final time must be positive, got {t_final}")));
        }
        Ok(Self { nx, nt, t_final })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.nt as f64
    }

    /// Cell diagonal `sqrt(dx^2 + dt^2)`.
    pub fn h(&self) -> f64 {
        self.dx().hypot(self.dt())
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.nt
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dt()
    }

    #[inline]
    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        i + j * self.nx
    }

    /// `(i, j)` of a cell index.
    #[inline]
    pub fn cell_coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    /// Lower-left corner `(x, t)` of a cell.
    #[inline]
    pub fn cell_origin(&self, cell: usize) -> (f64, f64) {
        let (i, j) = self.cell_coords(cell);
        (i as f64 * self.dx(), j as f64 * self.dt())
    }
}

/// Gauss-Legendre rule on the reference interval `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadRule {
    pub fn gauss_legendre(order: usize) -> Result<Self> {
        if order == 0 || order > MAX_QUAD_ORDER {
            return Err(Error::invalid(format!(
                "quadrature order must be in 1..={MAX_QUAD_ORDER}, got {order}"
            )));
        }
        let n = order;
        let mut points = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for k in 0..n.div_ceil(2) {
            // Chebyshev-like initial guess, then Newton on P_n.
            let mut z = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                let step = p / d;
                z -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, z);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            // map [-1, 1] -> [0, 1]
            points[k] = 0.5 * (1.0 - z);
            points[n - 1 - k] = 0.5 * (1.0 + z);
            weights[k] = 0.5 * w;
            weights[n - 1 - k] = 0.5 * w;
        }
        Ok(Self { points, weights })
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of tensor points per cell.
    pub fn points_per_cell(&self) -> usize {
        self.order() * self.order()
    }
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// A mesh together with the quadrature rule used on every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadGrid {
    mesh: SpaceTimeMesh,
    rule: QuadRule,
}

impl QuadGrid {
    pub fn new(mesh: SpaceTimeMesh, rule: QuadRule) -> Arc<Self> {
        Arc::new(Self { mesh, rule })
    }

    pub fn mesh(&self) -> &SpaceTimeMesh {
        &self.mesh
    }

    pub fn rule(&self) -> &QuadRule {
        &self.rule
    }

    pub fn points_per_cell(&self) -> usize {
        self.rule.points_per_cell()
    }

    pub fn sample_count(&self) -> usize {
        self.mesh.cell_count() * self.points_per_cell()
    }

    pub fn trace_sample_count(&self) -> usize {
        self.mesh.nt() * self.rule.order()
    }

    /// Physical coordinates `(x, t)` of quadrature point `q` in `cell`.
    #[inline]
    pub fn point(&self, cell: usize, q: usize) -> (f64, f64) {
        let n = self.rule.order();
        let (x0, t0) = self.mesh.cell_origin(cell);
        let pts = self.rule.points();
        (
            x0 + pts[q % n] * self.mesh.dx(),
            t0 + pts[q / n] * self.mesh.dt(),
        )
    }

    /// Integration weight of point `q` including the cell area.
    #[inline]
    pub fn weight(&self, q: usize) -> f64 {
        let n = self.rule.order();
        let w = self.rule.weights();
        w[q % n] * w[q / n] * self.mesh.cell_area()
    }

    /// Time of trace sample `s` (time-cell `s / n`, point `s % n`).
    #[inline]
    pub fn trace_time(&self, s: usize) -> f64 {
        let n = self.rule.order();
        (s / n) as f64 * self.mesh.dt() + self.rule.points()[s % n] * self.mesh.dt()
    }

    #[inline]
    pub fn trace_weight(&self, s: usize) -> f64 {
        self.rule.weights()[s % self.rule.order()] * self.mesh.dt()
    }

    pub fn trace_times(&self) -> Vec<f64> {
        (0..self.trace_sample_count()).map(|s| self.trace_time(s)).collect()
    }

    fn same_as(&self, other: &QuadGrid) -> bool {
        self.mesh == other.mesh && self.rule.order() == other.rule.order()
    }
}

/// A scalar field sampled at every quadrature point of `Q_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadField {
    grid: Arc<QuadGrid>,
    values: Vec<f64>,
}

impl QuadField {
    pub fn zeros(grid: &Arc<QuadGrid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Arc<QuadGrid>, value: f64) -> Self {
        Self {
            values: vec![value; grid.sample_count()],
            grid: Arc::clone(grid),
        }
    }

    pub fn from_fn(grid: &Arc<QuadGrid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let npc = grid.points_per_cell();
        let values = (0..grid.sample_count())
            .map(|s| {
                let (x, t) = grid.point(s / npc, s % npc);
                f(x, t)
            })
            .collect();
        Self {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn from_values(grid: &Arc<QuadGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.sample_count() {
            return Err(Error::invalid(format!(
                "field has {} samples, grid expects {}",
                values.len(),
                grid.sample_count()
            )));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub fn grid(&self) -> &Arc<QuadGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn cell_values(&self, cell: usize) -> &[f64] {
        let npc = self.grid.points_per_cell();
        &self.values[cell * npc..(cell + 1) * npc]
    }

    pub fn check_compatible(&self, other: &QuadField) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::invalid("fields live on different meshes or quadrature rules"))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &QuadField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            grid: Arc::clone(&self.grid),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// `self - other`
    pub fn sub(&self, other: &QuadField) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_squared().sqrt()
    }

    pub fn l2_norm_squared(&self) -> f64 {
        let npc = self.grid.points_per_cell();
        let mut total = 0.0;
        for chunk in self.values.chunks_exact(npc) {
            let mut cell_sum = 0.0;
            for (q, v) in chunk.iter().enumerate() {
                cell_sum += self.grid.weight(q) * v * v;
            }
            total += cell_sum;
        }
        total
    }

    pub fn l2_inner(&self, other: &QuadField) -> Result<f64> {
        self.check_compatible(other)?;
        let npc = self.grid.points_per_cell();
        let mut total = 0.0;
        for (a, b) in self.values.chunks_exact(npc).zip(other.values.chunks_exact(npc)) {
            let mut cell_sum = 0.0;
            for q in 0..npc {
                cell_sum += self.grid.weight(q) * a[q] * b[q];
            }
            total += cell_sum;
        }
        Ok(total)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `||y(., t)||_{L^2(0,1)}` at every trace time, integrating in `x` with
    /// the same rule.
    pub fn space_profile(&self) -> Vec<(f64, f64)> {
        let mesh = self.grid.mesh();
        let n = self.grid.rule().order();
        let wx = self.grid.rule().weights();
        let mut out = Vec::with_capacity(self.grid.trace_sample_count());
        for j in 0..mesh.nt() {
            for qt in 0..n {
                let mut acc = 0.0;
                for i in 0..mesh.nx() {
                    let cell = self.cell_values(mesh.cell_index(i, j));
                    let mut s = 0.0;
                    for qx in 0..n {
                        let v = cell[qx + n * qt];
                        s += wx[qx] * v * v;
                    }
                    acc += s * mesh.dx();
                }
                out.push((self.grid.trace_time(j * n + qt), acc.sqrt()));
            }
        }
        out
    }
}

/// Samples of a function of `t` along the edge `x = 1`, one per trace
/// quadrature point.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    grid: Arc<QuadGrid>,
    values: Vec<f64>,
}

impl BoundaryTrace {
    pub fn zeros(grid: &Arc<QuadGrid>) -> Self {
        Self {
            values: vec![0.0; grid.trace_sample_count()],
            grid: Arc::clone(grid),
        }
    }

    pub fn from_fn(grid: &Arc<QuadGrid>, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: (0..grid.trace_sample_count())
                .map(|s| f(grid.trace_time(s)))
                .collect(),
            grid: Arc::clone(grid),
        }
    }

    pub fn from_values(grid: &Arc<QuadGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.trace_sample_count() {
            return Err(Error::invalid(format!(
                "trace has {} samples, grid expects {}",
                values.len(),
                grid.trace_sample_count()
            )));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub fn grid(&self) -> &Arc<QuadGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn times(&self) -> Vec<f64> {
        self.grid.trace_times()
    }

    /// `(t, v)` pairs in increasing time.
    pub fn samples(&self) -> Vec<(f64, f64)> {
        self.times().into_iter().zip(self.values.iter().copied()).collect()
    }

    pub fn check_compatible(&self, other: &BoundaryTrace) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::invalid("traces live on different meshes or quadrature rules"))
        }
    }

    pub fn zip_map(&self, other: &BoundaryTrace, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            grid: Arc::clone(&self.grid),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn sub(&self, other: &BoundaryTrace) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn l2_norm(&self) -> f64 {
        let n = self.grid.rule().order();
        let mut total = 0.0;
        for (j, chunk) in self.values.chunks_exact(n).enumerate() {
            let mut s = 0.0;
            for (q, v) in chunk.iter().enumerate() {
                s += self.grid.trace_weight(j * n + q) * v * v;
            }
            total += s;
        }
        total.sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn build_mesh(nx: usize, nt: usize, t_final: f64) -> Result<SpaceTimeMesh> {
    SpaceTimeMesh::new(nx, nt, t_final)
}

pub fn tensor_quadrature(order: usize) -> Result<QuadRule> {
    QuadRule::gauss_legendre(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_mesh_matches_reported_size() {
        let m = build_mesh(100, 300, 3.0).unwrap();
        assert_relative_eq!(m.dx(), 0.01, epsilon = 1e-15);
        assert_relative_eq!(m.dt(), 0.01, epsilon = 1e-15);
        assert!((m.h() - 1.414e-2).abs() < 5e-5);
        assert_eq!(m.cell_count(), 30000);
    }

    #[test]
    fn tiny_meshes() {
        let m = build_mesh(1, 1, 3.0).unwrap();
        assert_eq!(m.cell_count(), 1);
        assert_eq!(m.cell_origin(0), (0.0, 0.0));
        assert_eq!(m.cell_area(), 3.0);

        let m = build_mesh(2, 3, 3.0).unwrap();
        assert_eq!(m.cell_count(), 6);
        assert_eq!(m.dx(), 0.5);
        assert_eq!(m.dt(), 1.0);
        assert_eq!(m.cell_coords(m.cell_index(1, 2)), (1, 2));
    }

    #[test]
    fn rejects_empty_mesh() {
        assert!(matches!(build_mesh(0, 3, 3.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_mesh(3, 0, 3.0), Err(Error::InvalidArgument(_))));
        assert!(build_mesh(3, 3, 0.0).is_err());
    }

    #[test]
    fn cell_areas_partition_domain() {
        for (nx, nt, t) in [(7, 13, 3.0), (100, 300, 3.0), (3, 5, 2.5)] {
            let m = build_mesh(nx, nt, t).unwrap();
            let total: f64 = (0..m.cell_count()).map(|_| m.cell_area()).sum();
            assert_relative_eq!(total, t, max_relative = 1e-12);
        }
    }

    #[test]
    fn midpoint_rule() {
        let r = tensor_quadrature(1).unwrap();
        assert_eq!(r.points(), &[0.5]);
        assert_eq!(r.weights(), &[1.0]);
    }

    #[test]
    fn quadrature_order_bounds() {
        assert!(tensor_quadrature(0).is_err());
        assert!(tensor_quadrature(11).is_err());
        for n in 1..=MAX_QUAD_ORDER {
            let r = tensor_quadrature(n).unwrap();
            let s: f64 = r.weights().iter().sum();
            assert_relative_eq!(s, 1.0, max_relative = 1e-14);
            assert!(r.points().windows(2).all(|w| w[0] < w[1]));
            assert!(r.points().iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn order_four_tensor_weights() {
        let r = tensor_quadrature(4).unwrap();
        assert_eq!(r.points_per_cell(), 16);
        let s: f64 = r
            .weights()
            .iter()
            .flat_map(|a| r.weights().iter().map(move |b| a * b))
            .sum();
        assert_relative_eq!(s, 1.0, max_relative = 1e-14);
        let i7: f64 = r
            .points()
            .iter()
            .zip(r.weights())
            .map(|(x, w)| w * x.powi(7))
            .sum();
        assert_relative_eq!(i7, 1.0 / 8.0, max_relative = 1e-13);
    }

    #[test]
    fn norms_of_simple_fields() {
        let grid = QuadGrid::new(build_mesh(8, 8, 3.0).unwrap(), tensor_quadrature(4).unwrap());
        let one = QuadField::constant(&grid, 1.0);
        assert_relative_eq!(one.l2_norm(), 3f64.sqrt(), max_relative = 1e-13);
        assert_eq!(QuadField::zeros(&grid).l2_norm(), 0.0);
        let s = QuadField::from_fn(&grid, |x, _| (std::f64::consts::PI * x).sin());
        assert!((s.l2_norm() - 1.5f64.sqrt()).abs() <= 1e-6);
        let tr = BoundaryTrace::from_fn(&grid, |_| 2.0);
        assert_relative_eq!(tr.l2_norm(), (4.0f64 * 3.0).sqrt(), max_relative = 1e-13);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let g1 = QuadGrid::new(build_mesh(2, 2, 3.0).unwrap(), tensor_quadrature(2).unwrap());
        let g2 = QuadGrid::new(build_mesh(2, 3, 3.0).unwrap(), tensor_quadrature(2).unwrap());
        let a = QuadField::zeros(&g1);
        let b = QuadField::zeros(&g2);
        assert!(a.l2_inner(&b).is_err());
        assert!(QuadField::from_values(&g1, vec![0.0; 3]).is_err());
        assert!(BoundaryTrace::from_values(&g1, vec![0.0; 3]).is_err());
    }

    #[test]
    fn space_profile_of_constant() {
        let grid = QuadGrid::new(build_mesh(4, 6, 3.0).unwrap(), tensor_quadrature(3).unwrap());
        let f = QuadField::constant(&grid, 2.0);
        let prof = f.space_profile();
        assert_eq!(prof.len(), grid.trace_sample_count());
        assert!(prof.windows(2).all(|w| w[0].0 < w[1].0));
        for (_, v) in prof {
            assert_relative_eq!(v, 2.0, max_relative = 1e-13);
        }
    }
}
