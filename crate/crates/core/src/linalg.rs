//! Sparse symmetric positive definite matrices: storage, Cholesky
//! factorization and solves.
//!
//! Matrices keep their upper triangle in compressed rows with the diagonal
//! first in every row. The same arrays read as compressed columns describe
//! the lower triangle, which is what the supernodal Cholesky of `faer`
//! consumes. A Jacobi-preconditioned conjugate gradient is available for
//! meshes too large to factor.

use std::sync::Arc;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{LltError, LltRegularization};
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, simplicial::SimplicialLltRef, supernodal::SupernodalLltRef,
    CholeskySymbolicParams, LltRef, SymbolicCholesky, SymbolicCholeskyRaw, SymmetricOrdering,
};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::perm::PermRef;
use faer::{Conj, MatMut, Par, Side};

use crate::error::{Error, Result};

/// Relative residual above which [`SparseSpd::solve_with`] performs one step
/// of iterative refinement.
pub const REFINE_THRESHOLD: f64 = 1e-10;

/// Default relative-residual tolerance of the conjugate gradient fallback.
pub const CG_TOLERANCE: f64 = 1e-10;

/// Symmetric matrix stored as its upper triangle, row-compressed.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSpd {
    dim: usize,
    row_ptr: Vec<u32>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl SparseSpd {
    /// Builds a matrix from upper-triangle rows. Column indices in each row
    /// must be strictly increasing, start at the diagonal and stay below
    /// `dim`.
    pub fn from_upper_csr(
        dim: usize,
        row_ptr: Vec<u32>,
        col_idx: Vec<u32>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != dim + 1 || row_ptr[0] != 0 {
            return Err(Error::invalid("row pointer length must be dim + 1"));
        }
        if col_idx.len() != values.len() || *row_ptr.last().unwrap() as usize != col_idx.len() {
            return Err(Error::invalid("row pointer, indices and values disagree"));
        }
        for i in 0..dim {
            let row = &col_idx[row_ptr[i] as usize..row_ptr[i + 1] as usize];
            if row.first().map(|&c| c as usize) != Some(i) {
                return Err(Error::invalid(format!("row {i} must start with its diagonal")));
            }
            if row.windows(2).any(|w| w[0] >= w[1]) || row.iter().any(|&c| c as usize >= dim) {
                return Err(Error::invalid(format!("row {i} has unsorted or out-of-range columns")));
            }
        }
        Ok(Self {
            dim,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Upper triangle of a dense symmetric matrix; exact zeros off the
    /// diagonal are dropped.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut row_ptr = vec![0u32];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::invalid("dense matrix must be square"));
            }
            for (j, &v) in row.iter().enumerate().skip(i) {
                if (rows[j][i] - v).abs() > 0.0 {
                    return Err(Error::invalid(format!("entry ({i},{j}) is not symmetric")));
                }
                if j == i || v != 0.0 {
                    col_idx.push(j as u32);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len() as u32);
        }
        Self::from_upper_csr(dim, row_ptr, col_idx, values)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: (0..=dim as u32).collect(),
            col_idx: (0..dim as u32).collect(),
            values: vec![1.0; dim],
        }
    }

    /// A matrix with the same pattern and new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::invalid("value count does not match pattern"));
        }
        Ok(Self {
            dim: self.dim,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Stored (upper-triangle) entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[u32] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Entry `(i, j)` of the full symmetric matrix.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        let lo = self.row_ptr[r] as usize;
        let hi = self.row_ptr[r + 1] as usize;
        match self.col_idx[lo..hi].binary_search(&(c as u32)) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.values[self.row_ptr[i] as usize])
            .collect()
    }

    /// `y = M x` using both triangles.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!(
                "vector has length {}, matrix has dimension {}",
                x.len(),
                self.dim
            )));
        }
        let mut y = vec![0.0; self.dim];
        for i in 0..self.dim {
            let lo = self.row_ptr[i] as usize;
            let hi = self.row_ptr[i + 1] as usize;
            let xi = x[i];
            let mut acc = self.values[lo] * xi;
            for k in lo + 1..hi {
                let j = self.col_idx[k] as usize;
                let v = self.values[k];
                acc += v * x[j];
                y[j] += v * xi;
            }
            y[i] += acc;
        }
        Ok(y)
    }

    /// `||M x - b|| / ||b||`, or `||M x||` when `b = 0`.
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> Result<f64> {
        let mx = self.matvec(x)?;
        let r = norm(&mx.iter().zip(b).map(|(a, c)| a - c).collect::<Vec<_>>());
        let nb = norm(b);
        Ok(if nb > 0.0 { r / nb } else { r })
    }

    fn as_faer(&self) -> SparseColMatRef<'_, u32, f64> {
        // upper CSR == lower CSC
        let sym = SymbolicSparseColMatRef::new_checked(
            self.dim,
            self.dim,
            &self.row_ptr,
            None,
            &self.col_idx,
        );
        SparseColMatRef::new(sym, &self.values)
    }

    /// Factor and solve, then refine once if the residual is above
    /// [`REFINE_THRESHOLD`].
    pub fn solve_with(&self, factor: &SpdFactor, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = factor.solve(b)?;
        if self.relative_residual(&x, b)? > REFINE_THRESHOLD {
            let mx = self.matvec(&x)?;
            let r: Vec<f64> = b.iter().zip(&mx).map(|(a, c)| a - c).collect();
            let dx = factor.solve(&r)?;
            for (xi, di) in x.iter_mut().zip(dx) {
                *xi += di;
            }
        }
        Ok(x)
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Elimination order used by the factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ordering {
    /// Rows in stored order.
    Natural,
    /// Approximate minimum degree.
    #[default]
    FillReducing,
}

/// Symbolic analysis of a sparsity pattern, reusable for every matrix with
/// the same pattern.
#[derive(Debug, Clone)]
pub struct SymbolicFactor {
    inner: Arc<SymbolicCholesky<u32>>,
    dim: usize,
    nnz: usize,
}

impl SymbolicFactor {
    pub fn analyze(m: &SparseSpd, ordering: Ordering) -> Result<Self> {
        // The identity variant skips the side conversion, so the natural
        // order goes through an explicit permutation.
        let ident: Vec<u32> = (0..m.dim() as u32).collect();
        let ord = match ordering {
            Ordering::Natural => {
                SymmetricOrdering::Custom(PermRef::new_checked(&ident, &ident, m.dim()))
            }
            Ordering::FillReducing => SymmetricOrdering::Amd,
        };
        let inner = factorize_symbolic_cholesky(
            m.as_faer().symbolic(),
            Side::Lower,
            ord,
            CholeskySymbolicParams::default(),
        )
        .map_err(|e| Error::Solver(format!("symbolic analysis failed: {e:?}")))?;
        Ok(Self {
            inner: Arc::new(inner),
            dim: m.dim(),
            nnz: m.nnz(),
        })
    }

    pub fn factor_nnz(&self) -> usize {
        self.inner.len_val()
    }

    /// Numeric factorization of a matrix with the analysed pattern.
    pub fn factorize(&self, m: &SparseSpd) -> Result<SpdFactor> {
        if m.dim() != self.dim || m.nnz() != self.nnz {
            return Err(Error::invalid("matrix pattern differs from the analysed one"));
        }
        let mut values = vec![0.0; self.inner.len_val()];
        let par = Par::Seq;
        let mut mem = MemBuffer::try_new(self.inner.factorize_numeric_llt_scratch::<f64>(par, Default::default()))
            .map_err(|_| Error::Solver("out of memory".into()))?;
        self.inner
            .factorize_numeric_llt(
                &mut values,
                m.as_faer(),
                Side::Lower,
                LltRegularization::default(),
                par,
                MemStack::new(&mut mem),
                Default::default(),
            )
            .map_err(|LltError::NonPositivePivot { index }| Error::NotPositiveDefinite { index })?;
        Ok(SpdFactor {
            symbolic: self.clone(),
            values,
        })
    }
}

/// Numeric Cholesky factor `P M P^T = L L^T`.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    symbolic: SymbolicFactor,
    values: Vec<f64>,
}

impl SpdFactor {
    pub fn dim(&self) -> usize {
        self.symbolic.dim
    }

    /// Stored entries of `L`.
    pub fn factor_nnz(&self) -> usize {
        self.values.len()
    }

    /// Ratio of factor entries to matrix (lower-triangle) entries.
    pub fn fill_ratio(&self) -> f64 {
        self.values.len() as f64 / self.symbolic.nnz as f64
    }

    /// Diagonal of `L` in elimination order.
    pub fn pivots(&self) -> Vec<f64> {
        let sym = &*self.symbolic.inner;
        match sym.raw() {
            SymbolicCholeskyRaw::Simplicial(s) => {
                let llt = SimplicialLltRef::new(s, &self.values);
                let col_ptr = s.col_ptr();
                (0..s.ncols())
                    .map(|j| llt.values()[col_ptr[j] as usize])
                    .collect()
            }
            SymbolicCholeskyRaw::Supernodal(s) => {
                let llt = SupernodalLltRef::new(s, &self.values);
                let mut out = Vec::with_capacity(s.ncols());
                for k in 0..s.n_supernodes() {
                    let node = llt.supernode(k).val();
                    for c in 0..node.ncols() {
                        out.push(node[(c, c)]);
                    }
                }
                out
            }
        }
    }

    /// `(max pivot / min pivot)^2`, a cheap lower bound on the 2-norm
    /// condition number.
    pub fn condition_estimate(&self) -> f64 {
        let p = self.pivots();
        let (lo, hi) = p
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        (hi / lo).powi(2)
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(Error::invalid(format!(
                "right-hand side has length {}, factor has dimension {}",
                b.len(),
                self.dim()
            )));
        }
        let mut x = b.to_vec();
        let sym = &*self.symbolic.inner;
        let par = Par::Seq;
        let mut mem = MemBuffer::new(sym.solve_in_place_scratch::<f64>(1, par));
        LltRef::new(sym, &self.values).solve_in_place_with_conj(
            Conj::No,
            MatMut::from_column_major_slice_mut(&mut x, self.dim(), 1),
            par,
            MemStack::new(&mut mem),
        );
        Ok(x)
    }
}

/// Analyse and factor in one call.
pub fn factorize(m: &SparseSpd) -> Result<SpdFactor> {
    factorize_with_ordering(m, Ordering::default())
}

pub fn factorize_with_ordering(m: &SparseSpd, ordering: Ordering) -> Result<SpdFactor> {
    SymbolicFactor::analyze(m, ordering)?.factorize(m)
}

pub fn solve(factor: &SpdFactor, b: &[f64]) -> Result<Vec<f64>> {
    factor.solve(b)
}

#[derive(Debug, Clone, Copy)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradient. Fails with a solver error if
/// the tolerance is not met in `max_iter` steps.
pub fn conjugate_gradient(
    m: &SparseSpd,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, CgReport)> {
    let n = m.dim();
    if b.len() != n {
        return Err(Error::invalid("right-hand side length does not match matrix"));
    }
    let inv_diag: Vec<f64> = m
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let nb = norm(b);
    let mut x = vec![0.0; n];
    if nb == 0.0 {
        return Ok((
            x,
            CgReport {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, c)| a * c).sum();
    for it in 1..=max_iter {
        let ap = m.matvec(&p)?;
        let pap: f64 = p.iter().zip(&ap).map(|(a, c)| a * c).sum();
        if pap <= 0.0 {
            return Err(Error::NotPositiveDefinite { index: it });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = norm(&r) / nb;
        if rel <= tol {
            return Ok((
                x,
                CgReport {
                    iterations: it,
                    relative_residual: rel,
                },
            ));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, c)| a * c).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Solver(format!(
        "conjugate gradient did not reach {tol:e} in {max_iter} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_by_two() -> SparseSpd {
        SparseSpd::from_dense(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap()
    }

    fn random_spd(n: usize, seed: u64) -> SparseSpd {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // sparse B, M = B^T B + I
        let mut b = vec![vec![0.0; n]; n];
        for row in b.iter_mut() {
            for _ in 0..4 {
                let j = rng.random_range(0..n);
                row[j] = rng.random_range(-1.0..1.0);
            }
        }
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let s: f64 = (0..n).map(|k| b[k][i] * b[k][j]).sum();
                m[i][j] = s + if i == j { 1.0 } else { 0.0 };
            }
        }
        for i in 0..n {
            for j in 0..i {
                m[i][j] = m[j][i];
            }
        }
        SparseSpd::from_dense(&m).unwrap()
    }

    #[test]
    fn identity_pivots() {
        let f = factorize(&SparseSpd::identity(5)).unwrap();
        assert_eq!(f.pivots(), vec![1.0; 5]);
        assert_eq!(f.solve(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn hand_cholesky_pivots() {
        let f = factorize_with_ordering(&two_by_two(), Ordering::Natural).unwrap();
        let p = f.pivots();
        assert_relative_eq!(p[0], 2.0, max_relative = 1e-15);
        assert_relative_eq!(p[1], 2f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn indefinite_is_rejected() {
        let m = SparseSpd::from_dense(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(factorize(&m), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn hand_solve() {
        let m = two_by_two();
        let f = factorize(&m).unwrap();
        let x = m.solve_with(&f, &[8.0, 7.0]).unwrap();
        assert_relative_eq!(x[0], 1.25, max_relative = 1e-14);
        assert_relative_eq!(x[1], 1.5, max_relative = 1e-14);
        assert_eq!(f.solve(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(f.solve(&[1.0]).is_err());
    }

    #[test]
    fn random_spd_residual() {
        let m = random_spd(50, 7);
        let f = factorize(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = m.solve_with(&f, &b).unwrap();
        assert!(m.relative_residual(&x, &b).unwrap() <= 1e-10);
        assert!(f.condition_estimate() >= 1.0);
    }

    #[test]
    fn repeated_factorization_is_bit_identical() {
        let m = random_spd(40, 3);
        let b: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let x1 = factorize(&m).unwrap().solve(&b).unwrap();
        let x2 = factorize(&m).unwrap().solve(&b).unwrap();
        assert_eq!(x1, x2);
    }

    #[test]
    fn symbolic_reuse_requires_same_pattern() {
        let m = random_spd(20, 1);
        let sym = SymbolicFactor::analyze(&m, Ordering::FillReducing).unwrap();
        let scaled = m.with_values(m.values().iter().map(|v| 2.0 * v).collect()).unwrap();
        let b = vec![1.0; 20];
        let x1 = sym.factorize(&m).unwrap().solve(&b).unwrap();
        let x2 = sym.factorize(&scaled).unwrap().solve(&b).unwrap();
        for (a, c) in x1.iter().zip(&x2) {
            assert_relative_eq!(*a, 2.0 * c, max_relative = 1e-10);
        }
        assert!(sym.factorize(&SparseSpd::identity(20)).is_err());
    }

    #[test]
    fn conjugate_gradient_agrees_with_cholesky() {
        let m = random_spd(60, 5);
        let b: Vec<f64> = (0..60).map(|i| 1.0 + (i % 3) as f64).collect();
        let (x, rep) = conjugate_gradient(&m, &b, CG_TOLERANCE, 500).unwrap();
        assert!(rep.relative_residual <= CG_TOLERANCE);
        let xd = factorize(&m).unwrap().solve(&b).unwrap();
        for (a, c) in x.iter().zip(&xd) {
            assert!((a - c).abs() <= 1e-8 * (1.0 + c.abs()));
        }
    }

    #[test]
    fn malformed_storage() {
        assert!(SparseSpd::from_upper_csr(2, vec![0, 1, 2], vec![1, 1], vec![1.0, 1.0]).is_err());
        assert!(SparseSpd::from_dense(&[vec![1.0, 2.0], vec![3.0, 1.0]]).is_err());
        let m = two_by_two();
        assert_eq!(m.get(1, 0), 2.0);
        assert_eq!(m.matvec(&[1.0, 1.0]).unwrap(), vec![6.0, 5.0]);
    }
}
