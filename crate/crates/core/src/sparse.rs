//! Minimal sparse layer: triplet accumulation, a CSR form with deterministic
//! matvecs, and direct factorizations delegated to faer.
//!
//! Assembly pushes triplets in element order; duplicate entries are summed in
//! a fixed order when compressing, so assembled operators are bitwise
//! reproducible across thread counts. Factorizations run with sequential
//! parallelism for the same reason.

use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use std::sync::Once;
use thiserror::Error;

static FAER_SEQ_INIT: Once = Once::new();

/// Pin faer to sequential execution. Factorizations are then bitwise
/// reproducible run to run; the crate's own loops carry the parallelism with
/// a fixed reduction order.
pub(crate) fn ensure_deterministic_solves() {
    FAER_SEQ_INIT.call_once(|| {
        faer::set_global_parallelism(faer::Par::Seq);
    });
}

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("matrix construction failed: {0}")]
    Construction(String),
    #[error("factorization failed (matrix singular or not positive definite)")]
    Factorization,
}

/// Triplet accumulator for assembly.
#[derive(Clone, Debug)]
pub struct TripletList {
    pub nrows: usize,
    pub ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletList {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        TripletList { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        TripletList { nrows, ncols, entries: Vec::with_capacity(cap) }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    pub fn extend_from(&mut self, other: &TripletList, row_offset: usize, col_offset: usize) {
        for &(r, c, v) in &other.entries {
            self.push(r + row_offset, c + col_offset, v);
        }
    }

    /// Append the transpose of `other` at the given offset.
    pub fn extend_transposed(&mut self, other: &TripletList, row_offset: usize, col_offset: usize) {
        for &(r, c, v) in &other.entries {
            self.push(c + row_offset, r + col_offset, v);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for e in &mut self.entries {
            e.2 *= factor;
        }
    }

    pub fn to_csr(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(self.nrows, self.ncols, &self.entries)
    }
}

/// Compressed sparse rows with merged duplicates.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_triplets(nrows: usize, ncols: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..entries.len()).collect();
        // Stable sort: duplicates keep insertion order, so their sum is
        // evaluated in a fixed sequence.
        order.sort_by_key(|&k| (entries[k].0, entries[k].1));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &k in &order {
            let (r, c, v) = entries[k];
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix { nrows, ncols, indptr, indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    /// y = A x, rows accumulated left to right (deterministic).
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[r] = acc;
        }
        y
    }

    /// y = A^T x.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                y[*c] += v * x[r];
            }
        }
        y
    }

    /// Largest absolute asymmetry |A - A^T| (for square matrices).
    pub fn max_asymmetry(&self) -> f64 {
        assert_eq!(self.nrows, self.ncols);
        let mut m: f64 = 0.0;
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                let vt = self.get(*c, r);
                m = m.max((v - vt).abs());
            }
        }
        m
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>, SparseError> {
        let mut trips = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                trips.push(Triplet::new(r, *c, *v));
            }
        }
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trips)
            .map_err(|e| SparseError::Construction(format!("{e:?}")))
    }
}

fn to_col(x: &[f64]) -> faer::Mat<f64> {
    faer::Mat::from_fn(x.len(), 1, |i, _| x[i])
}

fn from_col(m: &faer::Mat<f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

/// Sparse LU with partial pivoting (general square systems, including the
/// symmetric indefinite saddle blocks).
pub struct LuSolver {
    lu: Lu<usize, f64>,
    n: usize,
}

impl LuSolver {
    pub fn new(mat: &CsrMatrix) -> Result<Self, SparseError> {
        assert_eq!(mat.nrows, mat.ncols);
        let a = mat.to_faer()?;
        let sym = SymbolicLu::try_new(a.symbolic()).map_err(|_| SparseError::Factorization)?;
        let lu = Lu::try_new_with_symbolic(sym, a.as_ref()).map_err(|_| SparseError::Factorization)?;
        Ok(LuSolver { lu, n: mat.nrows })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        use faer::prelude::Solve;
        let x = self.lu.solve(to_col(b));
        from_col(&x)
    }
}

/// Sparse Cholesky for symmetric positive definite systems.
pub struct LltSolver {
    llt: Llt<usize, f64>,
    n: usize,
}

impl LltSolver {
    pub fn new(mat: &CsrMatrix) -> Result<Self, SparseError> {
        assert_eq!(mat.nrows, mat.ncols);
        let a = mat.to_faer()?;
        let sym = SymbolicLlt::try_new(a.symbolic(), faer::Side::Lower)
            .map_err(|_| SparseError::Factorization)?;
        let llt = Llt::try_new_with_symbolic(sym, a.as_ref(), faer::Side::Lower)
            .map_err(|_| SparseError::Factorization)?;
        Ok(LltSolver { llt, n: mat.nrows })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        use faer::prelude::Solve;
        let x = self.llt.solve(to_col(b));
        from_col(&x)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn csr_merges_duplicates() {
        let mut t = TripletList::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(0, 0, 2.0);
        t.push(1, 1, 5.0);
        t.push(0, 1, -1.0);
        let m = t.to_csr();
        assert_eq!(m.nnz(), 3);
        assert_relative_eq!(m.get(0, 0), 3.0);
        assert_relative_eq!(m.get(0, 1), -1.0);
        assert_relative_eq!(m.get(1, 1), 5.0);
        assert_relative_eq!(m.get(1, 0), 0.0);
    }

    #[test]
    fn matvec_and_transpose() {
        let mut t = TripletList::new(2, 3);
        t.push(0, 0, 1.0);
        t.push(0, 2, 2.0);
        t.push(1, 1, 3.0);
        let m = t.to_csr();
        let y = m.matvec(&[1.0, 1.0, 1.0]);
        assert_eq!(y, vec![3.0, 3.0]);
        let z = m.matvec_transpose(&[1.0, 2.0]);
        assert_eq!(z, vec![1.0, 6.0, 2.0]);
    }

    #[test]
    fn lu_solves_saddle_block() {
        // [2 1; 1 0] x = [3, 1] -> x = (1, 1); zero diagonal needs pivoting.
        let mut t = TripletList::new(2, 2);
        t.push(0, 0, 2.0);
        t.push(0, 1, 1.0);
        t.push(1, 0, 1.0);
        let lu = LuSolver::new(&t.to_csr()).unwrap();
        let x = lu.solve(&[3.0, 1.0]);
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-13);
        assert_relative_eq!(x[1], 1.0, epsilon = 1e-13);
    }

    #[test]
    fn llt_solves_spd() {
        let mut t = TripletList::new(2, 2);
        t.push(0, 0, 4.0);
        t.push(0, 1, 1.0);
        t.push(1, 0, 1.0);
        t.push(1, 1, 3.0);
        let llt = LltSolver::new(&t.to_csr()).unwrap();
        let x = llt.solve(&[5.0, 4.0]);
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-13);
        assert_relative_eq!(x[1], 1.0, epsilon = 1e-13);
    }
}
