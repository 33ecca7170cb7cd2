//! Compressed sparse row storage and an unpreconditioned conjugate gradient
//! solver.

use crate::{Error, Result};

/// Square sparse matrix in CSR layout. Column indices are sorted within
/// each row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix with the given sparsity pattern and zero values.
    /// `pattern[r]` must be sorted and free of duplicates.
    pub fn from_pattern(pattern: &[Vec<usize>]) -> Self {
        let dim = pattern.len();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for row in pattern {
            debug_assert!(row.windows(2).all(|w| w[0] < w[1]));
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let values = vec![0.0; col_idx.len()];
        Self {
            dim,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Dense row-major input; exact zeros are dropped.
    pub fn from_dense(dim: usize, dense: &[f64]) -> Self {
        assert_eq!(dense.len(), dim * dim);
        let pattern: Vec<Vec<usize>> = (0..dim)
            .map(|r| (0..dim).filter(|&c| dense[r * dim + c] != 0.0).collect())
            .collect();
        let mut m = Self::from_pattern(&pattern);
        for r in 0..dim {
            for idx in m.row_ptr[r]..m.row_ptr[r + 1] {
                m.values[idx] = dense[r * dim + m.col_idx[idx]];
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn position(&self, row: usize, col: usize) -> Option<usize> {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        self.col_idx[range.clone()]
            .binary_search(&col)
            .ok()
            .map(|off| range.start + off)
    }

    /// Stored value at `(row, col)`, zero if not in the pattern.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.position(row, col).map_or(0.0, |p| self.values[p])
    }

    /// Adds to an entry of the pattern. Panics if `(row, col)` is not stored.
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        let p = self
            .position(row, col)
            .unwrap_or_else(|| panic!("entry ({row}, {col}) is not in the sparsity pattern"));
        self.values[p] += value;
    }

    /// `(column, value)` pairs of one row.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub(crate) fn row_mut(&mut self, row: usize) -> (&[usize], &mut [f64]) {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        (&self.col_idx[range.clone()], &mut self.values[range])
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[idx] * x[self.col_idx[idx]];
            }
            *out = acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.matvec_into(x, &mut y);
        y
    }

    /// Exact structural and numerical symmetry of stored entries.
    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|r| self.row(r).all(|(c, v)| self.get(c, r) == v))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Result of a converged CG solve.
#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `||Ax - b|| / ||b||` recomputed from the returned `x`.
    pub relative_residual: f64,
}

/// Conjugate gradients from the zero initial guess until
/// `||Ax - b||_2 <= rel_tol * ||b||_2`.
pub fn solve_cg(a: &CsrMatrix, b: &[f64], rel_tol: f64, max_iter: usize) -> Result<CgSolution> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "right-hand side has length {}, operator dimension is {n}",
            b.len()
        )));
    }
    let mut x = vec![0.0; n];
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(CgSolution {
            x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let target = rel_tol * b_norm;
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut iterations = 0;
    while iterations < max_iter {
        if rr.sqrt() <= target {
            break;
        }
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
        iterations += 1;
    }
    // The recursive residual drifts from the true one; judge on the latter.
    let mut true_r = a.matvec(&x);
    for (t, bi) in true_r.iter_mut().zip(b) {
        *t = bi - *t;
    }
    let relative_residual = norm2(&true_r) / b_norm;
    if relative_residual > rel_tol {
        return Err(Error::NoConvergence {
            iterations,
            residual: relative_residual,
        });
    }
    Ok(CgSolution {
        x,
        iterations,
        relative_residual,
    })
}
