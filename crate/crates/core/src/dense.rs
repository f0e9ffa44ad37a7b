//! Dense matrices, used as the test oracle for everything matrix-free.
//!
//! Kept deliberately small: row-major storage, LU with partial pivoting, and
//! a hard cap on realizing operators densely so the O(L^3) paths stay cheap.

use crate::error::{Error, Result};
use crate::operator::LinearOperator;

/// Maximum dimension for [`dense_realize`].
pub const DENSE_CAP: usize = 512;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    entries: Vec<f64>,
    symmetric: bool,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, entries: vec![0.0; n * n], symmetric: false }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m.symmetric = true;
        m
    }

    pub fn from_rows(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "dense matrix needs {} entries, got {}",
                n * n,
                entries.len()
            )));
        }
        Ok(Self { n, entries, symmetric: false })
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m.symmetric = true;
        m
    }

    /// Mark the matrix as symmetric after verifying it actually is.
    pub fn declared_symmetric(mut self) -> Result<Self> {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.get(i, j) != self.get(j, i) {
                    return Err(Error::InvalidArgument(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        self.symmetric = true;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.entries[i * self.n + j] = value;
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.set(j, i, self.get(i, j));
            }
        }
        t.symmetric = self.symmetric;
        t
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if other.n != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: other.n });
        }
        let entries = self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect();
        Ok(DenseMatrix { n: self.n, entries, symmetric: self.symmetric && other.symmetric })
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if other.n != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: other.n });
        }
        let n = self.n;
        let mut out = DenseMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.entries[i * n + j] += aik * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    /// LU factorization with partial pivoting, reused by solve and inverse.
    fn lu(&self) -> Result<(Vec<f64>, Vec<usize>)> {
        let n = self.n;
        let mut lu = self.entries.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let mut pivot = col;
            let mut best = lu[col * n + col].abs();
            for row in (col + 1)..n {
                let v = lu[row * n + col].abs();
                if v > best {
                    best = v;
                    pivot = row;
                }
            }
            if best == 0.0 {
                return Err(Error::SingularMatrix);
            }
            if pivot != col {
                for j in 0..n {
                    lu.swap(col * n + j, pivot * n + j);
                }
                perm.swap(col, pivot);
            }
            let diag = lu[col * n + col];
            for row in (col + 1)..n {
                let factor = lu[row * n + col] / diag;
                lu[row * n + col] = factor;
                for j in (col + 1)..n {
                    lu[row * n + j] -= factor * lu[col * n + j];
                }
            }
        }
        Ok((lu, perm))
    }

    /// Direct solve of `self * x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: b.len() });
        }
        let (lu, perm) = self.lu()?;
        Ok(lu_solve_one(&lu, &perm, self.n, b))
    }

    pub fn inverse(&self) -> Result<DenseMatrix> {
        let n = self.n;
        let (lu, perm) = self.lu()?;
        let mut inv = DenseMatrix::zeros(n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = lu_solve_one(&lu, &perm, n, &e);
            for (i, &value) in col.iter().enumerate() {
                inv.set(i, j, value);
            }
            e[j] = 0.0;
        }
        Ok(inv)
    }

    /// Trace of the inverse via one LU factorization.
    pub fn inverse_trace(&self) -> Result<f64> {
        let n = self.n;
        let (lu, perm) = self.lu()?;
        let mut trace = 0.0;
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            trace += lu_solve_one(&lu, &perm, n, &e)[j];
            e[j] = 0.0;
        }
        Ok(trace)
    }
}

fn lu_solve_one(lu: &[f64], perm: &[usize], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x: Vec<f64> = perm.iter().map(|&p| b[p]).collect();
    for i in 1..n {
        let mut acc = x[i];
        for j in 0..i {
            acc -= lu[i * n + j] * x[j];
        }
        x[i] = acc;
    }
    for i in (0..n).rev() {
        let mut acc = x[i];
        for j in (i + 1)..n {
            acc -= lu[i * n + j] * x[j];
        }
        x[i] = acc / lu[i * n + i];
    }
    x
}

impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: v.len() });
        }
        let n = self.n;
        let mut out = vec![0.0; n];
        for (i, out_i) in out.iter_mut().enumerate() {
            let row = &self.entries[i * n..(i + 1) * n];
            *out_i = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
        Ok(out)
    }

    fn apply_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: v.len() });
        }
        let n = self.n;
        let mut out = vec![0.0; n];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let row = &self.entries[i * n..(i + 1) * n];
            for (out_j, &r) in out.iter_mut().zip(row) {
                *out_j += r * vi;
            }
        }
        Ok(out)
    }

    fn is_symmetric(&self) -> bool {
        self.symmetric
    }
}

/// Materialize an operator column by column: column `j` is `apply(e_j)`.
pub fn dense_realize<A: LinearOperator + ?Sized>(op: &A) -> Result<DenseMatrix> {
    let n = op.dim();
    if n > DENSE_CAP {
        return Err(Error::DenseCapExceeded { dim: n, cap: DENSE_CAP });
    }
    let mut m = DenseMatrix::zeros(n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = op.apply(&e)?;
        for (i, &value) in col.iter().enumerate() {
            m.set(i, j, value);
        }
        e[j] = 0.0;
    }
    Ok(m)
}
