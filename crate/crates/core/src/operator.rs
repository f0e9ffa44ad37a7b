//! Matrix-free linear operators.
//!
//! An operator is anything that can multiply a vector; the matrix entries are
//! never required. Inverse operators back `apply` with an iterative solve, so
//! every method returns `Result`.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// A linear map exposed only through products with vectors.
///
/// `apply` and `apply_transpose` must be deterministic for fixed operator
/// settings, and must satisfy `<u, Av> = <A^T u, v>` up to roundoff (solver
/// tolerance for inverse operators).
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>>;

    fn apply_transpose(&self, v: &[f64]) -> Result<Vec<f64>>;

    /// Whether `A = A^T` is guaranteed; lets gradient code skip transpose
    /// applications.
    fn is_symmetric(&self) -> bool {
        false
    }
}

/// Exact trace by `L` basis-vector applications (expensive for large
/// operators; each basis application of an inverse operator is a full solve).
pub fn exact_trace<A: LinearOperator + ?Sized>(op: &A) -> Result<f64> {
    let n = op.dim();
    let diag: Result<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            Ok(op.apply(&e)?[i])
        })
        .collect();
    // Ordered sequential reduction keeps the result independent of thread
    // scheduling.
    Ok(diag?.iter().sum())
}

/// The identity, mostly useful in tests.
#[derive(Debug, Clone, Copy)]
pub struct IdentityOperator {
    pub dim: usize,
}

impl LinearOperator for IdentityOperator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        Ok(v.to_vec())
    }

    fn apply_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.apply(v)
    }

    fn is_symmetric(&self) -> bool {
        true
    }
}
