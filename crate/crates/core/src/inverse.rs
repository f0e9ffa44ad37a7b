//! `M^{-1}` as a matrix-free operator backed by BiCGSTAB.

use crate::bicgstab::{bicgstab_solve, default_max_iter, DEFAULT_TOL};
use crate::ensemble::CyclicTridiagonalMatrix;
use crate::error::Result;
use crate::operator::LinearOperator;

/// Solver settings shared by the operators a run constructs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl SolverSettings {
    pub fn for_dim(l: usize) -> Self {
        Self { tol: DEFAULT_TOL, max_iter: default_max_iter(l) }
    }
}

/// The inverse of an ensemble member. `apply` solves `M x = b`;
/// `apply_transpose` solves `M^T x = b` directly (the transpose of a cyclic
/// tridiagonal matrix is available in closed form).
#[derive(Debug, Clone)]
pub struct InverseOperator {
    base: CyclicTridiagonalMatrix,
    settings: SolverSettings,
}

impl InverseOperator {
    pub fn new(base: CyclicTridiagonalMatrix, settings: SolverSettings) -> Self {
        Self { base, settings }
    }

    pub fn with_defaults(base: CyclicTridiagonalMatrix) -> Self {
        let settings = SolverSettings::for_dim(base.dim());
        Self::new(base, settings)
    }

    pub fn base(&self) -> &CyclicTridiagonalMatrix {
        &self.base
    }

    pub fn settings(&self) -> SolverSettings {
        self.settings
    }
}

impl LinearOperator for InverseOperator {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        bicgstab_solve(&self.base, v, self.settings.tol, self.settings.max_iter, false)
            .map(|out| out.x)
    }

    fn apply_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        bicgstab_solve(&self.base, v, self.settings.tol, self.settings.max_iter, true)
            .map(|out| out.x)
    }
}
