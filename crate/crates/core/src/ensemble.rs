//! The random cyclic tridiagonal ensemble.
//!
//! Members are `L x L` matrices with unit diagonal and noisy cyclic
//! off-diagonals,
//!
//! ```text
//! M(i, j) = 1.0             if i = j
//!           +0.5 + xi_ij    if i = j + 1 (mod L)   (sub-diagonal)
//!           -0.5 + xi_ij    if i = j - 1 (mod L)   (super-diagonal)
//! ```
//!
//! with `xi_ij ~ N(0, sigma^2)` i.i.d. Without noise this is a discrete
//! symmetric derivative plus the identity, so `M * ones = ones`.
//!
//! A matrix is fully determined by `(L, seed, sigma)`: generation draws the
//! super-diagonal entries for rows `0..L` first, then the sub-diagonal
//! entries, one normal variate each, from a [`SplitMix64`] seeded with
//! `seed`. Matrices are therefore never stored; [`MatrixSpec`] is the
//! serialized form and the matrix is regenerated on demand.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::operator::LinearOperator;
use crate::rng::SplitMix64;

/// Serializable identity of an ensemble member: the text record
/// `L,seed,noise_sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixSpec {
    pub l: usize,
    pub seed: u64,
    pub noise_sigma: f64,
}

impl MatrixSpec {
    pub fn realize(&self) -> Result<CyclicTridiagonalMatrix> {
        CyclicTridiagonalMatrix::generate(self.l, self.seed, self.noise_sigma)
    }
}

impl fmt::Display for MatrixSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.l, self.seed, self.noise_sigma)
    }
}

impl FromStr for MatrixSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(',');
        let mut field = |name: &str| {
            parts
                .next()
                .ok_or_else(|| Error::InvalidArgument(format!("matrix spec missing field {name}")))
        };
        let l = field("L")?
            .parse::<usize>()
            .map_err(|e| Error::InvalidArgument(format!("matrix spec L: {e}")))?;
        let seed = field("seed")?
            .parse::<u64>()
            .map_err(|e| Error::InvalidArgument(format!("matrix spec seed: {e}")))?;
        let noise_sigma = field("noise_sigma")?
            .parse::<f64>()
            .map_err(|e| Error::InvalidArgument(format!("matrix spec noise_sigma: {e}")))?;
        if parts.next().is_some() {
            return Err(Error::InvalidArgument(format!(
                "matrix spec has trailing fields: '{s}'"
            )));
        }
        Ok(MatrixSpec { l, seed, noise_sigma })
    }
}

/// One member of the ensemble. The unit diagonal is implicit; the two cyclic
/// off-diagonals are stored row-indexed: `super_diag[i] = M(i, (i+1) mod L)`
/// and `sub_diag[i] = M(i, (i-1) mod L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicTridiagonalMatrix {
    l: usize,
    super_diag: Vec<f64>,
    sub_diag: Vec<f64>,
    seed: u64,
    noise_sigma: f64,
}

impl CyclicTridiagonalMatrix {
    /// Generate the member identified by `(l, seed, noise_sigma)`.
    pub fn generate(l: usize, seed: u64, noise_sigma: f64) -> Result<Self> {
        if l < 3 {
            return Err(Error::DimensionTooSmall(l));
        }
        let mut rng = SplitMix64::new(seed);
        let super_diag: Vec<f64> = (0..l).map(|_| -0.5 + noise_sigma * rng.next_normal()).collect();
        let sub_diag: Vec<f64> = (0..l).map(|_| 0.5 + noise_sigma * rng.next_normal()).collect();
        Ok(Self { l, super_diag, sub_diag, seed, noise_sigma })
    }

    pub fn dim(&self) -> usize {
        self.l
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn spec(&self) -> MatrixSpec {
        MatrixSpec { l: self.l, seed: self.seed, noise_sigma: self.noise_sigma }
    }

    pub fn super_diag(&self) -> &[f64] {
        &self.super_diag
    }

    pub fn sub_diag(&self) -> &[f64] {
        &self.sub_diag
    }

    /// `(Mv)_i = v_i + sub_i v_{i-1 mod L} + super_i v_{i+1 mod L}`.
    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_len(v.len())?;
        self.check_len(out.len())?;
        let l = self.l;
        for i in 0..l {
            let prev = if i == 0 { l - 1 } else { i - 1 };
            let next = if i + 1 == l { 0 } else { i + 1 };
            out[i] = v[i] + self.sub_diag[i] * v[prev] + self.super_diag[i] * v[next];
        }
        Ok(())
    }

    /// `(M^T v)_i = v_i + super_{i-1 mod L} v_{i-1 mod L} + sub_{i+1 mod L} v_{i+1 mod L}`.
    pub fn apply_transpose_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_len(v.len())?;
        self.check_len(out.len())?;
        let l = self.l;
        for i in 0..l {
            let prev = if i == 0 { l - 1 } else { i - 1 };
            let next = if i + 1 == l { 0 } else { i + 1 };
            out[i] = v[i] + self.super_diag[prev] * v[prev] + self.sub_diag[next] * v[next];
        }
        Ok(())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.l {
            return Err(Error::DimensionMismatch { expected: self.l, got: len });
        }
        Ok(())
    }
}

impl LinearOperator for CyclicTridiagonalMatrix {
    fn dim(&self) -> usize {
        self.l
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.l];
        self.apply_into(v, &mut out)?;
        Ok(out)
    }

    fn apply_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.l];
        self.apply_transpose_into(v, &mut out)?;
        Ok(out)
    }
}
