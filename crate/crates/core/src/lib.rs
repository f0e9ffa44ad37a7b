//! Trace estimation for matrix-free operators using trained probing vectors.
//!
//! Instead of averaging random-noise quadratic forms (the Hutchinson
//! estimator), a small set of probing vectors is trained by online gradient
//! descent over an ensemble of similar matrices, so that
//! `sum_l p_l^T A p_l` probes `tr(A)` with far fewer operator applications.
//! The crate provides:
//!
//! - the random cyclic tridiagonal ensemble and matrix-free operators over
//!   it, including `M^{-1}` through BiCGSTAB ([`ensemble`], [`operator`],
//!   [`bicgstab`], [`inverse`], [`dense`]);
//! - the Hutchinson baseline with error bars ([`hutchinson`]);
//! - probing-vector training: exact line-search bootstrap, learning-rate
//!   schedule, momentum, matrix pool with cached trace estimates, and
//!   resumable checkpoints ([`probing`], [`linesearch`], [`pool`],
//!   [`trainer`], [`checkpoint`]);
//! - estimator-quality evaluation: deviations, bias calibration, and the
//!   unbiased function-of-trace estimator ([`eval`]);
//! - the experiment harness and CLI recipes ([`config`], [`recipes`],
//!   [`manifest`]).

pub mod bicgstab;
pub mod checkpoint;
pub mod config;
pub mod dense;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod hutchinson;
pub mod inverse;
pub mod linesearch;
pub mod manifest;
pub mod operator;
pub mod pool;
pub mod probing;
pub mod recipes;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
