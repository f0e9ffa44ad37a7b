//! C ABI for the traceprobe library: opaque handles, status codes, and a
//! thread-local last-error message.
//!
//! Conventions:
//! - Constructors return a handle through an out-pointer and a [`TpStatus`];
//!   every handle has a matching `*_free` that accepts null.
//! - Vector arguments are caller-allocated `double` buffers whose length must
//!   equal the operator dimension.
//! - On any non-OK status, `tp_last_error_message` returns a readable
//!   description (valid on the calling thread until the next failing call).
//!
//! The committed header `include/traceprobe.h` is generated with cbindgen;
//! rebuild it with `cargo build -p traceprobe-capi --features generate-header`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use traceprobe::ensemble::CyclicTridiagonalMatrix;
use traceprobe::error::Error;
use traceprobe::hutchinson::hutchinson_trace;
use traceprobe::inverse::{InverseOperator, SolverSettings};
use traceprobe::operator::{exact_trace, LinearOperator};
use traceprobe::probing::{probe_estimate, ProbingVectorSet};
use traceprobe::rng::SplitMix64;
use traceprobe::trainer::{Trainer, TrainingConfig};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    SolverFailure = 4,
    DomainError = 5,
    IoError = 6,
    CorruptCheckpoint = 7,
    TrainingFailure = 8,
    InternalError = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: TpStatus, message: &str) -> TpStatus {
    set_last_error(message);
    status
}

fn status_of(err: &Error) -> TpStatus {
    match err {
        Error::DimensionMismatch { .. } | Error::DimensionTooSmall(_) => {
            TpStatus::DimensionMismatch
        }
        Error::SolverFailure { .. } => TpStatus::SolverFailure,
        Error::Domain { .. } => TpStatus::DomainError,
        Error::Io(_) => TpStatus::IoError,
        Error::CorruptCheckpoint(_) | Error::CheckpointVersion { .. } => {
            TpStatus::CorruptCheckpoint
        }
        Error::NonFiniteState { .. } | Error::TrainingAborted { .. } => {
            TpStatus::TrainingFailure
        }
        Error::InvalidArgument(_) | Error::Config(_) | Error::TooFewSamples { .. } => {
            TpStatus::InvalidArgument
        }
        _ => TpStatus::InternalError,
    }
}

fn from_error(err: Error) -> TpStatus {
    let status = status_of(&err);
    set_last_error(&err.to_string());
    status
}

/// An ensemble matrix (opaque).
pub struct TpMatrix(CyclicTridiagonalMatrix);

/// A matrix-free operator: the matrix itself or its inverse (opaque).
pub struct TpOperator(Box<dyn LinearOperator + Send + Sync>);

/// Trained probing vectors plus an additive bias correction (opaque).
pub struct TpProbingSet {
    w: ProbingVectorSet,
    d_bar: f64,
}

/// Training parameters; see `tp_train_config_default` for the published
/// L=100 column at desk scale.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TpTrainConfig {
    pub l: u64,
    pub n_p: u64,
    pub n_z: u64,
    pub eta: f64,
    pub alpha: f64,
    pub n_r: u64,
    pub n_training: u64,
    pub bootstrap_len: u64,
    pub seed: u64,
    pub noise_sigma: f64,
    pub solver_tol: f64,
    /// 0 means the default cap of 10 * L.
    pub solver_max_iter: u64,
}

impl TpTrainConfig {
    fn to_training_config(self) -> TrainingConfig {
        let defaults = TrainingConfig::default();
        let max_iter = if self.solver_max_iter == 0 {
            10 * self.l as usize
        } else {
            self.solver_max_iter as usize
        };
        TrainingConfig {
            l: self.l as usize,
            n_p: self.n_p as usize,
            n_z: self.n_z as usize,
            eta: self.eta,
            alpha: self.alpha,
            n_r: self.n_r as usize,
            n_training: self.n_training,
            bootstrap_len: self.bootstrap_len,
            seed: self.seed,
            noise_sigma: self.noise_sigma,
            solver_tol: self.solver_tol,
            solver_max_iter: max_iter,
            log_stride: defaults.log_stride,
        }
    }
}

/// Last error message for the calling thread; empty until a call fails.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn tp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Generate the ensemble member `(l, seed, noise_sigma)`.
///
/// # Safety
/// `out` must be a valid pointer to a `TpMatrix*`.
#[no_mangle]
pub unsafe extern "C" fn tp_matrix_generate(
    l: u64,
    seed: u64,
    noise_sigma: f64,
    out: *mut *mut TpMatrix,
) -> TpStatus {
    if out.is_null() {
        return fail(TpStatus::NullPointer, "out pointer is null");
    }
    match CyclicTridiagonalMatrix::generate(l as usize, seed, noise_sigma) {
        Ok(m) => {
            *out = Box::into_raw(Box::new(TpMatrix(m)));
            TpStatus::Ok
        }
        Err(e) => from_error(e),
    }
}

/// # Safety
/// `matrix` must be null or a pointer from `tp_matrix_generate`, not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn tp_matrix_free(matrix: *mut TpMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

/// # Safety
/// `matrix` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tp_matrix_dim(matrix: *const TpMatrix, out: *mut u64) -> TpStatus {
    if matrix.is_null() || out.is_null() {
        return fail(TpStatus::NullPointer, "null pointer argument");
    }
    *out = (*matrix).0.dim() as u64;
    TpStatus::Ok
}

unsafe fn apply_through(
    op: &(impl LinearOperator + ?Sized),
    v: *const f64,
    len: usize,
    out: *mut f64,
    transpose: bool,
) -> TpStatus {
    if v.is_null() || out.is_null() {
        return fail(TpStatus::NullPointer, "null vector argument");
    }
    let input = std::slice::from_raw_parts(v, len);
    let result = if transpose { op.apply_transpose(input) } else { op.apply(input) };
    match result {
        Ok(values) => {
            std::ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
            TpStatus::Ok
        }
        Err(e) => from_error(e),
    }
}

/// `out = M v`. Both buffers must hold `tp_matrix_dim` doubles.
///
/// # Safety
/// `matrix` must be a live handle; `v` and `out` must point to `len`
/// readable/writable doubles, with `len` equal to the matrix dimension.
#[no_mangle]
pub unsafe extern "C" fn tp_matrix_apply(
    matrix: *const TpMatrix,
    v: *const f64,
    len: usize,
    out: *mut f64,
) -> TpStatus {
    if matrix.is_null() {
        return fail(TpStatus::NullPointer, "matrix handle is null");
    }
    apply_through(&(*matrix).0, v, len, out, false)
}

/// `out = M^T v`.
///
/// # Safety
/// As for `tp_matrix_apply`.
#[no_mangle]
pub unsafe extern "C" fn tp_matrix_apply_transpose(
    matrix: *const TpMatrix,
    v: *const f64,
    len: usize,
    out: *mut f64,
) -> TpStatus {
    if matrix.is_null() {
        return fail(TpStatus::NullPointer, "matrix handle is null");
    }
    apply_through(&(*matrix).0, v, len, out, true)
}

/// Operator `A = M` (the matrix itself).
///
/// # Safety
/// `matrix` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tp_operator_direct(
    matrix: *const TpMatrix,
    out: *mut *mut TpOperator,
) -> TpStatus {
    if matrix.is_null() || out.is_null() {
        return fail(TpStatus::NullPointer, "null pointer argument");
    }
    *out = Box::into_raw(Box::new(TpOperator(Box::new((*matrix).0.clone()))));
    TpStatus::Ok
}

/// Operator `A = M^{-1}` backed by BiCGSTAB with the given relative
/// residual tolerance; `max_iter = 0` means the default cap of 10 * L.
///
/// # Safety
/// `matrix` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tp_operator_inverse(
    matrix: *const TpMatrix,
    tol: f64,
    max_iter: u64,
    out: *mut *mut TpOperator,
) -> TpStatus {
    if matrix.is_null() || out.is_null() {
        return fail(TpStatus::NullPointer, "null pointer argument");
    }
    if !tol.is_finite() || tol <= 0.0 {
        return fail(TpStatus::InvalidArgument, "tol must be positive");
    }
    let base = (*matrix).0.clone();
    let max_iter = if max_iter == 0 { 10 * base.dim() } else { max_iter as usize };
    let op = InverseOperator::new(base, SolverSettings { tol, max_iter });
    *out = Box::into_raw(Box::new(TpOperator(Box::new(op))));
    TpStatus::Ok
}

/// # Safety
/// `op` must be null or a live operator handle, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tp_operator_free(op: *mut TpOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// # Safety
/// `op` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tp_operator_dim(op: *const TpOperator, out: *mut u64) -> TpStatus {
    if op.is_null() || out.is_null() {
        return fail(TpStatus::NullPointer, "null pointer argument");
    }
    *out = (*op).0.dim() as u64;
    TpStatus::Ok
}

/// `out = A v`. For inverse operators this runs one solve.
///
/// # Safety
/// `op` must be a live handle; `v` and `out` must point to `len` doubles
/// with `len` equal to the operator dimension.
#[no_mangle]
pub unsafe extern "C" fn tp_operator_apply(
    op: *const TpOperator,
    v: *const f64,
    len: usize,
    out: *mut f64,
) -> TpStatus {
    if op.is_null() {
        return fail(TpStatus::NullPointer, "operator handle is null");
    }
    apply_through((*op).0.as_ref(), v, len, out, false)
}

/// Exact trace via one application per basis vector (L solves for inverse
/// operators).
///
/// # Safety
/// `op` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tp_operator_exact_trace(
    op: *const TpOperator,
    out: *mut f64,
) -> TpStatus {
    if op.is_null() || out.is_null() {
        return fail(TpStatus::NullPointer, "null pointer argument");
    }
    match exact_trace((*op).0.as_ref()) {
        Ok(trace) => {
            *out = trace;
            TpStatus::Ok
        }
        Err(e) => from_error(e),
    }
}

/// Hutchinson estimate with `n_z` Rademacher vectors drawn from `seed`.
/// `std_error` may be null if only the estimate is wanted.
///
/// # Safety
/// `op` and `estimate` must be valid pointers; `std_error` may be null.
#[no_mangle]
pub unsafe extern "C" fn tp_operator_hutchinson(
    op: *const TpOperator,
    n_z: u64,
    seed: u64,
    estimate: *mut f64,
    std_error: *mut f64,
) -> TpStatus {
    if op.is_null() || estimate.is_null() {
        return fail(TpStatus::NullPointer, "null pointer argument");
    }
    let mut rng = SplitMix64::new(seed);
    match hutchinson_trace((*op).0.as_ref(), n_z as usize, &mut rng) {
        Ok(result) => {
            *estimate = result.estimate;
            if !std_error.is_null() {
                *std_error = result.std_error;
            }
            TpStatus::Ok
        }
        Err(e) => from_error(e),
    }
}

/// The published L=100 parameter column at desk scale.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tp_train_config_default(out: *mut TpTrainConfig) -> TpStatus {
    if out.is_null() {
        return fail(TpStatus::NullPointer, "out pointer is null");
    }
    let d = TrainingConfig::default();
    *out = TpTrainConfig {
        l: d.l as u64,
        n_p: d.n_p as u64,
        n_z: d.n_z as u64,
        eta: d.eta,
        alpha: d.alpha,
        n_r: d.n_r as u64,
        n_training: d.n_training,
        bootstrap_len: d.bootstrap_len,
        seed: d.seed,
        noise_sigma: d.noise_sigma,
        solver_tol: d.solver_tol,
        solver_max_iter: d.solver_max_iter as u64,
    };
    TpStatus::Ok
}

/// Run the full training loop (blocking) and return the trained vectors.
///
/// # Safety
/// `config` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tp_train(
    config: *const TpTrainConfig,
    out: *mut *mut TpProbingSet,
) -> TpStatus {
    if config.is_null() || out.is_null() {
        return fail(TpStatus::NullPointer, "null pointer argument");
    }
    match Trainer::train((*config).to_training_config()) {
        Ok((w, _log)) => {
            *out = Box::into_raw(Box::new(TpProbingSet { w, d_bar: 0.0 }));
            TpStatus::Ok
        }
        Err(e) => from_error(e),
    }
}

/// Load the probing vectors of a training checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tp_probing_load(
    path: *const c_char,
    out: *mut *mut TpProbingSet,
) -> TpStatus {
    if path.is_null() || out.is_null() {
        return fail(TpStatus::NullPointer, "null pointer argument");
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(s) => s,
        Err(_) => return fail(TpStatus::InvalidArgument, "path is not valid UTF-8"),
    };
    match Trainer::load_checkpoint(Path::new(path)) {
        Ok(trainer) => {
            *out = Box::into_raw(Box::new(TpProbingSet {
                w: trainer.state.w.clone(),
                d_bar: 0.0,
            }));
            TpStatus::Ok
        }
        Err(e) => from_error(e),
    }
}

/// # Safety
/// `set` must be null or a live handle, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tp_probing_free(set: *mut TpProbingSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Vector length and count of a probing set.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tp_probing_counts(
    set: *const TpProbingSet,
    l: *mut u64,
    n_p: *mut u64,
) -> TpStatus {
    if set.is_null() || l.is_null() || n_p.is_null() {
        return fail(TpStatus::NullPointer, "null pointer argument");
    }
    *l = (*set).w.l() as u64;
    *n_p = (*set).w.n_p() as u64;
    TpStatus::Ok
}

/// Set the additive bias correction added by `tp_probing_estimate`.
///
/// # Safety
/// `set` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tp_probing_set_bias(set: *mut TpProbingSet, d_bar: f64) -> TpStatus {
    if set.is_null() {
        return fail(TpStatus::NullPointer, "probing handle is null");
    }
    if !d_bar.is_finite() {
        return fail(TpStatus::InvalidArgument, "d_bar must be finite");
    }
    (*set).d_bar = d_bar;
    TpStatus::Ok
}

/// # Safety
/// `set` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tp_probing_bias(set: *const TpProbingSet, out: *mut f64) -> TpStatus {
    if set.is_null() || out.is_null() {
        return fail(TpStatus::NullPointer, "null pointer argument");
    }
    *out = (*set).d_bar;
    TpStatus::Ok
}

/// Trace estimate `sum_l p_l^T A p_l + d_bar`: `n_p` operator applications.
///
/// # Safety
/// `set`, `op`, and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tp_probing_estimate(
    set: *const TpProbingSet,
    op: *const TpOperator,
    out: *mut f64,
) -> TpStatus {
    if set.is_null() || op.is_null() || out.is_null() {
        return fail(TpStatus::NullPointer, "null pointer argument");
    }
    match probe_estimate(&(*set).w, (*op).0.as_ref()) {
        Ok(estimate) => {
            *out = estimate + (*set).d_bar;
            TpStatus::Ok
        }
        Err(e) => from_error(e),
    }
}
