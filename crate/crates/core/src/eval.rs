//! Estimator quality: deviations, bias correction, and the unbiased
//! function-of-trace estimator.
//!
//! The deviation of a probing estimate on matrix `M_i` is
//! `d_i = reference_trace - sum_l p_l^T M_i p_l`. Its mean over a calibration
//! set is the bias and becomes the additive correction of
//! [`CorrectedEstimator`]; its spread is the estimator uncertainty.
//!
//! For expectation values of a function of traces, the two-term estimator
//!
//! ```text
//! (1/N) sum_i f(tr~(M_i)) + (1/N_c) sum_{j<=N_c} [f(tr(M_j)) - f(tr~(M_j))]
//! ```
//!
//! is unbiased for any fixed probing vectors: the biased terms cancel in
//! expectation and exactly when `N_c = N`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::ensemble::MatrixSpec;
use crate::error::{Error, Result};
use crate::hutchinson::hutchinson_trace;
use crate::inverse::{InverseOperator, SolverSettings};
use crate::operator::{exact_trace, LinearOperator};
use crate::probing::{probe_estimate, ProbingVectorSet};
use crate::rng::{derive_seed, SplitMix64};

/// Minimum calibration-set size for [`calibrate_bias`].
pub const CALIBRATION_MIN: usize = 100;

/// Where a reference trace came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceSource {
    Exact,
    Stochastic { n_z: usize },
}

impl fmt::Display for TraceSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceSource::Exact => write!(f, "exact"),
            TraceSource::Stochastic { .. } => write!(f, "stochastic"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationSample {
    pub matrix_seed: u64,
    pub d: f64,
    pub source: TraceSource,
}

/// `d = reference_trace - probe_estimate(w, op)`.
pub fn deviation<A: LinearOperator + ?Sized>(
    w: &ProbingVectorSet,
    op: &A,
    matrix_seed: u64,
    reference_trace: f64,
    source: TraceSource,
) -> Result<DeviationSample> {
    let estimate = probe_estimate(w, op)?;
    Ok(DeviationSample { matrix_seed, d: reference_trace - estimate, source })
}

/// CSV form: `matrix_seed,d,trace_source,N_z` (0 for exact references).
pub fn deviations_csv(samples: &[DeviationSample]) -> String {
    let mut out = String::from("matrix_seed,d,trace_source,N_z\n");
    for s in samples {
        let n_z = match s.source {
            TraceSource::Exact => 0,
            TraceSource::Stochastic { n_z } => n_z,
        };
        out.push_str(&format!("{},{},{},{}\n", s.matrix_seed, s.d, s.source, n_z));
    }
    out
}

/// Probing vectors plus the additive bias correction `d_bar`.
#[derive(Debug, Clone)]
pub struct CorrectedEstimator {
    pub w: ProbingVectorSet,
    pub d_bar: f64,
    /// Matrix seeds of the calibration set, for provenance.
    pub calibration_seeds: Vec<u64>,
}

impl CorrectedEstimator {
    /// Uncorrected wrapper (`d_bar = 0`).
    pub fn uncorrected(w: ProbingVectorSet) -> Self {
        Self { w, d_bar: 0.0, calibration_seeds: Vec::new() }
    }
}

/// Average the deviations of at least [`CALIBRATION_MIN`] samples into a
/// corrected estimator.
pub fn calibrate_bias(
    w: &ProbingVectorSet,
    samples: &[DeviationSample],
) -> Result<CorrectedEstimator> {
    if samples.len() < CALIBRATION_MIN {
        return Err(Error::TooFewSamples { got: samples.len(), need: CALIBRATION_MIN });
    }
    let d_bar = samples.iter().map(|s| s.d).sum::<f64>() / samples.len() as f64;
    Ok(CorrectedEstimator {
        w: w.clone(),
        d_bar,
        calibration_seeds: samples.iter().map(|s| s.matrix_seed).collect(),
    })
}

/// `probe_estimate + d_bar`.
pub fn corrected_estimate<A: LinearOperator + ?Sized>(
    ce: &CorrectedEstimator,
    op: &A,
) -> Result<f64> {
    Ok(probe_estimate(&ce.w, op)? + ce.d_bar)
}

/// Moments, histogram, and normality summary of a deviation sample.
#[derive(Debug, Clone, Serialize)]
pub struct DeviationStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub std_error_of_mean: f64,
    pub bin_edges: Vec<f64>,
    pub bin_counts: Vec<u64>,
    pub skewness: f64,
    pub skewness_std_error: f64,
    pub excess_kurtosis: f64,
    pub kurtosis_std_error: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Freedman-Diaconis bin count, clamped to something plottable.
fn freedman_diaconis_bins(sorted: &[f64]) -> usize {
    let n = sorted.len();
    let range = sorted[n - 1] - sorted[0];
    let iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
    if range <= 0.0 || iqr <= 0.0 {
        return 1;
    }
    let width = 2.0 * iqr / (n as f64).cbrt();
    ((range / width).ceil() as usize).clamp(1, 10_000)
}

/// Compute [`DeviationStats`]; `bins` overrides the Freedman-Diaconis
/// default.
pub fn deviation_stats(samples: &[DeviationSample], bins: Option<usize>) -> Result<DeviationStats> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples { got: samples.len(), need: 2 });
    }
    let n = samples.len();
    let nf = n as f64;
    let values: Vec<f64> = samples.iter().map(|s| s.d).collect();
    let mean = values.iter().sum::<f64>() / nf;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &v in &values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let std = (m2 * nf / (nf - 1.0)).sqrt();
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };

    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let n_bins = bins.unwrap_or_else(|| freedman_diaconis_bins(&sorted));
    let lo = sorted[0];
    let hi = sorted[n - 1];
    let range = hi - lo;
    let mut bin_counts = vec![0u64; n_bins];
    for &v in &values {
        let idx = if range > 0.0 {
            (((v - lo) / range) * n_bins as f64).floor() as usize
        } else {
            0
        };
        bin_counts[idx.min(n_bins - 1)] += 1;
    }
    let bin_edges: Vec<f64> = (0..=n_bins)
        .map(|k| lo + range * k as f64 / n_bins as f64)
        .collect();

    Ok(DeviationStats {
        count: n,
        mean,
        std,
        std_error_of_mean: std / nf.sqrt(),
        bin_edges,
        bin_counts,
        skewness,
        skewness_std_error: (6.0 / nf).sqrt(),
        excess_kurtosis,
        kurtosis_std_error: (24.0 / nf).sqrt(),
    })
}

/// The function `f` applied to traces, from the fixed registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFunction {
    Identity,
    Square,
    Reciprocal,
    /// `exp(-x)`.
    ExpNeg,
}

impl TraceFunction {
    pub fn eval(&self, x: f64) -> Result<f64> {
        match self {
            TraceFunction::Identity => Ok(x),
            TraceFunction::Square => Ok(x * x),
            TraceFunction::Reciprocal => {
                if x == 0.0 {
                    Err(Error::Domain { name: "reciprocal", value: x })
                } else {
                    Ok(1.0 / x)
                }
            }
            TraceFunction::ExpNeg => Ok((-x).exp()),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            TraceFunction::Identity => "identity",
            TraceFunction::Square => "square",
            TraceFunction::Reciprocal => "reciprocal",
            TraceFunction::ExpNeg => "exponential-of-negative",
        }
    }
}

impl FromStr for TraceFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(TraceFunction::Identity),
            "square" => Ok(TraceFunction::Square),
            "reciprocal" => Ok(TraceFunction::Reciprocal),
            "exponential-of-negative" | "exp-neg" => Ok(TraceFunction::ExpNeg),
            other => Err(Error::InvalidArgument(format!(
                "unknown trace function '{other}' (expected identity, square, reciprocal, exponential-of-negative)"
            ))),
        }
    }
}

/// How reference traces for the correction term are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceMode {
    Exact,
    Stochastic { n_z: usize },
}

/// Which `N_c` matrices feed the correction term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionSubset {
    /// The first `N_c` matrices (assumes i.i.d. samples).
    First,
    /// Indices `floor(k N / N_c)`, maximally separated in the sequence.
    EvenlyStrided,
}

#[derive(Debug, Clone, Serialize)]
pub struct UnbiasedReport {
    pub estimate: f64,
    /// Delete-1 jackknife error over the matrix samples.
    pub error: f64,
    pub n: usize,
    pub n_c: usize,
    pub f: String,
}

/// Grouped evaluation of the two-term estimator. Keeping the correction-set
/// probe sum shared between the terms makes the `N_c = N` cancellation exact
/// in floating point, not just in expectation.
fn combine(s_a_rest: f64, s_a_subset: f64, s_f_subset: f64, n: usize, n_c: usize) -> f64 {
    let nf = n as f64;
    let ncf = n_c as f64;
    s_a_rest / nf + (s_a_subset / nf - s_a_subset / ncf) + s_f_subset / ncf
}

/// Estimate `< f(tr(M)) >` over the given ensemble members with the bias-
/// cancelling correction term.
#[allow(clippy::too_many_arguments)]
pub fn unbiased_function_expectation(
    ce: &CorrectedEstimator,
    specs: &[MatrixSpec],
    f: TraceFunction,
    n_c: usize,
    reference: ReferenceMode,
    subset: CorrectionSubset,
    solver: SolverSettings,
    seed: u64,
) -> Result<UnbiasedReport> {
    let n = specs.len();
    if n == 0 || n_c == 0 || n_c > n {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= N_c <= N, got N_c={n_c}, N={n}"
        )));
    }

    let subset_indices: Vec<usize> = match subset {
        CorrectionSubset::First => (0..n_c).collect(),
        CorrectionSubset::EvenlyStrided => (0..n_c).map(|k| k * n / n_c).collect(),
    };
    let mut in_subset = vec![false; n];
    for &j in &subset_indices {
        in_subset[j] = true;
    }

    // f of the corrected probe estimate for every matrix.
    let a: Result<Vec<f64>> = specs
        .par_iter()
        .map(|spec| {
            let op = InverseOperator::new(spec.realize()?, solver);
            f.eval(corrected_estimate(ce, &op)?)
        })
        .collect();
    let a = a?;

    // f of the reference trace on the correction subset.
    let f_ref: Result<Vec<f64>> = subset_indices
        .par_iter()
        .map(|&j| {
            let op = InverseOperator::new(specs[j].realize()?, solver);
            let reference_trace = match reference {
                ReferenceMode::Exact => exact_trace(&op)?,
                ReferenceMode::Stochastic { n_z } => {
                    let mut rng =
                        SplitMix64::new(derive_seed(seed, "unbiased-ref", j as u64));
                    hutchinson_trace(&op, n_z, &mut rng)?.estimate
                }
            };
            f.eval(reference_trace)
        })
        .collect();
    let f_ref = f_ref?;

    let s_a_rest: f64 = (0..n).filter(|&i| !in_subset[i]).map(|i| a[i]).sum();
    let s_a_subset: f64 = subset_indices.iter().map(|&j| a[j]).sum();
    let s_f_subset: f64 = f_ref.iter().sum();
    let estimate = combine(s_a_rest, s_a_subset, s_f_subset, n, n_c);

    // Delete-1 jackknife; removing a correction-subset sample shrinks both
    // terms, which is what captures their correlation.
    let error = if n > 1 {
        let mut position_in_subset = vec![usize::MAX; n];
        for (k, &j) in subset_indices.iter().enumerate() {
            position_in_subset[j] = k;
        }
        let pseudo: Vec<f64> = (0..n)
            .map(|i| {
                if in_subset[i] {
                    let fi = f_ref[position_in_subset[i]];
                    if n_c > 1 {
                        combine(s_a_rest, s_a_subset - a[i], s_f_subset - fi, n - 1, n_c - 1)
                    } else {
                        // The only correction sample cannot be deleted from
                        // its own term; drop it from the average only.
                        combine(s_a_rest, s_a_subset - a[i], s_f_subset, n - 1, n_c)
                    }
                } else {
                    combine(s_a_rest - a[i], s_a_subset, s_f_subset, n - 1, n_c)
                }
            })
            .collect();
        let mean_pseudo = pseudo.iter().sum::<f64>() / n as f64;
        let var = pseudo
            .iter()
            .map(|p| (p - mean_pseudo) * (p - mean_pseudo))
            .sum::<f64>()
            * (n - 1) as f64
            / n as f64;
        var.sqrt()
    } else {
        0.0
    };

    Ok(UnbiasedReport { estimate, error, n, n_c, f: f.id().to_string() })
}
