//! Seeded experiment recipes and their file outputs.
//!
//! Every recipe is deterministic for a fixed master seed: all internal
//! seeds are derived from `(master seed, purpose label, index)`, parallel
//! sections reduce in index order, and reruns produce byte-identical CSVs.
//! Each run ends with a `manifest.json` listing the resolved configuration,
//! the output files with SHA-256 hashes, operator-application counts, and
//! wall time; failures still write the manifest with a failure marker so
//! partial outputs stay interpretable.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::config::{
    HarnessConfig, ReferenceChoice, AUTO_EXACT_MAX_L, STOCHASTIC_REFERENCE_NZ,
};
use crate::ensemble::MatrixSpec;
use crate::error::{Error, Result};
use crate::eval::{
    calibrate_bias, deviation_stats, deviations_csv, unbiased_function_expectation,
    CorrectedEstimator, CorrectionSubset, DeviationSample, ReferenceMode, TraceSource,
};
use crate::hutchinson::{variance_scan, variance_scan_csv, hutchinson_trace};
use crate::inverse::{InverseOperator, SolverSettings};
use crate::manifest::{Manifest, MatvecReport, OutputDir};
use crate::operator::exact_trace;
use crate::probing::{probe_estimate, ProbingVectorSet};
use crate::rng::{derive_seed, SplitMix64};
use crate::trainer::{Trainer, TrainingConfig};

/// The fixed recipe registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecipeName {
    Fig1Hist,
    Fig2NoiseScan,
    Fig3Hutchinson,
    Fig4PoolScan,
    Fig5AlphaScan,
    Fig7NpScan,
    Train,
    Evaluate,
    Unbiased,
}

impl RecipeName {
    pub const ALL: [RecipeName; 9] = [
        RecipeName::Fig1Hist,
        RecipeName::Fig2NoiseScan,
        RecipeName::Fig3Hutchinson,
        RecipeName::Fig4PoolScan,
        RecipeName::Fig5AlphaScan,
        RecipeName::Fig7NpScan,
        RecipeName::Train,
        RecipeName::Evaluate,
        RecipeName::Unbiased,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            RecipeName::Fig1Hist => "fig1-hist",
            RecipeName::Fig2NoiseScan => "fig2-noise-scan",
            RecipeName::Fig3Hutchinson => "fig3-hutchinson",
            RecipeName::Fig4PoolScan => "fig4-pool-scan",
            RecipeName::Fig5AlphaScan => "fig5-alpha-scan",
            RecipeName::Fig7NpScan => "fig7-np-scan",
            RecipeName::Train => "train",
            RecipeName::Evaluate => "evaluate",
            RecipeName::Unbiased => "unbiased",
        }
    }
}

impl fmt::Display for RecipeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for RecipeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RecipeName::ALL
            .into_iter()
            .find(|r| r.id() == s)
            .ok_or_else(|| Error::UnknownRecipe(s.to_string()))
    }
}

/// Operator-application counters accumulated while a recipe runs.
#[derive(Debug, Default, Clone, Copy)]
struct Counters {
    training: u64,
    pool_estimation: u64,
    evaluation: u64,
    wasted: u64,
    expected_training: u64,
    hutchinson_evals: u64,
}

impl Counters {
    fn absorb_trainer(&mut self, trainer: &Trainer) {
        self.training += trainer.state.train_matvecs;
        self.wasted += trainer.state.wasted_matvecs;
        self.expected_training += trainer.state.expected_training_matvecs();
        self.pool_estimation += trainer.pool.estimation_matvecs();
        self.hutchinson_evals += trainer.pool.hutchinson_evals();
    }
}

/// One point of a learning curve: deviation statistics of the current
/// vectors over the fixed held-out matrices.
#[derive(Debug, Clone, Copy)]
struct CurvePoint {
    t: u64,
    std_d: f64,
    mean_d: f64,
}

fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("t,std_d,mean_d\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.t, p.std_d, p.mean_d));
    }
    out
}

/// Held-out matrices are derived from the master seed only, so every scan
/// point of a recipe is measured on the same fixed set.
fn test_specs(cfg: &HarnessConfig, count: usize) -> Vec<MatrixSpec> {
    (0..count)
        .map(|i| MatrixSpec {
            l: cfg.training.l,
            seed: derive_seed(cfg.training.seed, "test-matrix", i as u64),
            noise_sigma: cfg.training.noise_sigma,
        })
        .collect()
}

fn resolve_references(cfg: &HarnessConfig) -> ReferenceMode {
    match cfg.references {
        ReferenceChoice::Exact => ReferenceMode::Exact,
        ReferenceChoice::Stochastic => {
            ReferenceMode::Stochastic { n_z: STOCHASTIC_REFERENCE_NZ }
        }
        ReferenceChoice::Auto => {
            if cfg.training.l <= AUTO_EXACT_MAX_L {
                ReferenceMode::Exact
            } else {
                ReferenceMode::Stochastic { n_z: STOCHASTIC_REFERENCE_NZ }
            }
        }
    }
}

/// Reference traces for a set of matrices; returns the traces, the source
/// tag, and the operator applications spent.
fn reference_traces(
    specs: &[MatrixSpec],
    mode: ReferenceMode,
    solver: SolverSettings,
    master_seed: u64,
    label: &str,
) -> Result<(Vec<f64>, TraceSource, u64)> {
    let traces: Result<Vec<f64>> = specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let op = InverseOperator::new(spec.realize()?, solver);
            match mode {
                ReferenceMode::Exact => exact_trace(&op),
                ReferenceMode::Stochastic { n_z } => {
                    let mut rng =
                        SplitMix64::new(derive_seed(master_seed, label, i as u64));
                    Ok(hutchinson_trace(&op, n_z, &mut rng)?.estimate)
                }
            }
        })
        .collect();
    let (source, per_matrix) = match mode {
        ReferenceMode::Exact => (TraceSource::Exact, specs.first().map_or(0, |s| s.l) as u64),
        ReferenceMode::Stochastic { n_z } => (TraceSource::Stochastic { n_z }, n_z as u64),
    };
    Ok((traces?, source, per_matrix * specs.len() as u64))
}

/// Deviations of a probing set over matrices with known references.
fn deviations_against(
    w: &ProbingVectorSet,
    specs: &[MatrixSpec],
    references: &[f64],
    source: TraceSource,
    solver: SolverSettings,
) -> Result<(Vec<DeviationSample>, u64)> {
    let samples: Result<Vec<DeviationSample>> = specs
        .par_iter()
        .zip(references)
        .map(|(spec, &reference)| {
            let op = InverseOperator::new(spec.realize()?, solver);
            let estimate = probe_estimate(w, &op)?;
            Ok(DeviationSample { matrix_seed: spec.seed, d: reference - estimate, source })
        })
        .collect();
    let matvecs = (w.n_p() * specs.len()) as u64;
    Ok((samples?, matvecs))
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Train under `training`, measuring the held-out deviation spread every
/// `eval_stride` steps (and at initialization). The pool is pre-warmed in
/// parallel when the run is long enough to touch most entries anyway.
fn run_training_with_curve(
    training: TrainingConfig,
    eval_stride: u64,
    specs: &[MatrixSpec],
    references: &[f64],
    source: TraceSource,
    counters: &mut Counters,
) -> Result<(Trainer, Vec<CurvePoint>)> {
    let solver = training.solver_settings();
    let mut trainer = Trainer::new(training)?;
    if trainer.state.config.n_training >= trainer.pool.len() as u64 {
        trainer.pool.prewarm()?;
    }
    let mut points = Vec::new();
    let measure = |trainer: &Trainer, counters: &mut Counters| -> Result<CurvePoint> {
        let (samples, matvecs) =
            deviations_against(&trainer.state.w, specs, references, source, solver)?;
        counters.evaluation += matvecs;
        let ds: Vec<f64> = samples.iter().map(|s| s.d).collect();
        let (mean_d, std_d) = mean_and_std(&ds);
        Ok(CurvePoint { t: trainer.state.t, std_d, mean_d })
    };
    points.push(measure(&trainer, counters)?);
    let total = trainer.state.config.n_training;
    while trainer.state.t < total {
        let next = (trainer.state.t + eval_stride).min(total);
        let result = trainer.run_until(next, None);
        if let Err(e) = result {
            counters.absorb_trainer(&trainer);
            return Err(e);
        }
        points.push(measure(&trainer, counters)?);
    }
    counters.absorb_trainer(&trainer);
    Ok((trainer, points))
}

/// Write the standard outputs of one training: curve, log, checkpoint.
fn emit_training_outputs(
    out: &mut OutputDir,
    suffix: &str,
    trainer: &Trainer,
    points: &[CurvePoint],
) -> Result<()> {
    out.write(&format!("curve{suffix}.csv"), curve_csv(points).as_bytes())?;
    out.write(
        &format!("training_log{suffix}.csv"),
        trainer.log.to_csv().as_bytes(),
    )?;
    if !trainer.log.events.is_empty() {
        out.write(
            &format!("events{suffix}.txt"),
            trainer.log.events.join("\n").as_bytes(),
        )?;
    }
    let name = format!("checkpoint{suffix}.tpck");
    trainer.save_checkpoint(&out.join(&name))?;
    out.record_existing(&name)?;
    Ok(())
}

struct ScanSummaryRow {
    value: f64,
    final_std_d: f64,
    final_mean_d: f64,
    matvecs: u64,
}

fn scan_summary_csv(param: &str, rows: &[ScanSummaryRow]) -> String {
    let mut out = format!("{param},final_std_d,final_mean_d,train_matvecs\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.value, r.final_std_d, r.final_mean_d, r.matvecs
        ));
    }
    out
}

/// The momentum coefficient the scan pairs with each alpha, following the
/// published pairings (larger eta for smaller alpha).
fn eta_for_alpha(alpha: f64, l: usize) -> f64 {
    if alpha >= 1e-5 {
        0.8
    } else if alpha == 0.0 {
        0.5
    } else if l >= 1000 {
        0.65
    } else {
        0.5
    }
}

fn scan_values(cfg: &HarnessConfig, default: &[f64]) -> Vec<f64> {
    cfg.scan.clone().unwrap_or_else(|| default.to_vec())
}

/// A generic scan recipe: for each scan value, tweak the training config,
/// run with the shared learning-curve protocol, and emit per-point curves
/// plus a summary.
fn run_scan(
    cfg: &HarnessConfig,
    out: &mut OutputDir,
    counters: &mut Counters,
    param: &str,
    values: &[f64],
    tweak: impl Fn(&mut TrainingConfig, f64),
) -> Result<()> {
    let specs = test_specs(cfg, cfg.test_matrices);
    let mode = resolve_references(cfg);
    let solver = cfg.training.solver_settings();
    let (references, source, ref_matvecs) =
        reference_traces(&specs, mode, solver, cfg.training.seed, "test-ref")?;
    counters.evaluation += ref_matvecs;

    let mut summary = Vec::new();
    for (index, &value) in values.iter().enumerate() {
        let mut training = cfg.training.clone();
        // Each scan point trains on its own ensemble stream; the held-out
        // matrices above stay fixed.
        training.seed = derive_seed(cfg.training.seed, param, index as u64);
        tweak(&mut training, value);
        training.validate()?;
        let (trainer, points) = run_training_with_curve(
            training,
            cfg.eval_stride,
            &specs,
            &references,
            source,
            counters,
        )?;
        let label = format!("_{param}{value}");
        emit_training_outputs(out, &label, &trainer, &points)?;
        let last = points.last().expect("curve has at least the t=0 point");
        summary.push(ScanSummaryRow {
            value,
            final_std_d: last.std_d,
            final_mean_d: last.mean_d,
            matvecs: trainer.state.train_matvecs,
        });
    }
    out.write(
        "scan_summary.csv",
        scan_summary_csv(param, &summary).as_bytes(),
    )?;
    Ok(())
}

fn run_train(cfg: &HarnessConfig, out: &mut OutputDir, counters: &mut Counters) -> Result<()> {
    let specs = test_specs(cfg, cfg.test_matrices);
    let mode = resolve_references(cfg);
    let solver = cfg.training.solver_settings();
    let (references, source, ref_matvecs) =
        reference_traces(&specs, mode, solver, cfg.training.seed, "test-ref")?;
    counters.evaluation += ref_matvecs;
    let (trainer, points) = run_training_with_curve(
        cfg.training.clone(),
        cfg.eval_stride,
        &specs,
        &references,
        source,
        counters,
    )?;
    emit_training_outputs(out, "", &trainer, &points)
}

fn run_fig1(cfg: &HarnessConfig, out: &mut OutputDir, counters: &mut Counters) -> Result<()> {
    let curve_specs = test_specs(cfg, cfg.test_matrices);
    let mode = resolve_references(cfg);
    let solver = cfg.training.solver_settings();
    let (curve_refs, source, ref_matvecs) =
        reference_traces(&curve_specs, mode, solver, cfg.training.seed, "test-ref")?;
    counters.evaluation += ref_matvecs;
    let (trainer, points) = run_training_with_curve(
        cfg.training.clone(),
        cfg.eval_stride,
        &curve_specs,
        &curve_refs,
        source,
        counters,
    )?;
    emit_training_outputs(out, "", &trainer, &points)?;

    // Fresh matrices for the deviation histogram, separate from the
    // training pool and the curve set.
    let hist_specs: Vec<MatrixSpec> = (0..cfg.hist_matrices)
        .map(|i| MatrixSpec {
            l: cfg.training.l,
            seed: derive_seed(cfg.training.seed, "hist-matrix", i as u64),
            noise_sigma: cfg.training.noise_sigma,
        })
        .collect();
    let (hist_refs, hist_source, hist_ref_matvecs) =
        reference_traces(&hist_specs, mode, solver, cfg.training.seed, "hist-ref")?;
    counters.evaluation += hist_ref_matvecs;
    let (samples, probe_matvecs) = deviations_against(
        &trainer.state.w,
        &hist_specs,
        &hist_refs,
        hist_source,
        solver,
    )?;
    counters.evaluation += probe_matvecs;
    out.write("deviations.csv", deviations_csv(&samples).as_bytes())?;
    let stats = deviation_stats(&samples, None)?;
    out.write(
        "stats.json",
        serde_json::to_string_pretty(&stats).expect("stats serialize").as_bytes(),
    )?;
    Ok(())
}

fn run_fig3(cfg: &HarnessConfig, out: &mut OutputDir, counters: &mut Counters) -> Result<()> {
    let solver = cfg.training.solver_settings();
    let n_ops = 4usize;
    let ops: Result<Vec<(InverseOperator, f64)>> = (0..n_ops)
        .map(|i| {
            let spec = MatrixSpec {
                l: cfg.training.l,
                seed: derive_seed(cfg.training.seed, "fig3-matrix", i as u64),
                noise_sigma: cfg.training.noise_sigma,
            };
            let op = InverseOperator::new(spec.realize()?, solver);
            let exact = exact_trace(&op)?;
            Ok((op, exact))
        })
        .collect();
    let ops = ops?;
    counters.evaluation += (n_ops * cfg.training.l) as u64;

    let n_z_list: Vec<usize> = scan_values(cfg, &[100.0, 400.0, 1600.0, 6400.0])
        .iter()
        .map(|&v| v as usize)
        .collect();
    let rows = variance_scan(&ops, &n_z_list, cfg.repeats, cfg.training.seed)?;
    for row in &rows {
        counters.evaluation += (row.n_z * cfg.repeats * n_ops) as u64;
        counters.hutchinson_evals += (cfg.repeats * n_ops) as u64;
    }
    out.write("hutchinson_scan.csv", variance_scan_csv(&rows).as_bytes())?;

    // The error has two components: estimator noise at fixed matrix, and the
    // trace fluctuation across matrices. Report them separately as well.
    let mut components = String::from("N_z,noise_std_within_matrix,ensemble_std_across_matrices\n");
    for &n_z in &n_z_list {
        let estimates: Result<Vec<Vec<f64>>> = ops
            .par_iter()
            .enumerate()
            .map(|(op_idx, (op, _))| {
                (0..cfg.repeats)
                    .map(|rep| {
                        let tag = (op_idx * cfg.repeats + rep) as u64;
                        let mut rng = SplitMix64::new(derive_seed(
                            cfg.training.seed,
                            &format!("fig3-components-{n_z}"),
                            tag,
                        ));
                        Ok(hutchinson_trace(op, n_z, &mut rng)?.estimate)
                    })
                    .collect()
            })
            .collect();
        let estimates = estimates?;
        counters.evaluation += (n_z * cfg.repeats * n_ops) as u64;
        counters.hutchinson_evals += (cfg.repeats * n_ops) as u64;
        let per_op: Vec<(f64, f64)> = estimates.iter().map(|e| mean_and_std(e)).collect();
        let noise = per_op.iter().map(|&(_, s)| s).sum::<f64>() / n_ops as f64;
        let means: Vec<f64> = per_op.iter().map(|&(m, _)| m).collect();
        let (_, ensemble) = mean_and_std(&means);
        components.push_str(&format!("{n_z},{noise},{ensemble}\n"));
    }
    out.write("fig3_components.csv", components.as_bytes())?;
    Ok(())
}

fn load_probing_set(cfg: &HarnessConfig) -> Result<(ProbingVectorSet, Option<Trainer>)> {
    match &cfg.checkpoint {
        Some(path) => {
            let trainer = Trainer::load_checkpoint(path)?;
            Ok((trainer.state.w.clone(), Some(trainer)))
        }
        None => {
            let mut rng =
                SplitMix64::new(derive_seed(cfg.training.seed, "init", 0));
            let w = ProbingVectorSet::init(cfg.training.n_p, cfg.training.l, &mut rng)?;
            Ok((w, None))
        }
    }
}

fn run_evaluate(cfg: &HarnessConfig, out: &mut OutputDir, counters: &mut Counters) -> Result<()> {
    let path = cfg.checkpoint.as_ref().ok_or_else(|| {
        Error::Config("missing required key checkpoint for recipe evaluate".into())
    })?;
    let trainer = Trainer::load_checkpoint(path)?;
    let w = trainer.state.w.clone();
    let solver = trainer.state.config.solver_settings();
    let l = trainer.state.config.l;
    let sigma = trainer.state.config.noise_sigma;

    // Calibrate on the pool's cached stochastic estimates (free: they were
    // computed during training); cap the set to keep probe costs bounded.
    let cached = trainer.pool.cached_estimates();
    let calibration: Vec<(MatrixSpec, f64)> = cached.into_iter().take(2_000).collect();
    let cal_samples: Result<Vec<DeviationSample>> = calibration
        .par_iter()
        .map(|(spec, cached_trace)| {
            let op = InverseOperator::new(spec.realize()?, solver);
            let estimate = probe_estimate(&w, &op)?;
            Ok(DeviationSample {
                matrix_seed: spec.seed,
                d: cached_trace - estimate,
                source: TraceSource::Stochastic { n_z: trainer.pool.n_z() },
            })
        })
        .collect();
    let cal_samples = cal_samples?;
    counters.evaluation += (w.n_p() * calibration.len()) as u64;
    let ce = calibrate_bias(&w, &cal_samples)?;

    // Held-out evaluation of the corrected estimator.
    let eval_specs: Vec<MatrixSpec> = (0..cfg.n_samples)
        .map(|i| MatrixSpec {
            l,
            seed: derive_seed(cfg.training.seed, "eval-matrix", i as u64),
            noise_sigma: sigma,
        })
        .collect();
    let mode = resolve_references(cfg);
    let (references, source, ref_matvecs) =
        reference_traces(&eval_specs, mode, solver, cfg.training.seed, "eval-ref")?;
    counters.evaluation += ref_matvecs;
    let (raw, probe_matvecs) =
        deviations_against(&w, &eval_specs, &references, source, solver)?;
    counters.evaluation += probe_matvecs;
    let corrected: Vec<DeviationSample> = raw
        .iter()
        .map(|s| DeviationSample { d: s.d - ce.d_bar, ..*s })
        .collect();

    out.write("deviations.csv", deviations_csv(&corrected).as_bytes())?;
    let stats = deviation_stats(&corrected, None)?;
    out.write(
        "stats.json",
        serde_json::to_string_pretty(&stats).expect("stats serialize").as_bytes(),
    )?;
    let calibration_report = serde_json::json!({
        "d_bar": ce.d_bar,
        "calibration_samples": ce.calibration_seeds.len(),
        "heldout_mean": stats.mean,
        "heldout_std": stats.std,
        "heldout_count": stats.count,
    });
    out.write(
        "calibration.json",
        serde_json::to_string_pretty(&calibration_report).expect("serialize").as_bytes(),
    )?;
    counters.absorb_trainer(&trainer);
    Ok(())
}

fn run_unbiased(cfg: &HarnessConfig, out: &mut OutputDir, counters: &mut Counters) -> Result<()> {
    let (w, trainer) = load_probing_set(cfg)?;
    let solver = cfg.training.solver_settings();
    let ce = CorrectedEstimator::uncorrected(w);
    let specs: Vec<MatrixSpec> = (0..cfg.n_samples)
        .map(|i| MatrixSpec {
            l: cfg.training.l,
            seed: derive_seed(cfg.training.seed, "unbiased-matrix", i as u64),
            noise_sigma: cfg.training.noise_sigma,
        })
        .collect();
    let mode = resolve_references(cfg);
    let f = cfg.trace_function()?;
    let report = unbiased_function_expectation(
        &ce,
        &specs,
        f,
        cfg.n_c,
        mode,
        CorrectionSubset::First,
        solver,
        cfg.training.seed,
    )?;
    counters.evaluation += (ce.w.n_p() * specs.len()) as u64;
    counters.evaluation += match mode {
        ReferenceMode::Exact => (cfg.training.l * cfg.n_c) as u64,
        ReferenceMode::Stochastic { n_z } => (n_z * cfg.n_c) as u64,
    };
    out.write(
        "unbiased.json",
        serde_json::to_string_pretty(&report).expect("report serialize").as_bytes(),
    )?;
    if let Some(trainer) = trainer {
        counters.absorb_trainer(&trainer);
    }
    Ok(())
}

fn dispatch(
    name: RecipeName,
    cfg: &HarnessConfig,
    out: &mut OutputDir,
    counters: &mut Counters,
) -> Result<()> {
    match name {
        RecipeName::Train => run_train(cfg, out, counters),
        RecipeName::Fig1Hist => run_fig1(cfg, out, counters),
        RecipeName::Fig3Hutchinson => run_fig3(cfg, out, counters),
        RecipeName::Evaluate => run_evaluate(cfg, out, counters),
        RecipeName::Unbiased => run_unbiased(cfg, out, counters),
        RecipeName::Fig2NoiseScan => {
            let values = scan_values(cfg, &[100.0, 400.0, 800.0, 1600.0]);
            run_scan(cfg, out, counters, "Nz", &values, |t, v| t.n_z = v as usize)
        }
        RecipeName::Fig4PoolScan => {
            let values = scan_values(cfg, &[100.0, 1000.0, 10000.0]);
            run_scan(cfg, out, counters, "Nr", &values, |t, v| t.n_r = v as usize)
        }
        RecipeName::Fig5AlphaScan => {
            let values = scan_values(cfg, &[0.0, 1e-6, 1e-5, 1e-4]);
            let l = cfg.training.l;
            run_scan(cfg, out, counters, "alpha", &values, move |t, v| {
                t.alpha = v;
                t.eta = eta_for_alpha(v, l);
            })
        }
        RecipeName::Fig7NpScan => {
            let values = scan_values(cfg, &[2.0, 4.0, 8.0, 16.0]);
            run_scan(cfg, out, counters, "Np", &values, |t, v| t.n_p = v as usize)
        }
    }
}

fn build_manifest(
    name: &str,
    cfg: &HarnessConfig,
    out: &OutputDir,
    counters: Counters,
    status: &str,
    error: Option<String>,
    started: Instant,
) -> Manifest {
    Manifest {
        recipe: name.to_string(),
        status: status.to_string(),
        error,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: cfg.training.seed,
        config: serde_json::to_value(cfg).expect("config serializes"),
        outputs: out.outputs(),
        matvecs: MatvecReport::new(
            counters.training,
            counters.pool_estimation,
            counters.evaluation,
            counters.wasted,
        ),
        expected_training_matvecs: counters.expected_training,
        hutchinson_evaluations: counters.hutchinson_evals,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    }
}

/// Run a recipe end to end, always leaving a manifest behind.
pub fn run_recipe(name: RecipeName, cfg: &HarnessConfig) -> Result<Manifest> {
    cfg.validate()?;
    let started = Instant::now();
    let mut out = OutputDir::create(&cfg.out_dir)?;
    let mut counters = Counters::default();
    match dispatch(name, cfg, &mut out, &mut counters) {
        Ok(()) => {
            let manifest =
                build_manifest(name.id(), cfg, &out, counters, "ok", None, started);
            out.write_manifest(&manifest)?;
            Ok(manifest)
        }
        Err(e) => {
            let manifest = build_manifest(
                name.id(),
                cfg,
                &out,
                counters,
                "failed",
                Some(e.to_string()),
                started,
            );
            // Best effort: the failure itself is what gets reported.
            let _ = out.write_manifest(&manifest);
            Err(e)
        }
    }
}

/// Write the pool's matrix spec records (`L,seed,noise_sigma` lines) and a
/// manifest. The matrices are regenerated from these records, never stored.
pub fn run_gen_pool(cfg: &HarnessConfig) -> Result<Manifest> {
    cfg.validate()?;
    let started = Instant::now();
    let mut out = OutputDir::create(&cfg.out_dir)?;
    let pool = crate::pool::MatrixPool::generate(
        cfg.training.l,
        cfg.training.n_r,
        cfg.training.noise_sigma,
        cfg.training.seed,
        cfg.training.n_z,
        cfg.training.solver_settings(),
    )?;
    out.write("pool_specs.txt", pool.spec_lines().as_bytes())?;
    let manifest = build_manifest(
        "gen-pool",
        cfg,
        &out,
        Counters::default(),
        "ok",
        None,
        started,
    );
    out.write_manifest(&manifest)?;
    Ok(manifest)
}
