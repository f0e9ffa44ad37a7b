//! Harness configuration: a line-based `key=value` file, overridden by CLI
//! flags, resolved against the defaults.
//!
//! Precedence is defaults < file < flags. Every error names the offending
//! key.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::TraceFunction;
use crate::trainer::TrainingConfig;

/// How reference traces for evaluation are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReferenceChoice {
    /// Exact traces for L <= 200, stochastic above.
    Auto,
    Exact,
    Stochastic,
}

/// Number of noise vectors for stochastic reference traces.
pub const STOCHASTIC_REFERENCE_NZ: usize = 20_000;

/// Dimension up to which `Auto` references stay exact.
pub const AUTO_EXACT_MAX_L: usize = 200;

/// Fully resolved harness configuration.
#[derive(Debug, Clone, Serialize)]
pub struct HarnessConfig {
    pub training: TrainingConfig,
    pub out_dir: PathBuf,
    /// Learning-curve measurement stride (in training steps).
    pub eval_stride: u64,
    /// Held-out test matrices for learning curves.
    pub test_matrices: usize,
    /// Test matrices for deviation histograms.
    pub hist_matrices: usize,
    /// Repeats per point in Hutchinson scans.
    pub repeats: usize,
    /// Scan values for scan recipes (meaning depends on the recipe).
    pub scan: Option<Vec<f64>>,
    pub f: String,
    /// Sample count N for the unbiased estimator.
    pub n_samples: usize,
    /// Correction-subset size N_c.
    pub n_c: usize,
    pub references: ReferenceChoice,
    pub checkpoint: Option<PathBuf>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            training: TrainingConfig::default(),
            out_dir: PathBuf::from("out"),
            eval_stride: 5_000,
            test_matrices: 50,
            hist_matrices: 10_000,
            repeats: 16,
            scan: None,
            f: TraceFunction::Square.id().to_string(),
            n_samples: 400,
            n_c: 40,
            references: ReferenceChoice::Auto,
            checkpoint: None,
        }
    }
}

impl HarnessConfig {
    pub fn trace_function(&self) -> Result<TraceFunction> {
        self.f.parse()
    }

    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        self.trace_function()?;
        if self.test_matrices < 2 {
            return Err(Error::Config(format!(
                "test_matrices must be at least 2, got {}",
                self.test_matrices
            )));
        }
        if self.hist_matrices < 2 {
            return Err(Error::Config(format!(
                "hist_matrices must be at least 2, got {}",
                self.hist_matrices
            )));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.eval_stride == 0 {
            return Err(Error::Config("eval_stride must be at least 1".into()));
        }
        if self.n_samples == 0 || self.n_c == 0 || self.n_c > self.n_samples {
            return Err(Error::Config(format!(
                "need 1 <= Nc <= N, got Nc={}, N={}",
                self.n_c, self.n_samples
            )));
        }
        Ok(())
    }
}

/// Unresolved overrides from a config file or CLI flags. `None` means "not
/// given".
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub l: Option<usize>,
    pub n_p: Option<usize>,
    pub n_z: Option<usize>,
    pub eta: Option<f64>,
    pub alpha: Option<f64>,
    pub n_r: Option<usize>,
    pub steps: Option<u64>,
    pub seed: Option<u64>,
    pub sigma: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub bootstrap_len: Option<u64>,
    pub log_stride: Option<u64>,
    pub out: Option<PathBuf>,
    pub eval_stride: Option<u64>,
    pub test_matrices: Option<usize>,
    pub hist_matrices: Option<usize>,
    pub repeats: Option<usize>,
    pub scan: Option<Vec<f64>>,
    pub f: Option<String>,
    pub n_samples: Option<usize>,
    pub n_c: Option<usize>,
    pub references: Option<ReferenceChoice>,
    pub checkpoint: Option<PathBuf>,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("key {key}: cannot parse '{value}': {e}")))
}

fn parse_scan(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|part| parse_value::<f64>(key, part.trim()))
        .collect()
}

fn parse_references(key: &str, value: &str) -> Result<ReferenceChoice> {
    match value {
        "auto" => Ok(ReferenceChoice::Auto),
        "exact" => Ok(ReferenceChoice::Exact),
        "stochastic" => Ok(ReferenceChoice::Stochastic),
        other => Err(Error::Config(format!(
            "key {key}: expected auto, exact, or stochastic, got '{other}'"
        ))),
    }
}

impl ConfigOverrides {
    /// Set one key from its textual value; unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "L" => self.l = Some(parse_value(key, value)?),
            "Np" => self.n_p = Some(parse_value(key, value)?),
            "Nz" => self.n_z = Some(parse_value(key, value)?),
            "eta" => self.eta = Some(parse_value(key, value)?),
            "alpha" => self.alpha = Some(parse_value(key, value)?),
            "Nr" => self.n_r = Some(parse_value(key, value)?),
            "steps" => self.steps = Some(parse_value(key, value)?),
            "seed" => self.seed = Some(parse_value(key, value)?),
            "sigma" => self.sigma = Some(parse_value(key, value)?),
            "tol" => self.tol = Some(parse_value(key, value)?),
            "max_iter" => self.max_iter = Some(parse_value(key, value)?),
            "bootstrap_len" => self.bootstrap_len = Some(parse_value(key, value)?),
            "log_stride" => self.log_stride = Some(parse_value(key, value)?),
            "out" => self.out = Some(PathBuf::from(value)),
            "eval_stride" => self.eval_stride = Some(parse_value(key, value)?),
            "test_matrices" => self.test_matrices = Some(parse_value(key, value)?),
            "hist_matrices" => self.hist_matrices = Some(parse_value(key, value)?),
            "repeats" => self.repeats = Some(parse_value(key, value)?),
            "scan" => self.scan = Some(parse_scan(key, value)?),
            "f" => self.f = Some(value.to_string()),
            "N" => self.n_samples = Some(parse_value(key, value)?),
            "Nc" => self.n_c = Some(parse_value(key, value)?),
            "references" => self.references = Some(parse_references(key, value)?),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Parse a `key=value` file (blank lines and `#` comments allowed).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut overrides = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got '{line}'", lineno + 1))
            })?;
            overrides.set(key.trim(), value.trim())?;
        }
        Ok(overrides)
    }

    /// Overlay `other` on top of `self` (later wins).
    pub fn merged_with(mut self, other: &ConfigOverrides) -> Self {
        macro_rules! take {
            ($($field:ident),* $(,)?) => {
                $(if other.$field.is_some() { self.$field = other.$field.clone(); })*
            };
        }
        take!(
            l, n_p, n_z, eta, alpha, n_r, steps, seed, sigma, tol, max_iter,
            bootstrap_len, log_stride, out, eval_stride, test_matrices,
            hist_matrices, repeats, scan, f, n_samples, n_c, references,
            checkpoint,
        );
        self
    }

    /// Resolve against the defaults and validate.
    pub fn resolve(&self) -> Result<HarnessConfig> {
        let mut cfg = HarnessConfig::default();
        let t = &mut cfg.training;
        if let Some(l) = self.l {
            t.l = l;
            // Keep the iteration cap tied to the dimension unless overridden.
            t.solver_max_iter = crate::bicgstab::default_max_iter(l);
        }
        if let Some(v) = self.n_p {
            t.n_p = v;
        }
        if let Some(v) = self.n_z {
            t.n_z = v;
        }
        if let Some(v) = self.eta {
            t.eta = v;
        }
        if let Some(v) = self.alpha {
            t.alpha = v;
        }
        if let Some(v) = self.n_r {
            t.n_r = v;
        }
        if let Some(v) = self.steps {
            t.n_training = v;
        }
        if let Some(v) = self.seed {
            t.seed = v;
        }
        if let Some(v) = self.sigma {
            t.noise_sigma = v;
        }
        if let Some(v) = self.tol {
            t.solver_tol = v;
        }
        if let Some(v) = self.max_iter {
            t.solver_max_iter = v;
        }
        if let Some(v) = self.bootstrap_len {
            t.bootstrap_len = v;
        }
        if let Some(v) = self.log_stride {
            t.log_stride = v;
        }
        if let Some(v) = &self.out {
            cfg.out_dir = v.clone();
        }
        if let Some(v) = self.eval_stride {
            cfg.eval_stride = v;
        }
        if let Some(v) = self.test_matrices {
            cfg.test_matrices = v;
        }
        if let Some(v) = self.hist_matrices {
            cfg.hist_matrices = v;
        }
        if let Some(v) = self.repeats {
            cfg.repeats = v;
        }
        if let Some(v) = &self.scan {
            cfg.scan = Some(v.clone());
        }
        if let Some(v) = &self.f {
            cfg.f = v.clone();
        }
        if let Some(v) = self.n_samples {
            cfg.n_samples = v;
        }
        if let Some(v) = self.n_c {
            cfg.n_c = v;
        }
        if let Some(v) = self.references {
            cfg.references = v;
        }
        if let Some(v) = &self.checkpoint {
            cfg.checkpoint = Some(v.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Resolve a configuration from an optional file and flag overrides
/// (defaults < file < flags).
pub fn parse_config(path: Option<&Path>, flags: &ConfigOverrides) -> Result<HarnessConfig> {
    let from_file = match path {
        Some(p) => ConfigOverrides::from_file(p)?,
        None => ConfigOverrides::default(),
    };
    from_file.merged_with(flags).resolve()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(contents: &str) -> PathBuf {
        let path = std::env::temp_dir().join(format!(
            "traceprobe-config-{}-{}.cfg",
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .unwrap()
                .as_nanos()
        ));
        fs::write(&path, contents).unwrap();
        path
    }

    #[test]
    fn empty_file_gives_published_l100_defaults() {
        let path = write_temp("");
        let cfg = parse_config(Some(&path), &ConfigOverrides::default()).unwrap();
        assert_eq!(cfg.training.l, 100);
        assert_eq!(cfg.training.n_p, 8);
        assert_eq!(cfg.training.n_z, 800);
        assert_eq!(cfg.training.eta, 0.8);
        assert_eq!(cfg.training.alpha, 1e-5);
        fs::remove_file(path).unwrap();
    }

    #[test]
    fn out_of_range_eta_names_the_key() {
        let path = write_temp("eta=1.5\n");
        let err = parse_config(Some(&path), &ConfigOverrides::default()).unwrap_err();
        assert!(err.to_string().contains("eta"), "{err}");
        fs::remove_file(path).unwrap();
    }

    #[test]
    fn unknown_key_is_named() {
        let path = write_temp("etaa=0.5\n");
        let err = parse_config(Some(&path), &ConfigOverrides::default()).unwrap_err();
        assert!(err.to_string().contains("etaa"), "{err}");
        fs::remove_file(path).unwrap();
    }

    #[test]
    fn flags_override_file_values() {
        let path = write_temp("alpha=1e-5\nL=50\n");
        let mut flags = ConfigOverrides::default();
        flags.set("alpha", "1e-6").unwrap();
        let cfg = parse_config(Some(&path), &flags).unwrap();
        assert_eq!(cfg.training.alpha, 1e-6);
        assert_eq!(cfg.training.l, 50);
        fs::remove_file(path).unwrap();
    }

    #[test]
    fn comments_and_blanks_are_skipped() {
        let path = write_temp("# comment\n\nNp=4\n  Nz = 16 \n");
        let cfg = parse_config(Some(&path), &ConfigOverrides::default()).unwrap();
        assert_eq!(cfg.training.n_p, 4);
        assert_eq!(cfg.training.n_z, 16);
        fs::remove_file(path).unwrap();
    }

    #[test]
    fn scan_lists_parse() {
        let mut flags = ConfigOverrides::default();
        flags.set("scan", "100, 400,1600").unwrap();
        let cfg = flags.resolve().unwrap();
        assert_eq!(cfg.scan, Some(vec![100.0, 400.0, 1600.0]));
    }

    #[test]
    fn max_iter_follows_dimension_override() {
        let mut flags = ConfigOverrides::default();
        flags.set("L", "40").unwrap();
        let cfg = flags.resolve().unwrap();
        assert_eq!(cfg.training.solver_max_iter, 400);
    }

    #[test]
    fn malformed_line_is_reported_with_number() {
        let path = write_temp("Np=4\nnot a pair\n");
        let err = parse_config(Some(&path), &ConfigOverrides::default()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        fs::remove_file(path).unwrap();
    }
}
