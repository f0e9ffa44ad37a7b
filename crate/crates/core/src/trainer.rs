//! Online gradient-descent training of probing vectors.
//!
//! Each step picks one matrix from the pool and updates the vectors by
//!
//! ```text
//! dw_t   = gamma_t grad Q_t(w_t) + eta dw_{t-1}
//! w_{t+1} = w_t - dw_t
//! ```
//!
//! For the first `bootstrap_len` steps `gamma_t` comes from the exact line
//! search; afterwards `gamma_t = gamma0 / (1 + alpha t)` with `gamma0` the
//! median of the bootstrap rates.
//!
//! Operator applications are the cost currency. Per completed step the
//! trainer spends `N_p` forward applications for the estimate plus `N_p`
//! transpose applications for the gradient (none when the operator is
//! symmetric), and during bootstrap an extra `N_p` forward applications for
//! the line-search gradient products plus `N_p` more for momentum products
//! when the previous update is nonzero. Applications of steps that fail
//! mid-way are tallied separately as wasted.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::inverse::SolverSettings;
use crate::linesearch::line_search_gamma;
use crate::operator::LinearOperator;
use crate::pool::MatrixPool;
use crate::probing::{cost_gradient_with_products, probe_apply, ProbingVectorSet};
use crate::rng::{derive_seed, SplitMix64};

/// Consecutive solver failures tolerated before a run aborts.
pub const MAX_CONSECUTIVE_FAILURES: u32 = 10;

/// Attempts of the non-finite guard (halving `gamma`) before giving up.
const MAX_GUARD_HALVINGS: u32 = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingConfig {
    pub l: usize,
    pub n_p: usize,
    pub n_z: usize,
    pub eta: f64,
    pub alpha: f64,
    pub n_r: usize,
    pub n_training: u64,
    pub bootstrap_len: u64,
    pub seed: u64,
    pub noise_sigma: f64,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    pub log_stride: u64,
}

impl Default for TrainingConfig {
    /// The L=100 parameter column (N_p=8, N_z=800, eta=0.8, alpha=1e-5) with
    /// desk-scale pool size and update count.
    fn default() -> Self {
        Self {
            l: 100,
            n_p: 8,
            n_z: 800,
            eta: 0.8,
            alpha: 1e-5,
            n_r: 10_000,
            n_training: 200_000,
            bootstrap_len: 100,
            seed: 1,
            noise_sigma: 0.1,
            solver_tol: crate::bicgstab::DEFAULT_TOL,
            solver_max_iter: crate::bicgstab::default_max_iter(100),
            log_stride: 100,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.l < 3 {
            return fail(format!("L must be at least 3, got {}", self.l));
        }
        if self.n_p == 0 {
            return fail("Np must be at least 1".into());
        }
        if self.n_z < 2 {
            return fail(format!("Nz must be at least 2, got {}", self.n_z));
        }
        if !(0.0..1.0).contains(&self.eta) {
            return fail(format!("eta must lie in [0, 1), got {}", self.eta));
        }
        if self.alpha.is_nan() || self.alpha < 0.0 {
            return fail(format!("alpha must be nonnegative, got {}", self.alpha));
        }
        if self.n_r == 0 {
            return fail("Nr must be at least 1".into());
        }
        if self.bootstrap_len == 0 {
            return fail("bootstrap_len must be at least 1".into());
        }
        if !self.solver_tol.is_finite() || self.solver_tol <= 0.0 {
            return fail(format!("tol must be positive, got {}", self.solver_tol));
        }
        if self.solver_max_iter == 0 {
            return fail("max_iter must be at least 1".into());
        }
        if self.noise_sigma < 0.0 {
            return fail(format!("sigma must be nonnegative, got {}", self.noise_sigma));
        }
        if self.log_stride == 0 {
            return fail("log_stride must be at least 1".into());
        }
        Ok(())
    }

    pub fn solver_settings(&self) -> SolverSettings {
        SolverSettings { tol: self.solver_tol, max_iter: self.solver_max_iter }
    }
}

/// `gamma_t = gamma0 / (1 + alpha t)`, defined once the bootstrap median has
/// been fixed.
pub fn schedule_gamma(t: u64, gamma0: Option<f64>, alpha: f64) -> Result<f64> {
    let gamma0 = gamma0.ok_or(Error::ScheduleNotReady)?;
    Ok(gamma0 / (1.0 + alpha * t as f64))
}

/// Lower-middle median: ascending index `(n - 1) / 2`.
fn median_lower(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[(sorted.len() - 1) / 2]
}

/// What one completed step looked like.
#[derive(Debug, Clone, Copy)]
pub struct StepReport {
    /// The effective learning rate (after any guard halvings).
    pub gamma: f64,
    /// Cost `Q_t` at the pre-update vectors.
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct TrainerState {
    pub config: TrainingConfig,
    pub w: ProbingVectorSet,
    pub delta_prev: ProbingVectorSet,
    /// Completed updates.
    pub t: u64,
    pub gamma_history: Vec<f64>,
    pub gamma0: Option<f64>,
    /// Operator applications committed by completed steps.
    pub train_matvecs: u64,
    /// Applications spent on steps that later failed.
    pub wasted_matvecs: u64,
    /// Bootstrap steps that computed momentum products for the line search.
    pub momentum_search_steps: u64,
    /// Times the non-finite guard halved the rate.
    pub rejected_updates: u64,
    pub degenerate_searches: u64,
}

impl TrainerState {
    /// Fresh state with normally-initialized vectors drawn from the seed
    /// stream `derive_seed(seed, "init", 0)`.
    pub fn new(config: TrainingConfig) -> Result<Self> {
        let mut rng = SplitMix64::new(derive_seed(config.seed, "init", 0));
        let w = ProbingVectorSet::init(config.n_p, config.l, &mut rng)?;
        let delta_prev = ProbingVectorSet::zeros(config.n_p, config.l);
        Ok(Self {
            config,
            w,
            delta_prev,
            t: 0,
            gamma_history: Vec::new(),
            gamma0: None,
            train_matvecs: 0,
            wasted_matvecs: 0,
            momentum_search_steps: 0,
            rejected_updates: 0,
            degenerate_searches: 0,
        })
    }

    /// One update against a single operator and trace target.
    pub fn training_step<A: LinearOperator + ?Sized>(
        &mut self,
        op: &A,
        trace_target: f64,
    ) -> Result<StepReport> {
        let n_p = self.config.n_p as u64;
        let mut staged_matvecs = 0u64;
        let mut momentum_products_used = false;

        let result = (|| -> Result<StepReport> {
            let products = probe_apply(&self.w, op)?;
            staged_matvecs += n_p;
            let residual = products.estimate - trace_target;
            let q = residual * residual;

            let gradient =
                cost_gradient_with_products(&self.w, op, trace_target, &products)?;
            if !op.is_symmetric() {
                staged_matvecs += n_p;
            }

            let step_index = self.t + 1;
            let mut gamma = if step_index <= self.config.bootstrap_len {
                let momentum_active =
                    self.config.eta != 0.0 && !self.delta_prev.is_zero();
                let outcome = line_search_gamma(
                    &self.w,
                    &gradient,
                    momentum_active.then_some(&self.delta_prev),
                    self.config.eta,
                    op,
                    trace_target,
                    &products,
                )?;
                staged_matvecs += outcome.applications as u64;
                momentum_products_used = momentum_active;
                if outcome.degenerate {
                    self.degenerate_searches += 1;
                }
                outcome.gamma
            } else {
                schedule_gamma(step_index, self.gamma0, self.config.alpha)?
            };

            // Non-finite guard: a too-large rate is halved until the update
            // lands on finite values.
            let mut accepted = None;
            for _ in 0..=MAX_GUARD_HALVINGS {
                let delta = ProbingVectorSet::linear_combination(
                    gamma,
                    &gradient,
                    self.config.eta,
                    &self.delta_prev,
                );
                let mut w_new = self.w.clone();
                w_new.axpy(-1.0, &delta);
                if delta.all_finite() && w_new.all_finite() {
                    accepted = Some((delta, w_new));
                    break;
                }
                self.rejected_updates += 1;
                gamma *= 0.5;
            }
            let (delta, w_new) =
                accepted.ok_or(Error::NonFiniteState { step: step_index })?;

            self.w = w_new;
            self.delta_prev = delta;
            self.t = step_index;
            if step_index <= self.config.bootstrap_len {
                self.gamma_history.push(gamma);
                if step_index == self.config.bootstrap_len {
                    self.gamma0 = Some(median_lower(&self.gamma_history));
                }
            }
            Ok(StepReport { gamma, cost: q })
        })();

        match result {
            Ok(report) => {
                self.train_matvecs += staged_matvecs;
                if momentum_products_used {
                    self.momentum_search_steps += 1;
                }
                Ok(report)
            }
            Err(e) => {
                self.wasted_matvecs += staged_matvecs;
                Err(e)
            }
        }
    }

    /// Applications the pool-driven trainer should have committed: inverse
    /// operators are nonsymmetric, so every step costs `2 N_p`, plus `N_p`
    /// line-search products per bootstrap step and `N_p` momentum products
    /// per bootstrap step that had a nonzero previous update.
    pub fn expected_training_matvecs(&self) -> u64 {
        let n_p = self.config.n_p as u64;
        let bootstrap_steps = self.t.min(self.config.bootstrap_len);
        2 * self.t * n_p + bootstrap_steps * n_p + self.momentum_search_steps * n_p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: u64,
    pub gamma: f64,
    pub cost: f64,
    pub matvecs_cumulative: u64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
    pub events: Vec<String>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,gamma,cost,matvecs_cumulative\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.t, row.gamma, row.cost, row.matvecs_cumulative
            ));
        }
        out
    }
}

/// The full training loop: state, pool, and log.
pub struct Trainer {
    pub state: TrainerState,
    pub pool: MatrixPool,
    pub log: TrainingLog,
    consecutive_failures: u32,
}

impl Trainer {
    pub fn new(config: TrainingConfig) -> Result<Self> {
        config.validate()?;
        let pool = MatrixPool::generate(
            config.l,
            config.n_r,
            config.noise_sigma,
            config.seed,
            config.n_z,
            config.solver_settings(),
        )?;
        let state = TrainerState::new(config)?;
        Ok(Self { state, pool, log: TrainingLog::default(), consecutive_failures: 0 })
    }

    pub(crate) fn from_parts(state: TrainerState, pool: MatrixPool) -> Self {
        Self { state, pool, log: TrainingLog::default(), consecutive_failures: 0 }
    }

    /// One pool pick plus one update. Solver failures are tolerated up to
    /// [`MAX_CONSECUTIVE_FAILURES`] in a row; the step is skipped and `t`
    /// does not advance.
    pub fn step(&mut self) -> Result<()> {
        let picked = self.pool.pick().and_then(|(op, target)| {
            self.state.training_step(&op, target).map(|report| (report, target))
        });
        match picked {
            Ok((report, _)) => {
                self.consecutive_failures = 0;
                let t = self.state.t;
                if t.is_multiple_of(self.state.config.log_stride) || t == 1 {
                    self.log.rows.push(LogRow {
                        t,
                        gamma: report.gamma,
                        cost: report.cost,
                        matvecs_cumulative: self.state.train_matvecs,
                    });
                }
                Ok(())
            }
            Err(e @ Error::SolverFailure { .. }) => {
                self.consecutive_failures += 1;
                self.log
                    .events
                    .push(format!("step {}: {e}", self.state.t + 1));
                if self.consecutive_failures >= MAX_CONSECUTIVE_FAILURES {
                    Err(Error::TrainingAborted {
                        step: self.state.t + 1,
                        failures: self.consecutive_failures,
                    })
                } else {
                    Ok(())
                }
            }
            Err(e) => Err(e),
        }
    }

    /// Advance until `t` reaches `target_t`, optionally checkpointing every
    /// `stride` completed updates. On abort the last checkpoint is preserved
    /// (a final one is written first if a path is configured).
    pub fn run_until(
        &mut self,
        target_t: u64,
        checkpoint: Option<(&Path, u64)>,
    ) -> Result<()> {
        while self.state.t < target_t {
            match self.step() {
                Ok(()) => {
                    if let Some((path, stride)) = checkpoint {
                        if stride > 0 && self.state.t.is_multiple_of(stride) {
                            self.save_checkpoint(path)?;
                        }
                    }
                }
                Err(e) => {
                    if let Some((path, _)) = checkpoint {
                        let _ = self.save_checkpoint(path);
                    }
                    return Err(e);
                }
            }
        }
        Ok(())
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        crate::checkpoint::save(self, path)
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        crate::checkpoint::load(path)
    }

    /// Run a config end to end and hand back the trained vectors and log.
    pub fn train(config: TrainingConfig) -> Result<(ProbingVectorSet, TrainingLog)> {
        let n = config.n_training;
        let mut trainer = Trainer::new(config)?;
        trainer.run_until(n, None)?;
        Ok((trainer.state.w.clone(), trainer.log))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DenseMatrix;

    fn tiny_config() -> TrainingConfig {
        TrainingConfig {
            l: 8,
            n_p: 2,
            n_z: 4,
            eta: 0.5,
            alpha: 1e-4,
            n_r: 5,
            n_training: 30,
            bootstrap_len: 10,
            seed: 7,
            noise_sigma: 0.1,
            solver_tol: 1e-10,
            solver_max_iter: 200,
            log_stride: 1,
        }
    }

    #[test]
    fn table_configuration_is_accepted() {
        // The published L=100 parameter column.
        let config = TrainingConfig {
            l: 100,
            n_p: 8,
            n_z: 800,
            eta: 0.8,
            alpha: 1e-5,
            n_r: 100_000,
            n_training: 5_000_000,
            ..TrainingConfig::default()
        };
        config.validate().unwrap();
        let trainer = Trainer::new(config).unwrap();
        assert_eq!(trainer.pool.len(), 100_000);
        assert_eq!(trainer.state.w.n_p(), 8);
    }

    #[test]
    fn config_range_checks() {
        let mut config = tiny_config();
        config.eta = 1.0;
        assert!(config.validate().is_err());
        config.eta = -0.1;
        assert!(config.validate().is_err());
        let mut config = tiny_config();
        config.alpha = -1e-9;
        assert!(config.validate().is_err());
    }

    #[test]
    fn zero_training_steps_keep_initial_vectors() {
        let mut config = tiny_config();
        config.n_training = 0;
        let fresh = TrainerState::new(config.clone()).unwrap();
        let (w, log) = Trainer::train(config).unwrap();
        assert_eq!(w, fresh.w);
        assert!(log.rows.is_empty());
    }

    #[test]
    fn schedule_values() {
        assert_eq!(schedule_gamma(123, Some(0.5), 0.0).unwrap(), 0.5);
        let g = schedule_gamma(100_000, Some(0.5), 1e-5).unwrap();
        assert!((g - 0.25).abs() < 1e-12);
        assert!(matches!(schedule_gamma(5, None, 0.1), Err(Error::ScheduleNotReady)));
    }

    #[test]
    fn schedule_is_strictly_decreasing_for_positive_alpha() {
        let mut prev = f64::INFINITY;
        for t in 101..200 {
            let g = schedule_gamma(t, Some(1.0), 1e-3).unwrap();
            assert!(g < prev);
            prev = g;
        }
    }

    #[test]
    fn median_is_lower_middle() {
        assert_eq!(median_lower(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median_lower(&[4.0, 1.0, 3.0, 2.0]), 2.0);
    }

    #[test]
    fn zero_gradient_and_zero_momentum_leave_vectors_unchanged() {
        let op = DenseMatrix::diagonal(&[1.0, 2.0, 3.0]);
        let mut config = tiny_config();
        config.l = 3;
        config.n_p = 3;
        let mut state = TrainerState::new(config).unwrap();
        state.w = ProbingVectorSet::basis(3);
        let target = 6.0; // exact trace: residual 0, gradient 0
        let before = state.w.clone();
        let report = state.training_step(&op, target).unwrap();
        assert_eq!(report.gamma, 0.0);
        assert_eq!(state.w, before);
        assert_eq!(state.degenerate_searches, 1);
    }

    #[test]
    fn single_step_hand_arithmetic() {
        // L=1, one probing vector p = (1), operator (2), target 3:
        // estimate 2, residual -1, gradient -8, line-search root
        // gamma = (sqrt(1.5) - 1) / 8, after which p = sqrt(1.5) exactly
        // hits the target.
        let op = DenseMatrix::from_rows(1, vec![2.0]).unwrap();
        let mut config = tiny_config();
        config.l = 1;
        config.n_p = 1;
        config.eta = 0.0;
        let mut state = TrainerState::new(config).unwrap();
        state.w = ProbingVectorSet::from_flat(1, 1, vec![1.0]).unwrap();
        let report = state.training_step(&op, 3.0).unwrap();
        assert_eq!(report.cost, 1.0);
        let expected_gamma = (1.5f64.sqrt() - 1.0) / 8.0;
        assert!((report.gamma - expected_gamma).abs() < 1e-13);
        assert!((state.w.vector(0)[0] - 1.5f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn eta_zero_converges_on_fixed_target() {
        let mut entries = Vec::new();
        let mut rng = SplitMix64::new(33);
        for _ in 0..36 {
            entries.push(rng.next_normal());
        }
        let op = DenseMatrix::from_rows(6, entries).unwrap();
        let target = 4.0;
        let mut config = tiny_config();
        config.l = 6;
        config.n_p = 2;
        config.eta = 0.0;
        config.alpha = 0.0;
        config.bootstrap_len = 50;
        let mut state = TrainerState::new(config).unwrap();
        let mut last_cost = f64::INFINITY;
        for _ in 0..50 {
            last_cost = state.training_step(&op, target).unwrap().cost;
        }
        assert!(last_cost < 1e-20, "cost {last_cost}");
    }

    #[test]
    fn momentum_recursion_with_eta_zero() {
        let op = DenseMatrix::diagonal(&[2.0, 5.0, 1.0, 3.0]);
        let mut config = tiny_config();
        config.l = 4;
        config.n_p = 2;
        config.eta = 0.0;
        let mut state = TrainerState::new(config).unwrap();
        let w_before = state.w.clone();
        let report = state.training_step(&op, 10.0).unwrap();
        // dw_t must equal gamma * grad exactly when eta = 0.
        let grad = crate::probing::cost_gradient(&w_before, &op, 10.0).unwrap();
        let expected = ProbingVectorSet::linear_combination(
            report.gamma,
            &grad,
            0.0,
            &ProbingVectorSet::zeros(2, 4),
        );
        assert_eq!(state.delta_prev, expected);
    }

    #[test]
    fn momentum_recursion_with_gamma_zero() {
        // Force gamma = 0 through a degenerate search (exact estimate) while
        // carrying a nonzero previous update: dw_t = eta * dw_{t-1} exactly.
        let op = DenseMatrix::diagonal(&[1.0, 1.0, 1.0]);
        let mut config = tiny_config();
        config.l = 3;
        config.n_p = 3;
        config.eta = 0.25;
        let mut state = TrainerState::new(config).unwrap();
        state.w = ProbingVectorSet::basis(3);
        let mut seeded = SplitMix64::new(8);
        let carried = ProbingVectorSet::init(3, 3, &mut seeded).unwrap();
        state.delta_prev = carried.clone();
        // Estimate equals trace 3 for the basis set on the identity; but the
        // momentum shift changes the candidate point, so pick the target so
        // the *gradient* is zero: residual at w is zero.
        let report = state.training_step(&op, 3.0).unwrap();
        assert_eq!(report.gamma, 0.0);
        let expected = ProbingVectorSet::linear_combination(
            0.0,
            &ProbingVectorSet::zeros(3, 3),
            0.25,
            &carried,
        );
        assert_eq!(state.delta_prev, expected);
    }

    #[test]
    fn non_finite_guard_halves_gamma() {
        let op = DenseMatrix::diagonal(&[2.0, 3.0]);
        let mut config = tiny_config();
        config.l = 2;
        config.n_p = 1;
        config.eta = 0.0;
        config.bootstrap_len = 1;
        let mut state = TrainerState::new(config).unwrap();
        state.t = 1; // past bootstrap; schedule path
        state.gamma0 = Some(1e308);
        state.gamma_history = vec![1e308];
        state.w = ProbingVectorSet::from_flat(1, 2, vec![1.0, 1.0]).unwrap();
        let report = state.training_step(&op, 100.0).unwrap();
        assert!(state.rejected_updates > 0);
        assert!(state.w.all_finite());
        assert!(report.gamma.is_finite());
    }

    #[test]
    fn gamma0_is_median_of_bootstrap_history() {
        let mut config = tiny_config();
        config.bootstrap_len = 5;
        config.n_training = 8;
        let mut trainer = Trainer::new(config).unwrap();
        trainer.run_until(8, None).unwrap();
        assert_eq!(trainer.state.gamma_history.len(), 5);
        let expected = median_lower(&trainer.state.gamma_history);
        assert_eq!(trainer.state.gamma0, Some(expected));
    }

    #[test]
    fn matvec_accounting_matches_formula() {
        let mut config = tiny_config();
        config.n_training = 25;
        config.bootstrap_len = 10;
        let mut trainer = Trainer::new(config).unwrap();
        trainer.run_until(25, None).unwrap();
        assert_eq!(trainer.state.wasted_matvecs, 0);
        assert_eq!(
            trainer.state.train_matvecs,
            trainer.state.expected_training_matvecs()
        );
    }

    #[test]
    fn log_rows_follow_stride() {
        let mut config = tiny_config();
        config.n_training = 12;
        config.log_stride = 4;
        let mut trainer = Trainer::new(config).unwrap();
        trainer.run_until(12, None).unwrap();
        let ts: Vec<u64> = trainer.log.rows.iter().map(|r| r.t).collect();
        assert_eq!(ts, vec![1, 4, 8, 12]);
        let csv = trainer.log.to_csv();
        assert!(csv.starts_with("t,gamma,cost,matvecs_cumulative\n"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn training_is_reproducible() {
        let config = tiny_config();
        let (w1, log1) = Trainer::train(config.clone()).unwrap();
        let (w2, log2) = Trainer::train(config).unwrap();
        assert_eq!(w1, w2);
        assert_eq!(log1.rows, log2.rows);
    }
}
