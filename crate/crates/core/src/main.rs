//! Command-line driver.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 computation failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use traceprobe::config::{parse_config, ConfigOverrides, HarnessConfig};
use traceprobe::error::Result;
use traceprobe::recipes::{run_gen_pool, run_recipe, RecipeName};

#[derive(Parser)]
#[command(
    name = "traceprobe",
    version,
    about = "Trace estimation with trained probing vectors",
    after_help = "Config file: line-based key=value (same keys as the flags, \
                  plus sigma, tol, max_iter, bootstrap_len, log_stride, \
                  eval_stride, test_matrices, hist_matrices, repeats, scan, \
                  f, N, Nc, references, checkpoint). Flags override the file."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct CommonOpts {
    /// Matrix dimension.
    #[arg(long = "L")]
    l: Option<usize>,
    /// Number of probing vectors.
    #[arg(long = "Np")]
    np: Option<usize>,
    /// Noise vectors per Hutchinson estimate.
    #[arg(long = "Nz")]
    nz: Option<usize>,
    /// Momentum coefficient in [0, 1).
    #[arg(long)]
    eta: Option<f64>,
    /// Learning-rate schedule parameter.
    #[arg(long)]
    alpha: Option<f64>,
    /// Pool size.
    #[arg(long = "Nr")]
    nr: Option<usize>,
    /// Training updates.
    #[arg(long)]
    steps: Option<u64>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Off-diagonal noise width.
    #[arg(long)]
    sigma: Option<f64>,
    /// Solver relative residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Solver iteration cap.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Line-search bootstrap length.
    #[arg(long)]
    bootstrap_len: Option<u64>,
    /// Training-log stride.
    #[arg(long)]
    log_stride: Option<u64>,
    /// Comma-separated scan values for scan recipes.
    #[arg(long)]
    scan: Option<String>,
    /// Repeats per Hutchinson scan point.
    #[arg(long)]
    repeats: Option<usize>,
    /// Trace function: identity, square, reciprocal, exponential-of-negative.
    #[arg(long)]
    f: Option<String>,
    /// Sample count for evaluate/unbiased.
    #[arg(long = "N")]
    n: Option<usize>,
    /// Correction-subset size for unbiased.
    #[arg(long = "Nc")]
    nc: Option<usize>,
    /// Reference traces: auto, exact, or stochastic.
    #[arg(long)]
    references: Option<String>,
    /// Checkpoint to evaluate or resume from.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Learning-curve measurement stride.
    #[arg(long)]
    eval_stride: Option<u64>,
    /// Held-out matrices for learning curves.
    #[arg(long)]
    test_matrices: Option<usize>,
    /// Matrices for deviation histograms.
    #[arg(long)]
    hist_matrices: Option<usize>,
}

impl CommonOpts {
    fn resolve(&self) -> Result<HarnessConfig> {
        let mut flags = ConfigOverrides::default();
        macro_rules! flag {
            ($key:literal, $field:ident) => {
                if let Some(v) = &self.$field {
                    flags.set($key, &v.to_string())?;
                }
            };
        }
        flag!("L", l);
        flag!("Np", np);
        flag!("Nz", nz);
        flag!("eta", eta);
        flag!("alpha", alpha);
        flag!("Nr", nr);
        flag!("steps", steps);
        flag!("seed", seed);
        flag!("sigma", sigma);
        flag!("tol", tol);
        flag!("max_iter", max_iter);
        flag!("bootstrap_len", bootstrap_len);
        flag!("log_stride", log_stride);
        flag!("repeats", repeats);
        flag!("N", n);
        flag!("Nc", nc);
        flag!("eval_stride", eval_stride);
        flag!("test_matrices", test_matrices);
        flag!("hist_matrices", hist_matrices);
        if let Some(v) = &self.out {
            flags.out = Some(v.clone());
        }
        if let Some(v) = &self.scan {
            flags.set("scan", v)?;
        }
        if let Some(v) = &self.f {
            flags.set("f", v)?;
        }
        if let Some(v) = &self.references {
            flags.set("references", v)?;
        }
        if let Some(v) = &self.checkpoint {
            flags.checkpoint = Some(v.clone());
        }
        parse_config(self.config.as_deref(), &flags)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the matrix-spec records of a training pool.
    GenPool(CommonOpts),
    /// Train probing vectors, recording a learning curve and a checkpoint.
    Train(CommonOpts),
    /// Evaluate a trained checkpoint: calibration plus held-out deviations.
    Evaluate(CommonOpts),
    /// Scan Hutchinson estimator error against the noise-vector count.
    Hutchinson(CommonOpts),
    /// Unbiased expectation of a function of traces.
    Unbiased(CommonOpts),
    /// Run a named experiment recipe.
    Recipe {
        /// One of: fig1-hist, fig2-noise-scan, fig3-hutchinson,
        /// fig4-pool-scan, fig5-alpha-scan, fig7-np-scan, train, evaluate,
        /// unbiased.
        name: String,
        #[command(flatten)]
        opts: CommonOpts,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenPool(opts) => {
            run_gen_pool(&opts.resolve()?)?;
        }
        Command::Train(opts) => {
            run_recipe(RecipeName::Train, &opts.resolve()?)?;
        }
        Command::Evaluate(opts) => {
            run_recipe(RecipeName::Evaluate, &opts.resolve()?)?;
        }
        Command::Hutchinson(opts) => {
            run_recipe(RecipeName::Fig3Hutchinson, &opts.resolve()?)?;
        }
        Command::Unbiased(opts) => {
            run_recipe(RecipeName::Unbiased, &opts.resolve()?)?;
        }
        Command::Recipe { name, opts } => {
            let recipe: RecipeName = name.parse()?;
            run_recipe(recipe, &opts.resolve()?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's own exit codes don't match ours; usage problems are 1.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
