use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: operator expects length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix dimension must be at least 3, got {0}")]
    DimensionTooSmall(usize),

    #[error("dense realization is capped at dimension {cap}, operator has dimension {dim}")]
    DenseCapExceeded { dim: usize, cap: usize },

    #[error("solver did not converge within {iterations} iterations (relative residual {residual:.3e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("singular matrix encountered in dense factorization")]
    SingularMatrix,

    #[error("{0}")]
    InvalidArgument(String),

    #[error("learning-rate schedule queried before gamma0 was fixed")]
    ScheduleNotReady,

    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },

    #[error("trace function '{name}' undefined at value {value}")]
    Domain { name: &'static str, value: f64 },

    #[error("checkpoint version {got} not supported (expected {expected})")]
    CheckpointVersion { got: u32, expected: u32 },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("non-finite probing vectors at step {step}; training cannot continue")]
    NonFiniteState { step: u64 },

    #[error("training aborted at step {step} after {failures} consecutive solver failures")]
    TrainingAborted { step: u64, failures: u32 },

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown recipe '{0}'")]
    UnknownRecipe(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 1 for usage/config mistakes, 2 for
    /// computation failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::UnknownRecipe(_) | Error::InvalidArgument(_) => 1,
            _ => 2,
        }
    }
}
