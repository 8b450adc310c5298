use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mode space: {0}")]
    InvalidSpace(String),

    #[error("dimension {dim} exceeds the configured limit {limit}")]
    DimensionTooLarge { dim: u128, limit: usize },

    #[error("occupation {occupation} of mode {mode} exceeds cutoff {cutoff}")]
    OccupationOutOfRange {
        mode: usize,
        occupation: usize,
        cutoff: usize,
    },

    #[error("basis label is not part of this space: {0}")]
    NotInSpace(String),

    #[error("mode {mode} out of range 1..={num_modes}")]
    BadMode { mode: usize, num_modes: usize },

    #[error("operation needs a spin qubit but the space has none")]
    NoSpin,

    #[error("space mismatch between operands")]
    SpaceMismatch,

    #[error("impossible post-selection branch (zero norm)")]
    ImpossibleBranch,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("state does not have a definite particle number")]
    IndefiniteParticleNumber,

    #[error("step size underflow at t = {time} (h = {step})")]
    StepUnderflow { time: f64, step: f64 },

    #[error("positivity violated: minimum eigenvalue {min_eigenvalue} at t = {time}")]
    PositivityViolation { min_eigenvalue: f64, time: f64 },

    #[error("snapshot format: {0}")]
    Snapshot(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
