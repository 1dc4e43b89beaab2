use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid too small or odd: N = {0} (need N >= 8 and even)")]
    BadGrid(usize),

    #[error("truncation X = {0} too small (need X >= 8)")]
    BadTruncation(f64),

    #[error("potential is not admissible: density {min_density:e} at node {node}")]
    NotAdmissible { node: usize, min_density: f64 },

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("Newton step left the admissible cone after {halvings} halvings")]
    PositivityLoss { halvings: usize },

    #[error("s = 0 requires the mean normalization")]
    NormalizationAmbiguity,

    #[error("parameter point (s = {s}, t = {t}) lies outside the admissible set")]
    OutsideParameterSet { s: f64, t: f64 },

    #[error("continuation step too large near (s = {s}, t = {t})")]
    StepTooLarge { s: f64, t: f64 },

    #[error("flow step rejected at time {time} after {halvings} dt halvings")]
    StepRejected { time: f64, halvings: usize },

    #[error("orbit parameter {a} exceeds the truncation window {window}")]
    TruncationExceeded { a: f64, window: f64 },

    #[error("Legendre data degenerate: {0}")]
    ConvexificationFailure(String),

    #[error("entropy arguments have mismatched totals: {0} vs {1}")]
    MassMismatch(f64, f64),

    #[error("operation unsupported for this model: {0}")]
    Unsupported(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular linear system")]
    SingularSystem,

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
