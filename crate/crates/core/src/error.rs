use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("non-finite entry at coordinate {index}")]
    NonFinite { index: usize },
    #[error("bias entry p[{index}] = {value} is outside the allowed range [-{bound}, {bound}]")]
    BiasOutOfRange { index: usize, value: f64, bound: f64 },
    #[error("epsilon {0} outside the open interval (0, 1/12)")]
    EpsilonOutOfRange(f64),
    #[error("epsilon {0} exceeds 1/12")]
    EpsilonTooLarge(f64),
    #[error("empty sample")]
    EmptySample,
    #[error("sample of size {got} is smaller than the required budget {need}")]
    SampleTooSmall { need: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("probabilities are not normalized (sum = {0})")]
    NotNormalized(f64),
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("{0} did not converge within the iteration cap")]
    NonConvergence(&'static str),
    #[error("enumeration over 2^{0} selections is too large")]
    EnumerationTooLarge(usize),
    #[error("learner `{0}` is not deterministic")]
    NotDeterministic(String),
    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),
    #[error("resource guard: {0}")]
    ResourceLimit(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
