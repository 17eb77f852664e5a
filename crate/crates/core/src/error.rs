use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spin magnitude {0}: 2J must be a positive integer")]
    InvalidSpin(f64),
    #[error("state is not normalized (norm deviation {0:.3e})")]
    NotNormalized(f64),
    #[error("dimension mismatch: state has {got} amplitudes, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("negative duration {0}")]
    NegativeDuration(f64),
    #[error("non-finite field component")]
    NonFiniteField,
    #[error("propagation failed: {0}")]
    Propagation(String),
    #[error("zero direction vector")]
    ZeroDirection,
    #[error("degenerate state: mean spin length {0:.3e} is too small to define squeezing")]
    DegenerateMeanSpin(f64),
    #[error("squeezing target not reached: wanted xi2 = {target:.4e}, best achieved {achieved:.4e}")]
    SqueezingTarget { target: f64, achieved: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("realization {index} (seed {seed:#018x}) failed: {source}")]
    Realization {
        index: u64,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
    #[error("too few points for fit: need {need}, have {have}")]
    TooFewPoints { need: usize, have: usize },
    #[error("sample {0} has no cycle/quarter label")]
    Unlabeled(usize),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
