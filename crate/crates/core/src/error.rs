use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degree mismatch: expected {expected}, got {got}")]
    DegreeMismatch { expected: usize, got: usize },

    #[error("linear part is not invertible (singular value ratio {ratio:e})")]
    NonInvertible { ratio: f64 },

    #[error("cocycle step {step} is singular")]
    SingularStep { step: usize },

    #[error("ambiguous Lyapunov spectrum: raw exponents {raw:?} do not separate at gap_tol {gap_tol}")]
    AmbiguousSpectrum { raw: Vec<f64>, gap_tol: f64 },

    #[error("Oseledec splitting failed: {0}")]
    SplittingFailure(String),

    #[error("spectrum is not contracting (top exponent {top})")]
    NonContracting { top: f64 },

    #[error("small divisor {divisor:e} on non-resonant slot (target {target}, alpha {alpha}) with weight {sigma}")]
    NearResonance {
        target: usize,
        alpha: String,
        sigma: f64,
        divisor: f64,
    },

    #[error("window of {steps} steps is too short for tail length {tail} (need at least {needed})")]
    WindowTooShort {
        steps: usize,
        tail: usize,
        needed: usize,
    },

    #[error("tail estimate {estimate:e} exceeds tolerance {tolerance:e} for weight {sigma}; use a tail length of at least {required_tail}")]
    TailTooLarge {
        sigma: f64,
        estimate: f64,
        tolerance: f64,
        required_tail: usize,
    },

    #[error("subspace family is not invariant (defect {defect:e} at step {step})")]
    NotInvariant { step: usize, defect: f64 },

    #[error("jets are not adapted to the block splitting: off-block linear entry {value:e} at step {step}")]
    NotAdapted { step: usize, value: f64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("commutation violated: defect {defect:e} at step {step}")]
    CommutationViolation { step: usize, defect: f64 },

    #[error("spectrum is not 1/2-pinched: top {top} >= bottom/2 = {half_bottom}")]
    NotHalfPinched { top: f64, half_bottom: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
