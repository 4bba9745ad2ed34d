use thiserror::Error;

/// Errors produced by the analysis and synthesis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed order {text:?}: {reason}")]
    MalformedOrder { text: String, reason: String },

    #[error("order {0} is out of range: derivative orders must lie strictly between 0 and 2")]
    OrderOutOfRange(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("lifted dimension N = {n} exceeds the cap of {cap}")]
    DimensionCap { n: usize, cap: usize },

    #[error("eigenvalue iteration did not converge within {0} QR sweeps")]
    EigenNonConvergence(usize),

    #[error("matrix dimension {n} exceeds the characteristic-polynomial cap of {cap}")]
    CharPolyCap { n: usize, cap: usize },

    #[error(
        "unsupported order range: base order alpha_c = {0} must be below 1 for the LMI \
         criterion; use the spectral test instead"
    )]
    UnsupportedOrderRange(String),

    #[error("LMI solve was inconclusive: {0}")]
    SolverInconclusive(String),

    #[error(
        "no stabilizing controller found at order nc = {nc}: the synthesis condition is \
         sufficient only, so a stabilizer of this order may still exist"
    )]
    SynthesisInfeasible { nc: usize },

    #[error("controller recovery failed: {0}")]
    RecoveryFailure(String),

    #[error("closed-loop verification failed: {0}")]
    VerificationFailure(String),

    #[error("internal inconsistency: {0}")]
    Inconsistency(String),

    #[error("invalid document: {0}")]
    Document(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("argument {value} outside guarded range {range}")]
    OutOfGuardedRange { value: f64, range: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON parse error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
