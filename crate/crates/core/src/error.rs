use thiserror::Error;

/// Failure modes across the library. The CLI maps these onto exit codes, so
/// variants distinguish "your input is wrong" (config, assumption, index)
/// from "the numerics gave up" (non-convergence, blow-up).
#[derive(Debug, Error)]
pub enum Error {
    #[error("config key '{key}': {message}")]
    Config { key: String, message: String },

    #[error("model assumption violated: {0}")]
    Assumption(String),

    #[error("patch index {index} out of range for {patches} patch(es)")]
    PatchIndex { index: usize, patches: usize },

    #[error("expected {expected} component(s), got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operation is defined for exactly two patches, model has {0}")]
    TwoPatchOnly(usize),

    #[error("did not converge within {iterations} iteration(s); last residual {residual:.3e}")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error(
        "Perron eigenvector has a nonpositive component; \
         the migration graph must be strongly connected"
    )]
    Positivity,

    #[error("dt = {dt} exceeds the stability budget; admissible dt <= {max_dt:.6e}")]
    StabilityBudget { dt: f64, max_dt: f64 },

    #[error(
        "pressure blow-up in patch {patch}: I = {value:.3e} exceeded the guard {guard:.3e} \
         at tau = {tau:.3}"
    )]
    BlowUp {
        patch: usize,
        value: f64,
        guard: f64,
        tau: f64,
    },

    #[error(
        "bracket [{lo}, {hi}] does not straddle the root: \
         max H = {f_lo:.3e} at lo, {f_hi:.3e} at hi"
    )]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("symmetry hypothesis not satisfied: {0}")]
    Symmetry(String),

    #[error("x = {x} is not a zero-level maximum of H (H = {h:.3e})")]
    InvalidSupportPoint { x: f64, h: f64 },

    #[error(
        "normalization infeasible: nonnegative atom scales cannot reach the requested \
         pressures (best residual {residual:.3e})"
    )]
    Infeasible { residual: f64 },

    #[error("degenerate support: {count} distinct maxima is outside the finite-points hypothesis")]
    DegenerateSupport { count: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
