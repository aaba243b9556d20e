use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("delay constraint violated: {0}")]
    ConstraintViolation(String),

    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),

    #[error("resonance at harmonic {harmonic}: |1 - exp(-j k w tau0)| = {magnitude:.3e}")]
    Resonance { harmonic: i32, magnitude: f64 },

    #[error("lambda = {lambda} outside the domain [{start}, {end}]")]
    Domain { lambda: f64, start: f64, end: f64 },

    #[error("root not bracketed on [{lo}, {hi}] (f = {f_lo:.3e}, {f_hi:.3e})")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("root finder did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("seed derivative is not positive: min {min:.6e} at lambda = {at}")]
    SeedNotIncreasing { min: f64, at: f64 },

    #[error("seed constraint system is ill-conditioned (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("propagated transform lost monotonicity at lambda = {lambda}")]
    NonMonotone { lambda: f64 },

    #[error("step {step} exceeds the allowed maximum {limit}")]
    StepTooLarge { step: f64, limit: f64 },

    #[error("state became non-finite at t = {time}")]
    Divergence { time: f64 },

    #[error("sampling window [{start}, {end}] is shorter than one period ({period})")]
    WindowTooShort { start: f64, end: f64, period: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable identifier, used in the CLI's error records.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::ConstraintViolation(_) => "constraint_violation",
            Error::Hypothesis(_) => "hypothesis",
            Error::Resonance { .. } => "resonance",
            Error::Domain { .. } => "domain",
            Error::Bracket { .. } => "bracket",
            Error::NoConvergence { .. } => "no_convergence",
            Error::SeedNotIncreasing { .. } => "seed_not_increasing",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::NonMonotone { .. } => "non_monotone",
            Error::StepTooLarge { .. } => "step_too_large",
            Error::Divergence { .. } => "divergence",
            Error::WindowTooShort { .. } => "window_too_short",
            Error::Dimension(_) => "dimension",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
