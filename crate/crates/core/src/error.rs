use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter `{name}` must be strictly positive and finite, got {value}")]
    NonPositiveParam { name: &'static str, value: f64 },

    #[error("liability cap l={l} must be below the social damage L={damage}")]
    CapViolation { l: f64, damage: f64 },

    #[error("ordered cost-benefit ratios violated: l/pi = {firm_ratio} >= L/beta = {social_ratio}")]
    AssumptionViolation { firm_ratio: f64, social_ratio: f64 },

    #[error("prior {0} is outside [0, 1]")]
    InvalidPrior(f64),

    #[error("invalid tariff: {0}")]
    InvalidTariff(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("value iteration did not converge after {iterations} sweeps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("action pattern is not of threshold form: {0}")]
    NonIntervalRegion(String),

    #[error("inadmissible tariff for prior {theta}: {reason}")]
    InadmissibleTariff { theta: f64, reason: String },

    #[error("recklessness check failed for prior {theta}: first-best launch {first_best} vs ceiling launch {ceiling}")]
    RecklessnessViolation {
        theta: f64,
        first_best: f64,
        ceiling: f64,
    },

    #[error("inconsistent menu: priors {0} and {1} share a launch threshold but not a penalty")]
    InconsistentMenu(f64, f64),

    #[error("ceiling tariff is not outcome equivalent: {0}")]
    NotOutcomeEquivalent(String),

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("bisection failed: {0}")]
    BisectionFailed(String),

    #[error("counterexample construction failed at step {step}: {reason}")]
    ConstructionFailed { step: u8, reason: String },

    #[error("{truncated} of {paths} paths hit the time horizon")]
    TruncationExceeded { truncated: usize, paths: usize },

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("malformed input: {0}")]
    Parse(String),
}

impl Error {
    /// Stable snake-case name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonPositiveParam { .. } => "non_positive_param",
            Error::CapViolation { .. } => "cap_violation",
            Error::AssumptionViolation { .. } => "assumption_violation",
            Error::InvalidPrior(_) => "invalid_prior",
            Error::InvalidTariff(_) => "invalid_tariff",
            Error::InvalidPolicy(_) => "invalid_policy",
            Error::Domain(_) => "domain",
            Error::InvalidGrid(_) => "invalid_grid",
            Error::GridTooSmall(_) => "grid_too_small",
            Error::NoConvergence { .. } => "no_convergence",
            Error::NonIntervalRegion(_) => "non_interval_region",
            Error::InadmissibleTariff { .. } => "inadmissible_tariff",
            Error::RecklessnessViolation { .. } => "recklessness_violation",
            Error::InconsistentMenu(..) => "inconsistent_menu",
            Error::NotOutcomeEquivalent(_) => "not_outcome_equivalent",
            Error::PreconditionViolated(_) => "precondition_violated",
            Error::BisectionFailed(_) => "bisection_failed",
            Error::ConstructionFailed { .. } => "construction_failed",
            Error::TruncationExceeded { .. } => "truncation_exceeded",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Parse(_) => "parse",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
