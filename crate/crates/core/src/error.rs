use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("lift is undefined: reached scaled-control conversions are zero")]
    UndefinedLift,

    #[error("Poisson mass requested at negative count {0}")]
    NegativeCount(i64),

    #[error("outer series needs more than {cap} terms to reach tail mass {tail_mass_bound:e}")]
    TruncationCapExceeded { cap: usize, tail_mass_bound: f64 },

    #[error("could not bracket the {p} quantile of the lift (searched up to l = {searched_to})")]
    BracketFailure { p: f64, searched_to: f64 },

    #[error("root finder did not converge within {0} iterations")]
    NoConvergence(usize),

    #[error("control rate {0} is too small to simulate; zero-denominator draws would dominate")]
    DegenerateRate(f64),

    #[error("drew a zero control count with resampling disabled")]
    ZeroDenominatorDraw,

    #[error("target power {target} is unattainable: power {reached} at {conversions} control conversions after {doublings} doublings")]
    UnattainablePower {
        target: f64,
        reached: f64,
        conversions: f64,
        doublings: u32,
    },

    #[error("validation run {run} failed: {source}")]
    CampaignRun { run: usize, source: Box<Error> },

    #[error("failed writing samples: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
