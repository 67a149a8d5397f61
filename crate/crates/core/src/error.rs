use thiserror::Error;

/// Errors raised by the game solvers and mechanisms.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("inadmissible action {entry} = {value}: {reason}")]
    Inadmissible { entry: String, value: f64, reason: String },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no sign change on [{lo}, {hi}] (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("no interior equilibrium: {0}")]
    NoInteriorEquilibrium(String),

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("price of anarchy undefined for equilibrium welfare {0}")]
    UndefinedPoa(f64),

    #[error("singular transfer scale: F({0}) = 0")]
    SingularScale(f64),

    #[error("malformed slice: {0}")]
    MalformedSlice(String),

    #[error("malformed measure: {0}")]
    MalformedMeasure(String),

    #[error("insufficient runs for a fairness estimate: {runs} < {required}")]
    InsufficientRuns { runs: usize, required: usize },

    #[error("degenerate market: production cost {cost} >= demand intercept {alpha}")]
    DegenerateMarket { alpha: f64, cost: f64 },

    #[error("empty bid list")]
    EmptyBids,

    #[error("invariant violated: {0}")]
    InvariantViolation(String),
}

impl Error {
    /// True for failures of an iterative numeric routine, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NoSignChange { .. }
                | Error::NoInteriorEquilibrium(_)
                | Error::NonConvergence(_)
                | Error::SingularScale(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
