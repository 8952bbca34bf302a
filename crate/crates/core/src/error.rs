use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("negative count {count} at week {week}")]
    NegativeCount { week: i64, count: i64 },

    #[error("duplicate week {0}")]
    DuplicateWeek(i64),

    #[error("week {week} follows week {previous}; weeks must be strictly increasing")]
    UnorderedWeek { previous: i64, week: i64 },

    #[error("series is empty")]
    EmptySeries,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate design: the cumulative values do not identify a parabola")]
    DegenerateDesign,

    #[error("too few usable points: need {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("zero time variance among usable weeks")]
    ZeroTimeVariance,

    #[error("estimated growth rate {0} is not positive")]
    NonPositiveRate(f64),

    #[error("final size {l0} does not exceed the largest cumulative count {max_cumulative}")]
    FinalSizeTooSmall { l0: f64, max_cumulative: f64 },

    #[error("empty support mass: lower bound {lower} is too far above rate {lambda}")]
    EmptySupportMass { lambda: f64, lower: u64 },

    #[error("degenerate chains: zero within-chain variance")]
    DegenerateChains,

    #[error("zero variance in sequence")]
    ZeroVariance,

    #[error("stuck chain {chain}: acceptance rate {rate:.4}; retune step sizes")]
    StuckChain { chain: usize, rate: f64 },

    #[error("chain {chain} hit the iteration cap of {cap} before collecting its draws")]
    IterationCap { chain: usize, cap: u64 },

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("fit failed at week {week}: {source}")]
    Fit {
        week: i64,
        #[source]
        source: Box<Error>,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::DegenerateDesign
            | Error::TooFewPoints { .. }
            | Error::ZeroTimeVariance
            | Error::NonPositiveRate(_)
            | Error::FinalSizeTooSmall { .. }
            | Error::EmptySupportMass { .. }
            | Error::DegenerateChains
            | Error::ZeroVariance
            | Error::StuckChain { .. }
            | Error::IterationCap { .. }
            | Error::NonFinite { .. } => true,
            Error::Fit { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn at_week(self, week: i64) -> Error {
        Error::Fit {
            week,
            source: Box::new(self),
        }
    }
}
