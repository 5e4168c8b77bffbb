use thiserror::Error;

/// Everything that can go wrong inside the library.
///
/// Configuration problems (`Config`) are kept apart from runtime contract
/// violations so front ends can map them to different exit statuses.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("contract violation on `{param}`: {reason}")]
    Contract { param: &'static str, reason: String },

    /// A sample-size law proposed a sample larger than the urn (or zero).
    #[error("step {n}: sample-size law `{law}` proposed N = {proposed} outside 1..={total}")]
    SampleSizeOutOfRange {
        n: u64,
        law: &'static str,
        proposed: u64,
        total: u64,
    },

    /// Ball counts no longer fit in 64 bits.
    #[error("step {n}: ball count overflow")]
    Overflow { n: u64 },

    /// Malformed or inconsistent scenario description.
    #[error("invalid scenario: {0}")]
    Config(String),

    /// Exhaustive enumeration would visit too many outcomes.
    #[error("enumeration budget exceeded: {count} outcomes (limit {limit})")]
    BudgetExceeded { count: u64, limit: u64 },

    /// An operation needs a law with finite support and did not get one.
    #[error("law `{0}` has unbounded support and cannot be enumerated")]
    UnboundedSupport(&'static str),

    /// The requested procedure has no theory behind it for this scenario.
    #[error("not applicable: {0}")]
    NotApplicable(String),
}

impl Error {
    pub(crate) fn contract(param: &'static str, reason: impl Into<String>) -> Self {
        Error::Contract {
            param,
            reason: reason.into(),
        }
    }

    /// True for errors caused by the scenario description rather than by
    /// running it.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
