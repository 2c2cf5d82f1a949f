use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid bid profile: {0}")]
    InvalidProfile(String),

    #[error("invalid instance size n={n}, p={p}: {reason}")]
    InvalidSize { n: usize, p: usize, reason: String },

    #[error("enumeration of {count} allocations exceeds the cap of {cap}")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("profile is not homogeneous: agent {agent} has differing bids")]
    NotHomogeneous { agent: usize },

    #[error("profile is not of the scaling form: agent {agent}")]
    NotScalingForm { agent: usize },

    #[error("values must be sorted in non-increasing order")]
    Unsorted,

    #[error("invalid gamma vector: {0}")]
    InvalidGamma(String),

    #[error("bound undefined: {0}")]
    UndefinedBound(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// 1-based agents `a, b, c` with `a >= b >= c` but `c > a`.
    #[error("agent relation is not transitive: {0} >= {1} >= {2} but {2} > {0}")]
    Intransitive(usize, usize, usize),

    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),

    #[error("{mechanism} violated {property} on profile #{index}")]
    InvariantViolated {
        mechanism: String,
        property: String,
        index: u64,
    },
}

impl Error {
    /// Stable snake_case name of the variant, for machine-readable output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidProfile(_) => "invalid_profile",
            Error::InvalidSize { .. } => "invalid_size",
            Error::EnumerationCap { .. } => "enumeration_cap",
            Error::Precondition(_) => "precondition",
            Error::NotHomogeneous { .. } => "not_homogeneous",
            Error::NotScalingForm { .. } => "not_scaling_form",
            Error::Unsorted => "unsorted",
            Error::InvalidGamma(_) => "invalid_gamma",
            Error::UndefinedBound(_) => "undefined_bound",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::Intransitive(..) => "intransitive",
            Error::InvalidConfig(_) => "invalid_config",
            Error::InvariantViolated { .. } => "invariant_violated",
        }
    }
}
