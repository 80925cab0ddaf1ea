use thiserror::Error;

/// A single constraint a report matrix failed.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyViolation {
    NotSquare { expected: usize, row: usize, len: usize },
    Negative { row: usize, col: usize, value: f64 },
    AboveOne { row: usize, col: usize, value: f64 },
    RowSum { row: usize, sum: f64 },
    /// Mass on an over-report (j > i) under the greedy tag.
    OverReport { row: usize, col: usize, value: f64 },
    NotIdentity { row: usize, col: usize, value: f64 },
}

impl std::fmt::Display for PolicyViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // indices are printed 1-based to match r_ij notation in configs
        match *self {
            PolicyViolation::NotSquare { expected, row, len } => {
                write!(f, "row {} has {} entries, expected {}", row + 1, len, expected)
            }
            PolicyViolation::Negative { row, col, value } => {
                write!(f, "r({},{}) = {} is negative", row + 1, col + 1, value)
            }
            PolicyViolation::AboveOne { row, col, value } => {
                write!(f, "r({},{}) = {} exceeds 1", row + 1, col + 1, value)
            }
            PolicyViolation::RowSum { row, sum } => {
                write!(f, "row {} sums to {} instead of 1", row + 1, sum)
            }
            PolicyViolation::OverReport { row, col, value } => write!(
                f,
                "greedy policy has r({},{}) = {} above the diagonal",
                row + 1,
                col + 1,
                value
            ),
            PolicyViolation::NotIdentity { row, col, value } => write!(
                f,
                "identity policy has r({},{}) = {}",
                row + 1,
                col + 1,
                value
            ),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// `field` names the offending model parameter.
    #[error("invalid market model: {message}")]
    InvalidModel { field: &'static str, message: String },

    #[error("assumption violated: lowest potential {phi_min} must exceed alpha*(cs+cm) = {floor}")]
    Assumption { phi_min: f64, floor: f64 },

    #[error("invalid report policy: {}", join(.0))]
    InvalidPolicy(Vec<PolicyViolation>),

    #[error("report policy has {policy} states but the market has {market}")]
    DimensionMismatch { policy: usize, market: usize },

    #[error("policy I limit analysis only covers under-reporting policies; use the strategic analysis for general policies")]
    NotGreedy,

    #[error("state {} is never reported", .0 + 1)]
    NeverReported(usize),

    #[error("drift sign condition failed for state {}: g(0) = {g_low}, g(phi_L) = {g_high}", .state + 1)]
    SignCondition { state: usize, g_low: f64, g_high: f64 },

    #[error("no penalty threshold found up to pi = {pi_max}")]
    ThresholdNotFound { pi_max: f64 },

    #[error("the truthful policy has no penalty threshold; its utility never drops below the truthful value")]
    TruthfulPolicy,

    #[error("policy grid too large: {0}")]
    GridTooLarge(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn invalid_model(field: &'static str, message: String) -> Self {
        Error::InvalidModel { field, message }
    }
}

fn join(v: &[PolicyViolation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
