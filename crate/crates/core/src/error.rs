use alloc::string::String;

use crate::expr::parse::ParseError;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A quotient denominator or norm argument fell below the domain guard.
    #[error("domain error: {what} magnitude {value:e} is below the guard")]
    Domain { what: &'static str, value: f64 },
    #[error("no admissible target found after {tries} draws")]
    Exhaustion { tries: usize },
    #[error("Gauss-Newton did not converge (residual {residual:e} after {iterations} iterations)")]
    Convergence { iterations: usize, residual: f64 },
    #[error("DPhi has rank {rank} < p = {p}; Phi is not a submersion here")]
    Submersion { rank: usize, p: usize },
    #[error("ambiguous kernel: sigma_p / sigma_1 = {gap:e}")]
    Rank { gap: f64 },
    #[error("invalid configuration: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unknown configuration `{0}`")]
    UnknownConfig(String),
    #[error("unknown mode `{0}`")]
    UnknownMode(String),
    #[error("dimension d = {d} is outside {min}..={max} for `{name}`")]
    DimensionOutOfRange {
        name: String,
        d: usize,
        min: usize,
        max: usize,
    },
    #[error("tolerance {name} must be positive and finite, got {value}")]
    InvalidTolerance { name: &'static str, value: f64 },
    #[error("mode ordering violated: {lower} threshold {lower_value} exceeds {upper} threshold {upper_value}")]
    OrderingViolation {
        lower: crate::Mode,
        lower_value: crate::Rational,
        upper: crate::Mode,
        upper_value: crate::Rational,
    },
    #[error("invalid self-similar set: {0}")]
    InvalidCantor(String),
    #[error("invalid histogram box: {0}")]
    InvalidBox(String),
}
