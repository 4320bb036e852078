use thiserror::Error;

/// Failures of the numerical routes.
///
/// Every variant names the condition that failed so a sweep can record it in a
/// row status instead of aborting.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("coefficient rule yields a_{n} = {value} <= 0")]
    NonPositiveEntry { n: usize, value: f64 },

    #[error("lambda = {lambda} is outside the open band ({lower}, {upper})")]
    OutsideBand { lambda: f64, lower: f64, upper: f64 },

    #[error("lambda sits on a band edge; z - 1/z vanishes")]
    BandEdge,

    #[error("boundary coefficient vanishes; lambda is at a degeneracy of the truncated problem")]
    ZeroPhi,

    #[error("shifted tridiagonal system is numerically singular at row {row}; increase epsilon")]
    SingularSystem { row: usize },

    #[error("truncation ceiling {ceiling} reached without convergence")]
    NoConvergence { ceiling: usize },

    #[error("denominator vanishes at index {n}")]
    PoleHit { n: usize },

    #[error("no admissible starting index below ceiling {ceiling}")]
    NoAdmissibleN0 { ceiling: usize },

    #[error("diagonal entry vanishes at index {index}")]
    ZeroLambda { index: usize },

    #[error("seed direction degenerate at index {n}: |h+ - h-| = {gap}")]
    SeedDegenerate { n: usize, gap: f64 },

    #[error("subsequence scan exhausted ceiling {ceiling} after {found} indices")]
    NoAdmissibleIndices { ceiling: usize, found: usize },

    #[error("elliptic onset not detected below ceiling {ceiling}")]
    NoStabilization { ceiling: usize },

    #[error("d = {d} is not in (-1, 1); {hint}")]
    CriticalParameter { d: f64, hint: &'static str },

    #[error("hypothesis violated: {condition}: {detail}")]
    HypothesisViolation { condition: &'static str, detail: String },

    #[error("operation needs a {expected} family")]
    WrongFamily { expected: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl SpectralError {
    /// Short stable tag used in CSV status fields.
    pub fn tag(&self) -> &'static str {
        match self {
            SpectralError::NonPositiveEntry { .. } => "NonPositiveEntry",
            SpectralError::OutsideBand { .. } => "OutsideBand",
            SpectralError::BandEdge => "BandEdge",
            SpectralError::ZeroPhi => "ZeroPhi",
            SpectralError::SingularSystem { .. } => "SingularSystem",
            SpectralError::NoConvergence { .. } => "NoConvergence",
            SpectralError::PoleHit { .. } => "PoleHit",
            SpectralError::NoAdmissibleN0 { .. } => "NoAdmissibleN0",
            SpectralError::ZeroLambda { .. } => "ZeroLambda",
            SpectralError::SeedDegenerate { .. } => "SeedDegenerate",
            SpectralError::NoAdmissibleIndices { .. } => "NoAdmissibleIndices",
            SpectralError::NoStabilization { .. } => "NoStabilization",
            SpectralError::CriticalParameter { .. } => "CriticalParameter",
            SpectralError::HypothesisViolation { .. } => "HypothesisViolation",
            SpectralError::WrongFamily { .. } => "WrongFamily",
            SpectralError::InvalidArgument(_) => "InvalidArgument",
        }
    }
}

pub type Result<T, E = SpectralError> = std::result::Result<T, E>;
