use serde::Serialize;
use thiserror::Error;

/// Spectral/sample-size conditions under which the non-asymptotic bounds hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Gap floor: 12 M_k / sqrt(n) (1 + sqrt(delta/2)) < min_t gap_t.
    Sp1,
    /// Eigenvalue floor: lambda_t > K_{1,t}.
    Sp2,
    /// Simplified-bound constant: min_t gap_t sqrt(lambda_t - 4 M_k sqrt(delta/n)) >= c K_2 / sqrt(delta).
    Sp3,
    /// lambda_t - 4 M_k sqrt(delta/n) must be positive for the square roots to be real.
    NegativeRadicand,
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Condition::Sp1 => "SP1",
            Condition::Sp2 => "SP2",
            Condition::Sp3 => "SP3",
            Condition::NegativeRadicand => "NegativeRadicand",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("at least two points are required")]
    FewerThanTwoPoints,

    #[error("median pairwise distance is zero; bandwidth undefined")]
    AllPointsIdentical,

    #[error("invalid bandwidth {0}")]
    InvalidBandwidth(f64),

    #[error("matrix is {rows}x{cols} but group sizes sum to {expected}")]
    SizeMismatch { rows: usize, cols: usize, expected: usize },

    #[error("empty sample")]
    EmptySample,

    #[error("eigensolver failed: {0}")]
    EigSolverFailure(String),

    #[error("within-group covariance has no positive eigenvalue")]
    RankZero,

    #[error("truncation {requested} exceeds numerical rank {rank}")]
    TruncationExceedsRank { requested: usize, rank: usize },

    #[error("eigenvalue {index} is not positive")]
    ZeroEigenvalue { index: usize },

    #[error("level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),

    #[error("degrees of freedom must be positive")]
    InvalidDegrees,

    #[error("argument `{name}` must be strictly positive, got {value}")]
    NonPositiveArgument { name: &'static str, value: f64 },

    #[error("spectral condition {which} violated (margin {margin:e})")]
    SpectralConditionViolated { which: Condition, margin: f64 },

    #[error("denominator for direction {index} is not positive ({value:e})")]
    DenominatorNonPositive { index: usize, value: f64 },

    #[error("spectral input for direction {index} is not positive")]
    NonPositiveSpectralInput { index: usize },

    #[error("spectral inputs have length {found}, truncation is {expected}")]
    SpectralLengthMismatch { expected: usize, found: usize },

    #[error("empty spectrum")]
    EmptySpectrum,

    #[error("unbalanced design: n_x = {n_x}, n_y = {n_y}")]
    UnbalancedDesign { n_x: usize, n_y: usize },

    #[error("each group needs at least {min} observations, got {found}")]
    TooFewSamples { min: usize, found: usize },

    #[error("kernel has no declared sup bound; non-asymptotic bounds unavailable")]
    UnboundedKernel,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Stable machine-readable identifier, used in serialized reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::FewerThanTwoPoints => "fewer_than_two_points",
            Error::AllPointsIdentical => "all_points_identical",
            Error::InvalidBandwidth(_) => "invalid_bandwidth",
            Error::SizeMismatch { .. } => "size_mismatch",
            Error::EmptySample => "empty_sample",
            Error::EigSolverFailure(_) => "eig_solver_failure",
            Error::RankZero => "rank_zero",
            Error::TruncationExceedsRank { .. } => "truncation_exceeds_rank",
            Error::ZeroEigenvalue { .. } => "zero_eigenvalue",
            Error::InvalidLevel(_) => "invalid_level",
            Error::InvalidDegrees => "invalid_degrees",
            Error::NonPositiveArgument { .. } => "non_positive_argument",
            Error::SpectralConditionViolated { .. } => "spectral_condition_violated",
            Error::DenominatorNonPositive { .. } => "denominator_non_positive",
            Error::NonPositiveSpectralInput { .. } => "non_positive_spectral_input",
            Error::SpectralLengthMismatch { .. } => "spectral_length_mismatch",
            Error::EmptySpectrum => "empty_spectrum",
            Error::UnbalancedDesign { .. } => "unbalanced_design",
            Error::TooFewSamples { .. } => "too_few_samples",
            Error::UnboundedKernel => "unbounded_kernel",
            Error::InvalidConfig(_) => "invalid_config",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
