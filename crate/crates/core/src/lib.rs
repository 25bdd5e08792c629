//! Spectrally truncated normalized MMD two-sample test.
//!
//! The pooled within-group covariance operator of the kernel embedding is
//! diagonalized through the centered Gram matrix, the mean-embedding
//! difference is projected on its leading `T` eigenfunctions, and the
//! resulting Hotelling-type statistic is compared with either the `chi2(T)`
//! quantile, a non-asymptotic bound, or a data-driven inflation of the
//! `chi2(T)` quantile.

mod chi2;
mod error;
pub mod kernel;
mod lanczos;
pub mod quantile;
pub mod serde_num;
pub mod spectral;
pub mod statistic;
pub mod testkit;

pub use error::{Condition, Error, Result};
pub use kernel::{gram, median_heuristic, GramMatrix, KernelFamily, KernelSpec};
pub use quantile::{
    chi2_cdf, chi2_quantile, chi2_sf, Aggregation, BundleOptions, ConditionConstants,
    QuantileBundle, QuantileParams,
};
pub use spectral::{
    centered_within_gram, eigendecompose, eigendecompose_leading, eigendecompose_leading_from_gram,
    project_mean_difference,
    CenteredWithinGram, ProjectionVector, SpectralDecomposition, SpectralSummary,
};
pub use statistic::{st_nmmd, StNmmdStatistic};
pub use testkit::{
    run_test, select_truncation, Decision, KernelChoice, Prepared, QuantileMethod, Solver,
    TPolicy, TestConfig, TestReport,
};
