//! End-to-end two-sample test: bandwidth, Gram matrix, spectral pipeline,
//! truncation choice, statistic, threshold and decision.

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{gram, median_heuristic, GramMatrix, KernelSpec};
use crate::quantile::{
    exact_bound, practical_quantile, quantile_bundle, simplified_bound, BundleOptions,
    QuantileBundle, QuantileParams,
};
use crate::serde_num;
use crate::spectral::{
    centered_mean_difference, centered_within_gram, eigendecompose,
    eigendecompose_leading_from_gram, project_centered, spectral_gaps, CenteredWithinGram,
    SpectralDecomposition, SpectralSummary,
};
use crate::statistic::{st_nmmd, StNmmdStatistic};

/// Pooled sizes up to which the full eigendecomposition is used by default.
pub const FULL_SOLVER_LIMIT: usize = 400;
const INITIAL_LEADING: usize = 8;

/// Largest `t` such that every `s <= t` has `lambda_s >= sqrt(lambda_1) / sqrt(2n)`
/// and `2 gap_s >= sqrt(gap_1) / sqrt(n)`.
///
/// Gaps are recomputed for each candidate prefix: `s < t` uses the interior
/// form and `s = t` the end-of-list form. Eigenvalues past the slice count as
/// zero, so the slice should hold the whole positive spectrum (or at least
/// extend past the first failing index). `n` is the per-group size.
pub fn select_truncation(eigenvalues: &[f64], n: usize) -> Result<usize> {
    if eigenvalues.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    let n = n as f64;
    let lambda_floor = eigenvalues[0].max(0.0).sqrt() / (2.0 * n).sqrt();
    let first_gap = spectral_gaps(eigenvalues, 1)[0];
    let gap_floor = first_gap.max(0.0).sqrt() / n.sqrt();
    let mut selected = 0;
    for t in 1..=eigenvalues.len() {
        let gaps = spectral_gaps(eigenvalues, t);
        let pass = (0..t).all(|s| eigenvalues[s] >= lambda_floor && 2.0 * gaps[s] >= gap_floor);
        if !pass {
            break;
        }
        selected = t;
    }
    Ok(selected)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    /// Gaussian kernel with the median pairwise distance of the pooled sample.
    MedianGaussian,
    /// Laplacian kernel with the median pairwise distance as bandwidth.
    MedianLaplacian,
    Fixed(KernelSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileMethod {
    Chi2,
    Practical,
    #[serde(alias = "exact")]
    ExactTheorem1,
    #[serde(alias = "simplified")]
    SimplifiedCorollary1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TPolicy {
    Fixed(usize),
    AutoSelect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Full decomposition for small samples, Lanczos otherwise.
    #[default]
    Auto,
    Full,
    Lanczos,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub kernel: KernelChoice,
    pub alpha: f64,
    pub method: QuantileMethod,
    pub t_policy: TPolicy,
    /// Thresholds other than the chosen one are still reported; these
    /// options tune them all.
    pub quantile: BundleOptions,
    pub solver: Solver,
    /// Seed for down-sampling the larger group; `None` rejects unbalanced input.
    pub subsample_to_balance: Option<u64>,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            kernel: KernelChoice::MedianGaussian,
            alpha: 0.05,
            method: QuantileMethod::Practical,
            t_policy: TPolicy::AutoSelect,
            quantile: BundleOptions::default(),
            solver: Solver::Auto,
            subsample_to_balance: None,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidLevel(self.alpha));
        }
        if self.t_policy == TPolicy::Fixed(0) {
            return Err(Error::InvalidConfig("fixed truncation must be at least 1".into()));
        }
        let eta = self.quantile.eta;
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::InvalidConfig(format!("eta must lie in (0, 1), got {eta}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    RejectH0,
    RetainH0,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub decision: Decision,
    pub statistic: StNmmdStatistic,
    /// Threshold of the chosen method; `+inf` when no direction is kept.
    #[serde(serialize_with = "serde_num::tagged")]
    pub threshold: f64,
    pub method: QuantileMethod,
    /// Absent when no direction is kept.
    pub quantile: Option<QuantileBundle>,
    pub t_used: usize,
    pub selected_by: TPolicy,
    pub spectral: SpectralSummary,
    pub kernel: KernelSpec,
    /// The median distance was zero, so an arbitrary unit bandwidth was used.
    pub bandwidth_fallback: bool,
    pub n_x: usize,
    pub n_y: usize,
    pub subsampled: bool,
}

/// Data-dependent part of the test, shared by every configuration that uses
/// the same kernel.
#[derive(Debug, Clone)]
pub struct Prepared {
    kernel: KernelSpec,
    bandwidth_fallback: bool,
    gram: GramMatrix,
    /// Formed only when the full solver is used.
    centered: Option<CenteredWithinGram>,
    pkw: DVector<f64>,
    decomposition: SpectralDecomposition,
    solver: Solver,
    subsampled: bool,
}

fn check_samples(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptySample);
    }
    let d = x[0].len();
    for p in x.iter().chain(y) {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: p.len(),
            });
        }
    }
    Ok(())
}

fn subsample(points: &[Vec<f64>], keep: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, points.len(), keep).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| points[i].clone()).collect()
}

impl Prepared {
    pub fn new(
        x: &[Vec<f64>],
        y: &[Vec<f64>],
        kernel: KernelChoice,
        solver: Solver,
        subsample_to_balance: Option<u64>,
    ) -> Result<Self> {
        check_samples(x, y)?;
        let (x, y, subsampled) = match (x.len().cmp(&y.len()), subsample_to_balance) {
            (std::cmp::Ordering::Equal, _) => (x.to_vec(), y.to_vec(), false),
            (_, None) => {
                return Err(Error::UnbalancedDesign {
                    n_x: x.len(),
                    n_y: y.len(),
                })
            }
            (std::cmp::Ordering::Greater, Some(seed)) => (subsample(x, y.len(), seed), y.to_vec(), true),
            (std::cmp::Ordering::Less, Some(seed)) => (x.to_vec(), subsample(y, x.len(), seed), true),
        };
        if x.len() < 2 {
            return Err(Error::TooFewSamples {
                min: 2,
                found: x.len(),
            });
        }
        let (spec, bandwidth_fallback) = match kernel {
            KernelChoice::Fixed(spec) => (spec, false),
            KernelChoice::MedianGaussian | KernelChoice::MedianLaplacian => {
                let pooled: Vec<Vec<f64>> = x.iter().chain(&y).cloned().collect();
                let (h, fallback) = match median_heuristic(&pooled) {
                    Ok(h) => (h, false),
                    // all kernels of the family agree on a sample of one repeated point
                    Err(Error::AllPointsIdentical) => (1.0, true),
                    Err(e) => return Err(e),
                };
                let spec = if kernel == KernelChoice::MedianGaussian {
                    KernelSpec::gaussian(h)?
                } else {
                    KernelSpec::laplacian(h)?
                };
                (spec, fallback)
            }
        };
        let k = gram(&spec, &x, &y)?;
        let pkw = centered_mean_difference(&k);
        let mut centered = None;
        let decomposition = decompose(&k, &mut centered, solver, INITIAL_LEADING)?;
        Ok(Self {
            kernel: spec,
            bandwidth_fallback,
            gram: k,
            centered,
            pkw,
            decomposition,
            solver,
            subsampled,
        })
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    pub fn decomposition(&self) -> &SpectralDecomposition {
        &self.decomposition
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    /// Positive spectrum known so far, and whether it is the whole of it.
    fn known_spectrum(&self) -> (&[f64], bool) {
        let s = &self.decomposition;
        let exhausted = s.is_complete() || s.rank() < s.computed_eigenvalues().len();
        (s.eigenvalues(), exhausted)
    }

    /// Makes sure at least `k` leading eigenpairs (or the whole spectrum) are known.
    fn ensure_leading(&mut self, k: usize) -> Result<()> {
        let (known, exhausted) = self.known_spectrum();
        if exhausted || known.len() >= k {
            return Ok(());
        }
        self.decomposition = decompose(&self.gram, &mut self.centered, self.solver, k)?;
        Ok(())
    }

    fn auto_truncation(&mut self) -> Result<usize> {
        let n = self.decomposition.n_x();
        loop {
            let (known, exhausted) = self.known_spectrum();
            if known.is_empty() {
                return Ok(0);
            }
            let t = select_truncation(known, n)?;
            // the last known index cannot be confirmed without the next eigenvalue
            if exhausted || t < known.len() {
                return Ok(t);
            }
            let want = 2 * self.decomposition.computed_eigenvalues().len();
            self.ensure_leading(want)?;
        }
    }

    /// Runs the test for one configuration. Kernel and subsampling settings
    /// in `cfg` are ignored; they were fixed when preparing.
    pub fn evaluate(&mut self, cfg: &TestConfig) -> Result<TestReport> {
        cfg.validate()?;
        let t = match cfg.t_policy {
            TPolicy::AutoSelect => self.auto_truncation()?,
            TPolicy::Fixed(t) => {
                self.ensure_leading(t.max(2) + 1)?;
                self.decomposition.check_truncation(t)?;
                t
            }
        };
        let s = &self.decomposition;
        let (n_x, n_y) = (s.n_x(), s.n_y());
        if t == 0 {
            return Ok(TestReport {
                decision: Decision::RetainH0,
                statistic: StNmmdStatistic::empty(n_x, n_y),
                threshold: f64::INFINITY,
                method: cfg.method,
                quantile: None,
                t_used: 0,
                selected_by: cfg.t_policy,
                spectral: s.summary(0),
                kernel: self.kernel,
                bandwidth_fallback: self.bandwidth_fallback,
                n_x,
                n_y,
                subsampled: self.subsampled,
            });
        }
        let pi = project_centered(&self.pkw, s, t)?;
        let statistic = st_nmmd(s, &pi, t)?;
        let lambdas = s.eigenvalues()[..t].to_vec();
        let gaps = s.gaps(t)?;
        let n = n_x as f64;
        let sup = self.kernel.sup_bound();
        let bundle = quantile_bundle(n, cfg.alpha, &lambdas, &gaps, sup, true, &cfg.quantile)?;
        let threshold = match cfg.method {
            QuantileMethod::Chi2 => bundle.chi2_q,
            QuantileMethod::Practical => {
                practical_quantile(n, cfg.alpha, &lambdas, &gaps, cfg.quantile.eta, cfg.quantile.aggregation)?.0
            }
            QuantileMethod::ExactTheorem1 | QuantileMethod::SimplifiedCorollary1 => {
                let mk = sup.ok_or(Error::UnboundedKernel)?;
                let p = QuantileParams::new(n, cfg.alpha, mk, lambdas, gaps)?.plug_in(true);
                if cfg.method == QuantileMethod::ExactTheorem1 {
                    exact_bound(&p)?
                } else {
                    simplified_bound(&p, cfg.quantile.constants.sp3_floor)?.0
                }
            }
        };
        let decision = if statistic.total() > threshold {
            Decision::RejectH0
        } else {
            Decision::RetainH0
        };
        Ok(TestReport {
            decision,
            statistic,
            threshold,
            method: cfg.method,
            quantile: Some(bundle),
            t_used: t,
            selected_by: cfg.t_policy,
            spectral: s.summary(t),
            kernel: self.kernel,
            bandwidth_fallback: self.bandwidth_fallback,
            n_x,
            n_y,
            subsampled: self.subsampled,
        })
    }
}

fn decompose(
    k: &GramMatrix,
    centered: &mut Option<CenteredWithinGram>,
    solver: Solver,
    count: usize,
) -> Result<SpectralDecomposition> {
    let m = k.size();
    let full = match solver {
        Solver::Full => true,
        Solver::Lanczos => false,
        Solver::Auto => m <= FULL_SOLVER_LIMIT || 4 * count >= m,
    };
    if full {
        let g = centered.get_or_insert_with(|| centered_within_gram(k));
        eigendecompose(g, None)
    } else {
        eigendecompose_leading_from_gram(k, count, None)
    }
}

/// Full pipeline on raw samples.
pub fn run_test(x: &[Vec<f64>], y: &[Vec<f64>], cfg: &TestConfig) -> Result<TestReport> {
    cfg.validate()?;
    let mut prepared = Prepared::new(x, y, cfg.kernel, cfg.solver, cfg.subsample_to_balance)?;
    prepared.evaluate(cfg)
}
