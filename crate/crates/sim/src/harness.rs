//! Monte-Carlo estimation of empirical level, power and the distribution of
//! the selected truncation.
//!
//! An experiment is a grid of cells `(null, alternative, n_total, d)`. Each
//! repetition of a cell draws `n_total / 2` points from the null and as many
//! from the alternative (the null again for level studies), prepares the
//! kernel spectrum once and evaluates every `(alpha, T, method)` row on it.
//! Repetitions are independent: each reads its own substream keyed by the
//! master seed, the cell and the repetition index.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use stnmmd::{
    Aggregation, BundleOptions, Decision, KernelChoice, KernelFamily, KernelSpec, Prepared,
    QuantileMethod, Solver, TPolicy, TestConfig,
};

use crate::data::{sample, DataError, DistributionSpec, Family};
use crate::mnist::MnistStore;
use crate::rng::substream;

/// z-value of the two-sided 95% normal interval.
pub const Z95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("{field}: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

fn config_error(field: impl Into<String>, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: field.into(),
        message: message.into(),
    }
}

/// Truncation of one table row: a fixed `T` or the data-driven choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Truncation {
    Fixed(usize),
    Auto,
}

impl Truncation {
    pub fn policy(self) -> TPolicy {
        match self {
            Truncation::Fixed(t) => TPolicy::Fixed(t),
            Truncation::Auto => TPolicy::AutoSelect,
        }
    }
}

impl fmt::Display for Truncation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Truncation::Fixed(t) => write!(f, "{t}"),
            Truncation::Auto => f.write_str("auto"),
        }
    }
}

impl std::str::FromStr for Truncation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Truncation::Auto);
        }
        match s.parse::<usize>() {
            Ok(t) if t >= 1 => Ok(Truncation::Fixed(t)),
            _ => Err(format!("expected \"auto\" or a positive integer, got {s:?}")),
        }
    }
}

impl Serialize for Truncation {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Truncation::Fixed(t) => s.serialize_u64(*t as u64),
            Truncation::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for Truncation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(u64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Int(t) => Ok(Truncation::Fixed(t as usize)),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Bandwidth of a kernel setting: the pooled median distance or a value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Bandwidth {
    #[default]
    Median,
    Value(f64),
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bandwidth::Median => f.write_str("median"),
            Bandwidth::Value(h) => write!(f, "{h}"),
        }
    }
}

impl std::str::FromStr for Bandwidth {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("median") {
            return Ok(Bandwidth::Median);
        }
        match s.parse::<f64>() {
            Ok(h) if h.is_finite() && h > 0.0 => Ok(Bandwidth::Value(h)),
            _ => Err(format!("expected \"median\" or a positive number, got {s:?}")),
        }
    }
}

impl Serialize for Bandwidth {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Bandwidth::Median => s.serialize_str("median"),
            Bandwidth::Value(h) => s.serialize_f64(*h),
        }
    }
}

impl<'de> Deserialize<'de> for Bandwidth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(h) => format!("{h}").parse().map_err(serde::de::Error::custom),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSetting {
    pub family: KernelFamily,
    /// Ignored by the linear kernel.
    #[serde(default)]
    pub bandwidth: Bandwidth,
}

impl Default for KernelSetting {
    fn default() -> Self {
        Self {
            family: KernelFamily::Gaussian,
            bandwidth: Bandwidth::Median,
        }
    }
}

impl KernelSetting {
    pub fn choice(&self) -> std::result::Result<KernelChoice, stnmmd::Error> {
        Ok(match (self.family, self.bandwidth) {
            (KernelFamily::Gaussian, Bandwidth::Median) => KernelChoice::MedianGaussian,
            (KernelFamily::Laplacian, Bandwidth::Median) => KernelChoice::MedianLaplacian,
            (KernelFamily::Gaussian, Bandwidth::Value(h)) => KernelChoice::Fixed(KernelSpec::gaussian(h)?),
            (KernelFamily::Laplacian, Bandwidth::Value(h)) => {
                KernelChoice::Fixed(KernelSpec::laplacian(h)?)
            }
            (KernelFamily::Linear, _) => KernelChoice::Fixed(KernelSpec::linear()),
        })
    }
}

fn default_name() -> String {
    "experiment".into()
}

fn default_alpha() -> Vec<f64> {
    vec![0.05]
}

fn default_truncation() -> Vec<Truncation> {
    vec![Truncation::Auto]
}

fn default_methods() -> Vec<QuantileMethod> {
    vec![QuantileMethod::Practical]
}

fn default_eta() -> f64 {
    stnmmd::quantile::DEFAULT_ETA
}

fn default_null() -> Family {
    Family::GaussianIso
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub master_seed: u64,
    pub repetitions: usize,
    /// Pooled sample sizes; each group gets half.
    pub n_total: Vec<usize>,
    pub d: Vec<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: Vec<f64>,
    #[serde(default = "default_truncation")]
    pub truncation: Vec<Truncation>,
    #[serde(default = "default_methods")]
    pub methods: Vec<QuantileMethod>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub aggregation: Aggregation,
    #[serde(default)]
    pub kernel: KernelSetting,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default = "default_null")]
    pub null: Family,
    /// Distributions of the second sample in power studies.
    #[serde(default)]
    pub alternatives: Vec<Family>,
    /// Drop failed repetitions from the denominator instead of counting
    /// them as non-rejections.
    #[serde(default)]
    pub strict_failures: bool,
    /// Pooled image store written by `mnist-prep`, needed by MNIST families.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mnist_store: Option<String>,
}

impl ExperimentConfig {
    /// Gaussian null, one cell, default rows.
    pub fn new(master_seed: u64, repetitions: usize, n_total: usize, d: usize) -> Self {
        Self {
            name: default_name(),
            master_seed,
            repetitions,
            n_total: vec![n_total],
            d: vec![d],
            alpha: default_alpha(),
            truncation: default_truncation(),
            methods: default_methods(),
            eta: default_eta(),
            aggregation: Aggregation::Mean,
            kernel: KernelSetting::default(),
            solver: Solver::Auto,
            null: default_null(),
            alternatives: Vec::new(),
            strict_failures: false,
            mnist_store: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(config_error("repetitions", "must be at least 1"));
        }
        let lists: [(&str, usize); 5] = [
            ("n_total", self.n_total.len()),
            ("d", self.d.len()),
            ("alpha", self.alpha.len()),
            ("truncation", self.truncation.len()),
            ("methods", self.methods.len()),
        ];
        for (field, len) in lists {
            if len == 0 {
                return Err(config_error(field, "must not be empty"));
            }
        }
        for (i, &n) in self.n_total.iter().enumerate() {
            if n % 2 != 0 || n < 4 {
                return Err(config_error(
                    format!("n_total[{i}]"),
                    format!("must be even and at least 4, got {n}"),
                ));
            }
        }
        for (i, &d) in self.d.iter().enumerate() {
            if d == 0 {
                return Err(config_error(format!("d[{i}]"), "must be positive"));
            }
        }
        for (i, &a) in self.alpha.iter().enumerate() {
            if !(a > 0.0 && a < 1.0) {
                return Err(config_error(format!("alpha[{i}]"), format!("must lie in (0, 1), got {a}")));
            }
        }
        for (i, t) in self.truncation.iter().enumerate() {
            if *t == Truncation::Fixed(0) {
                return Err(config_error(format!("truncation[{i}]"), "must be \"auto\" or at least 1"));
            }
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(config_error("eta", format!("must lie in (0, 1), got {}", self.eta)));
        }
        self.kernel
            .choice()
            .map_err(|e| config_error("kernel.bandwidth", e.to_string()))?;
        for &d in &self.d {
            DistributionSpec::new(self.null.clone(), d)
                .validate()
                .map_err(|e| config_error("null", e.to_string()))?;
            for (i, alt) in self.alternatives.iter().enumerate() {
                DistributionSpec::new(alt.clone(), d)
                    .validate()
                    .map_err(|e| config_error(format!("alternatives[{i}]"), e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn needs_mnist(&self) -> bool {
        self.null.needs_mnist() || self.alternatives.iter().any(Family::needs_mnist)
    }

    /// Null-versus-null cells.
    pub fn level_cells(&self) -> Vec<Cell> {
        self.cells_for(std::slice::from_ref(&self.null))
    }

    /// Null-versus-alternative cells, alternatives outermost.
    pub fn power_cells(&self) -> Vec<Cell> {
        self.cells_for(&self.alternatives)
    }

    fn cells_for(&self, alternatives: &[Family]) -> Vec<Cell> {
        let mut cells = Vec::new();
        for alt in alternatives {
            for &n_total in &self.n_total {
                for &d in &self.d {
                    cells.push(Cell {
                        null: DistributionSpec::new(self.null.clone(), d),
                        alternative: DistributionSpec::new(alt.clone(), d),
                        n_total,
                    });
                }
            }
        }
        cells
    }

    /// Rows evaluated in every repetition, alpha outermost, method innermost.
    pub fn rows(&self) -> Vec<RowKey> {
        let mut rows = Vec::new();
        for &alpha in &self.alpha {
            for &truncation in &self.truncation {
                for &method in &self.methods {
                    rows.push(RowKey {
                        alpha,
                        truncation,
                        method,
                    });
                }
            }
        }
        rows
    }

    fn test_config(&self, row: &RowKey, kernel: KernelChoice) -> TestConfig {
        TestConfig {
            kernel,
            alpha: row.alpha,
            method: row.method,
            t_policy: row.truncation.policy(),
            quantile: BundleOptions {
                eta: self.eta,
                aggregation: self.aggregation,
                ..BundleOptions::default()
            },
            solver: self.solver,
            subsample_to_balance: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub null: DistributionSpec,
    pub alternative: DistributionSpec,
    pub n_total: usize,
}

impl Cell {
    pub fn d(&self) -> usize {
        self.null.d
    }

    pub fn per_group(&self) -> usize {
        self.n_total / 2
    }

    /// Identifies the cell's random streams. A power cell whose alternative
    /// equals the null shares its key, hence its data, with the level cell.
    pub fn key(&self) -> String {
        format!(
            "{}|{}|n_total={}",
            serde_json::to_string(&self.null).expect("distribution serializes"),
            serde_json::to_string(&self.alternative).expect("distribution serializes"),
            self.n_total
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RowKey {
    pub alpha: f64,
    pub truncation: Truncation,
    pub method: QuantileMethod,
}

/// Result of one row in one repetition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepRecord {
    pub rejected: bool,
    /// Error message of a failed repetition.
    pub failure: Option<String>,
    /// `D^2_T`; NaN on failure.
    pub statistic: f64,
    /// NaN on failure, `+inf` when no direction is kept.
    pub threshold: f64,
    /// Truncation actually used; `None` on failure.
    pub t_used: Option<usize>,
}

impl RepRecord {
    pub fn failed(message: impl Into<String>) -> Self {
        Self {
            rejected: false,
            failure: Some(message.into()),
            statistic: f64::NAN,
            threshold: f64::NAN,
            t_used: None,
        }
    }
}

/// Evaluates every row of one repetition on the drawn samples.
pub trait Evaluator: Sync {
    fn evaluate(&self, x: &[Vec<f64>], y: &[Vec<f64>], rows: &[RowKey]) -> Vec<RepRecord>;
}

/// The full test pipeline with the experiment's kernel and quantile options.
pub struct PipelineEvaluator<'a> {
    config: &'a ExperimentConfig,
    kernel: KernelChoice,
}

impl<'a> PipelineEvaluator<'a> {
    pub fn new(config: &'a ExperimentConfig) -> Result<Self> {
        let kernel = config
            .kernel
            .choice()
            .map_err(|e| config_error("kernel.bandwidth", e.to_string()))?;
        Ok(Self { config, kernel })
    }
}

impl Evaluator for PipelineEvaluator<'_> {
    fn evaluate(&self, x: &[Vec<f64>], y: &[Vec<f64>], rows: &[RowKey]) -> Vec<RepRecord> {
        let mut prepared = match Prepared::new(x, y, self.kernel, self.config.solver, None) {
            Ok(p) => p,
            Err(e) => return vec![RepRecord::failed(e.to_string()); rows.len()],
        };
        rows.iter()
            .map(|row| match prepared.evaluate(&self.config.test_config(row, self.kernel)) {
                Ok(report) => RepRecord {
                    rejected: report.decision == Decision::RejectH0,
                    failure: None,
                    statistic: report.statistic.total(),
                    threshold: report.threshold,
                    t_used: Some(report.t_used),
                },
                Err(e) => RepRecord::failed(e.to_string()),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions<'a> {
    /// Worker threads; `None` uses the available parallelism.
    pub jobs: Option<usize>,
    pub mnist: Option<&'a MnistStore>,
}

/// Raw per-repetition records of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub cells: Vec<Cell>,
    pub rows: Vec<RowKey>,
    pub repetitions: usize,
    /// Indexed `[cell][repetition][row]`.
    pub records: Vec<Vec<Vec<RepRecord>>>,
}

impl Simulation {
    pub fn records(&self, cell: usize, row: usize) -> impl Iterator<Item = &RepRecord> + '_ {
        self.records[cell].iter().map(move |rep| &rep[row])
    }

    pub fn stats(&self, cell: usize, row: usize) -> CellStats {
        let mut s = CellStats::default();
        for r in self.records(cell, row) {
            s.push(r);
        }
        s
    }

    pub fn table(&self, strict_failures: bool) -> LevelPowerTable {
        let mut rows = Vec::with_capacity(self.cells.len() * self.rows.len());
        for (ci, cell) in self.cells.iter().enumerate() {
            for (ri, key) in self.rows.iter().enumerate() {
                let stats = self.stats(ci, ri);
                if stats.failures > 0 {
                    log::warn!(
                        "{} of {} repetitions failed in cell {} (T = {}, {:?}); {}",
                        stats.failures,
                        stats.repetitions,
                        cell.key(),
                        key.truncation,
                        key.method,
                        if strict_failures {
                            "excluded from the denominator"
                        } else {
                            "counted as non-rejections"
                        }
                    );
                }
                rows.push(TableRow::new(cell, key, &stats, strict_failures));
            }
        }
        LevelPowerTable { rows }
    }
}

/// Draws the samples of every repetition of every cell and evaluates them.
///
/// The output is independent of the number of workers.
pub fn simulate(
    config: &ExperimentConfig,
    cells: Vec<Cell>,
    evaluator: &dyn Evaluator,
    options: RunOptions<'_>,
) -> Result<Simulation> {
    config.validate()?;
    if config.needs_mnist() && options.mnist.is_none() {
        return Err(DataError::MnistUnavailable.into());
    }
    let rows = config.rows();
    let reps = config.repetitions;
    let keys: Vec<String> = cells.iter().map(Cell::key).collect();
    let run_one = |idx: usize| -> Result<Vec<RepRecord>> {
        let (ci, rep) = (idx / reps, idx % reps);
        let cell = &cells[ci];
        let mut rng = substream(config.master_seed, &keys[ci], rep as u64);
        let x = sample(&cell.null, cell.per_group(), &mut rng, options.mnist)?;
        let y = sample(&cell.alternative, cell.per_group(), &mut rng, options.mnist)?;
        Ok(evaluator.evaluate(&x, &y, &rows))
    };
    let total = cells.len() * reps;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::ThreadPool(e.to_string()))?;
    let flat: Vec<Result<Vec<RepRecord>>> =
        pool.install(|| (0..total).into_par_iter().map(run_one).collect());
    let mut records: Vec<Vec<Vec<RepRecord>>> = Vec::with_capacity(cells.len());
    let mut it = flat.into_iter();
    for _ in 0..cells.len() {
        let mut per_cell = Vec::with_capacity(reps);
        for _ in 0..reps {
            per_cell.push(it.next().expect("one result per repetition")?);
        }
        records.push(per_cell);
    }
    Ok(Simulation {
        cells,
        rows,
        repetitions: reps,
        records,
    })
}

/// Commutative summary of one row in one cell.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CellStats {
    pub repetitions: u64,
    pub rejections: u64,
    pub failures: u64,
    /// Frequency of each used truncation over non-failed repetitions.
    pub t_histogram: BTreeMap<usize, u64>,
}

impl CellStats {
    pub fn push(&mut self, r: &RepRecord) {
        self.repetitions += 1;
        if r.failure.is_some() {
            self.failures += 1;
            return;
        }
        if r.rejected {
            self.rejections += 1;
        }
        if let Some(t) = r.t_used {
            *self.t_histogram.entry(t).or_default() += 1;
        }
    }

    pub fn merge(&mut self, other: &CellStats) {
        self.repetitions += other.repetitions;
        self.rejections += other.rejections;
        self.failures += other.failures;
        for (&t, &c) in &other.t_histogram {
            *self.t_histogram.entry(t).or_default() += c;
        }
    }

    pub fn denominator(&self, strict_failures: bool) -> u64 {
        if strict_failures {
            self.repetitions - self.failures
        } else {
            self.repetitions
        }
    }

    /// Rejection rate; zero when nothing is left in the denominator.
    pub fn rate(&self, strict_failures: bool) -> f64 {
        let den = self.denominator(strict_failures);
        if den == 0 {
            0.0
        } else {
            self.rejections as f64 / den as f64
        }
    }

    pub fn mean_t(&self) -> f64 {
        let count: u64 = self.t_histogram.values().sum();
        let sum: u64 = self.t_histogram.iter().map(|(&t, &c)| t as u64 * c).sum();
        if count == 0 {
            f64::NAN
        } else {
            sum as f64 / count as f64
        }
    }

    /// Lower median of the used truncations.
    pub fn median_t(&self) -> Option<usize> {
        let count: u64 = self.t_histogram.values().sum();
        if count == 0 {
            return None;
        }
        let target = count.div_ceil(2);
        let mut seen = 0;
        for (&t, &c) in &self.t_histogram {
            seen += c;
            if seen >= target {
                return Some(t);
            }
        }
        None
    }
}

/// Normal-approximation interval `rate +- 1.96 sqrt(rate (1 - rate) / R)`,
/// clipped to `[0, 1]`. Returns `(half_width, low, high)`.
pub fn binomial_ci(rate: f64, r: u64) -> (f64, f64, f64) {
    if r == 0 {
        return (0.0, 0.0, 1.0);
    }
    let half = Z95 * (rate * (1.0 - rate) / r as f64).sqrt();
    (half, (rate - half).max(0.0), (rate + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub null: String,
    pub alternative: String,
    pub n_total: usize,
    pub d: usize,
    pub alpha: f64,
    pub truncation: Truncation,
    pub method: QuantileMethod,
    pub repetitions: u64,
    pub failures: u64,
    pub rejections: u64,
    pub denominator: u64,
    pub rate: f64,
    pub ci_half_width: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// NaN when every repetition failed.
    pub mean_t: f64,
    pub t_histogram: BTreeMap<usize, u64>,
}

impl TableRow {
    pub fn new(cell: &Cell, key: &RowKey, stats: &CellStats, strict_failures: bool) -> Self {
        let rate = stats.rate(strict_failures);
        let den = stats.denominator(strict_failures);
        let (half, low, high) = binomial_ci(rate, den);
        Self {
            null: cell.null.family.label(),
            alternative: cell.alternative.family.label(),
            n_total: cell.n_total,
            d: cell.d(),
            alpha: key.alpha,
            truncation: key.truncation,
            method: key.method,
            repetitions: stats.repetitions,
            failures: stats.failures,
            rejections: stats.rejections,
            denominator: den,
            rate,
            ci_half_width: half,
            ci_low: low,
            ci_high: high,
            mean_t: stats.mean_t(),
            t_histogram: stats.t_histogram.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelPowerTable {
    pub rows: Vec<TableRow>,
}

impl LevelPowerTable {
    pub fn find(
        &self,
        n_total: usize,
        d: usize,
        truncation: Truncation,
        method: QuantileMethod,
    ) -> impl Iterator<Item = &TableRow> + '_ {
        self.rows.iter().filter(move |r| {
            r.n_total == n_total && r.d == d && r.truncation == truncation && r.method == method
        })
    }
}

/// Level study: both samples come from the null.
pub fn empirical_level(config: &ExperimentConfig, options: RunOptions<'_>) -> Result<LevelPowerTable> {
    let evaluator = PipelineEvaluator::new(config)?;
    let sim = simulate(config, config.level_cells(), &evaluator, options)?;
    Ok(sim.table(config.strict_failures))
}

/// Power study: the second sample comes from each alternative in turn.
pub fn empirical_power(config: &ExperimentConfig, options: RunOptions<'_>) -> Result<LevelPowerTable> {
    if config.alternatives.is_empty() {
        return Err(config_error("alternatives", "a power study needs at least one alternative"));
    }
    let evaluator = PipelineEvaluator::new(config)?;
    let sim = simulate(config, config.power_cells(), &evaluator, options)?;
    Ok(sim.table(config.strict_failures))
}

/// Distribution of the selected truncation in one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TCensus {
    pub null: String,
    pub alternative: String,
    pub n_total: usize,
    pub d: usize,
    pub repetitions: u64,
    pub failures: u64,
    pub histogram: BTreeMap<usize, u64>,
    pub mean: f64,
    pub median: Option<usize>,
}

/// Selected-truncation histograms over the level cells followed by the
/// power cells. Only the truncation rule matters here, so a single row with
/// `T = auto` and the first configured level and method is evaluated.
pub fn t_selection_census(config: &ExperimentConfig, options: RunOptions<'_>) -> Result<Vec<TCensus>> {
    let mut auto = config.clone();
    auto.truncation = vec![Truncation::Auto];
    auto.alpha.truncate(1);
    auto.methods.truncate(1);
    let mut cells = auto.level_cells();
    cells.extend(auto.power_cells());
    let evaluator = PipelineEvaluator::new(&auto)?;
    let sim = simulate(&auto, cells, &evaluator, options)?;
    Ok(sim
        .cells
        .iter()
        .enumerate()
        .map(|(ci, cell)| {
            let s = sim.stats(ci, 0);
            TCensus {
                null: cell.null.family.label(),
                alternative: cell.alternative.family.label(),
                n_total: cell.n_total,
                d: cell.d(),
                repetitions: s.repetitions,
                failures: s.failures,
                mean: s.mean_t(),
                median: s.median_t(),
                histogram: s.t_histogram,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct AlwaysReject;

    impl Evaluator for AlwaysReject {
        fn evaluate(&self, _: &[Vec<f64>], _: &[Vec<f64>], rows: &[RowKey]) -> Vec<RepRecord> {
            rows.iter()
                .map(|_| RepRecord {
                    rejected: true,
                    failure: None,
                    statistic: 1.0,
                    threshold: 0.0,
                    t_used: Some(1),
                })
                .collect()
        }
    }

    fn record(rejected: bool) -> RepRecord {
        RepRecord {
            rejected,
            failure: None,
            statistic: 0.0,
            threshold: 0.0,
            t_used: Some(2),
        }
    }

    #[test]
    fn always_reject_stub_has_rate_one() {
        let cfg = ExperimentConfig::new(1, 4, 10, 2);
        let sim = simulate(&cfg, cfg.level_cells(), &AlwaysReject, RunOptions::default()).unwrap();
        let table = sim.table(false);
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.rows[0].rate, 1.0);
        assert_eq!(table.rows[0].ci_half_width, 0.0);
        assert_eq!(table.rows[0].repetitions, 4);
    }

    #[test]
    fn one_rejection_in_four() {
        let mut s = CellStats::default();
        for r in [true, false, false, false] {
            s.push(&record(r));
        }
        assert_eq!(s.rate(false), 0.25);
        let (half, low, high) = binomial_ci(0.25, 4);
        assert_eq!(half, 1.96 * (0.25f64 * 0.75 / 4.0).sqrt());
        assert_eq!(low, 0.0);
        assert_eq!(high, 0.25 + half);
    }

    #[test]
    fn failures_and_strict_flag() {
        let mut s = CellStats::default();
        s.push(&record(true));
        s.push(&record(false));
        s.push(&RepRecord::failed("eigensolver"));
        s.push(&RepRecord::failed("eigensolver"));
        assert_eq!(s.rate(false), 0.25);
        assert_eq!(s.rate(true), 0.5);
        assert_eq!(s.denominator(true), 2);
        assert_eq!(s.t_histogram.values().sum::<u64>(), 2);
    }

    #[test]
    fn merge_is_order_independent() {
        let records: Vec<RepRecord> = (0..30).map(|i| record(i % 3 == 0)).collect();
        let mut whole = CellStats::default();
        records.iter().for_each(|r| whole.push(r));
        let mut a = CellStats::default();
        let mut b = CellStats::default();
        records[..11].iter().for_each(|r| a.push(r));
        records[11..].iter().rev().for_each(|r| b.push(r));
        b.merge(&a);
        assert_eq!(b, whole);
    }

    #[test]
    fn median_of_histogram() {
        let mut s = CellStats::default();
        for t in [0, 1, 1, 3, 5] {
            s.push(&RepRecord {
                t_used: Some(t),
                ..record(false)
            });
        }
        assert_eq!(s.median_t(), Some(1));
        assert!((s.mean_t() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn truncation_and_bandwidth_parse() {
        assert_eq!("auto".parse::<Truncation>().unwrap(), Truncation::Auto);
        assert_eq!("3".parse::<Truncation>().unwrap(), Truncation::Fixed(3));
        assert!("0".parse::<Truncation>().is_err());
        assert_eq!("median".parse::<Bandwidth>().unwrap(), Bandwidth::Median);
        assert_eq!("0.5".parse::<Bandwidth>().unwrap(), Bandwidth::Value(0.5));
        assert!("-1".parse::<Bandwidth>().is_err());
    }

    #[test]
    fn validation_names_the_field() {
        let mut cfg = ExperimentConfig::new(1, 4, 10, 2);
        cfg.n_total = vec![10, 11];
        match cfg.validate() {
            Err(HarnessError::Config { field, .. }) => assert_eq!(field, "n_total[1]"),
            other => panic!("{other:?}"),
        }
        let mut cfg = ExperimentConfig::new(1, 0, 10, 2);
        assert!(cfg.validate().is_err());
        cfg.repetitions = 1;
        cfg.alternatives = vec![Family::GaussianMeanShift { shift: vec![1.0; 3] }];
        match cfg.validate() {
            Err(HarnessError::Config { field, .. }) => assert_eq!(field, "alternatives[0]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_round_trips_through_toml() {
        let text = r#"
            name = "shift"
            master_seed = 7
            repetitions = 20
            n_total = [100, 400]
            d = [2]
            truncation = [1, 2, "auto"]
            methods = ["chi2", "practical", "exact"]
            kernel = { family = "gaussian", bandwidth = 0.5 }
            null = { family = "gaussian_iso" }
            alternatives = [{ family = "gaussian_mean_shift", shift = [1.0] }]
        "#;
        let cfg: ExperimentConfig = toml::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.truncation, vec![Truncation::Fixed(1), Truncation::Fixed(2), Truncation::Auto]);
        assert_eq!(cfg.methods[2], QuantileMethod::ExactTheorem1);
        assert_eq!(cfg.kernel.bandwidth, Bandwidth::Value(0.5));
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        assert!(toml::from_str::<ExperimentConfig>("master_seed = 1\nrepetitions = 1\nn_total = [4]\nd = [1]\nbogus = 1").is_err());
    }
}
