//! Command-line front end: single tests on CSV data, level/power/truncation
//! experiments and MNIST preprocessing.
//!
//! Settings are resolved as command-line flag, then environment variable,
//! then configuration file, then built-in default.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use stnmmd::{
    Aggregation, BundleOptions, Decision, KernelFamily, QuantileMethod, Solver, TestConfig,
};
use stnmmd_sim::harness::{
    empirical_level, empirical_power, t_selection_census, Bandwidth, ExperimentConfig,
    KernelSetting, RunOptions, Truncation,
};
use stnmmd_sim::mnist::MnistStore;
use stnmmd_sim::output;

pub mod error;
pub mod input;

pub use error::CliError;

pub const REPORT_FORMAT: &str = "stnmmd-report/1";
pub const RECORDS_FORMAT: &str = "stnmmd-records/1";

pub const EXIT_RETAIN: i32 = 0;
pub const EXIT_REJECT: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "stnmmd", version, about = "Spectrally truncated normalized MMD two-sample test")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test whether two CSV samples come from the same distribution.
    Test(TestArgs),
    /// Estimate the empirical level of an experiment grid.
    Level(ExperimentArgs),
    /// Estimate the empirical power against the configured alternatives.
    Power(ExperimentArgs),
    /// Tabulate the selected truncation over an experiment grid.
    #[command(name = "select-t")]
    SelectT(ExperimentArgs),
    /// Pool MNIST IDX files to 7x7 images and store them as CSV.
    #[command(name = "mnist-prep")]
    MnistPrep(MnistPrepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Chi2,
    Practical,
    Exact,
    Simplified,
}

impl From<MethodArg> for QuantileMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Chi2 => QuantileMethod::Chi2,
            MethodArg::Practical => QuantileMethod::Practical,
            MethodArg::Exact => QuantileMethod::ExactTheorem1,
            MethodArg::Simplified => QuantileMethod::SimplifiedCorollary1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Gaussian,
    Laplacian,
    Linear,
}

impl From<KernelArg> for KernelFamily {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Gaussian => KernelFamily::Gaussian,
            KernelArg::Laplacian => KernelFamily::Laplacian,
            KernelArg::Linear => KernelFamily::Linear,
        }
    }
}

/// Settings shared by every subcommand that runs the test.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Nominal level.
    #[arg(long, env = "STNMMD_ALPHA")]
    pub alpha: Option<f64>,
    /// Threshold used for the decision.
    #[arg(long, env = "STNMMD_METHOD", value_enum)]
    pub method: Option<MethodArg>,
    /// Truncation: `auto` or a positive integer.
    #[arg(long = "T", env = "STNMMD_T")]
    pub truncation: Option<Truncation>,
    /// Fraction of the smallest `sqrt(n) lambda_t gap_t` used by the data-driven threshold.
    #[arg(long, env = "STNMMD_ETA")]
    pub eta: Option<f64>,
    #[arg(long, env = "STNMMD_KERNEL", value_enum)]
    pub kernel: Option<KernelArg>,
    /// `median` or a positive bandwidth.
    #[arg(long, env = "STNMMD_BANDWIDTH")]
    pub bandwidth: Option<Bandwidth>,
    /// Seed: subsampling seed for `test`, master seed for experiments.
    #[arg(long, env = "STNMMD_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// First sample, one observation per row.
    pub x: PathBuf,
    /// Second sample, same number of columns.
    pub y: PathBuf,
    /// TOML (or JSON) file with test settings.
    #[arg(long, env = "STNMMD_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    /// The first row of each CSV file is a header.
    #[arg(long)]
    pub header: bool,
    /// Randomly drop observations of the larger sample to balance the design.
    #[arg(long)]
    pub subsample_to_balance: bool,
    /// Also write the report to this file.
    #[arg(long, env = "STNMMD_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// TOML (or JSON) experiment configuration.
    #[arg(long, env = "STNMMD_CONFIG")]
    pub config: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
    #[arg(long, env = "STNMMD_REPETITIONS")]
    pub repetitions: Option<usize>,
    /// Worker threads; defaults to the available parallelism. Outputs do not depend on it.
    #[arg(long, env = "STNMMD_JOBS")]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, env = "STNMMD_OUT", default_value = "results")]
    pub out: PathBuf,
    /// Pooled MNIST store produced by `mnist-prep`.
    #[arg(long, env = "STNMMD_MNIST_STORE")]
    pub mnist_store: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MnistPrepArgs {
    /// IDX image file (`*-images-idx3-ubyte`).
    #[arg(long)]
    pub images: PathBuf,
    /// IDX label file (`*-labels-idx1-ubyte`).
    #[arg(long)]
    pub labels: PathBuf,
    /// Destination CSV.
    #[arg(long)]
    pub out: PathBuf,
}

/// Settings file accepted by `test`; every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFile {
    pub alpha: Option<f64>,
    pub method: Option<QuantileMethod>,
    pub truncation: Option<Truncation>,
    pub eta: Option<f64>,
    pub aggregation: Option<Aggregation>,
    pub kernel: Option<KernelFamily>,
    pub bandwidth: Option<Bandwidth>,
    pub seed: Option<u64>,
    pub header: Option<bool>,
    pub subsample_to_balance: Option<bool>,
    pub solver: Option<Solver>,
}

/// Effective settings of a `test` run, echoed in its report. Saved as a
/// file, it is a valid `--config` for `test`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestSettings {
    pub alpha: f64,
    pub method: QuantileMethod,
    pub truncation: Truncation,
    pub eta: f64,
    pub aggregation: Aggregation,
    pub kernel: KernelFamily,
    pub bandwidth: Bandwidth,
    pub seed: u64,
    pub header: bool,
    pub subsample_to_balance: bool,
    pub solver: Solver,
}

impl TestSettings {
    pub fn resolve(file: TestFile, args: &TestArgs) -> Self {
        let o = &args.overrides;
        Self {
            alpha: o.alpha.or(file.alpha).unwrap_or(0.05),
            method: o
                .method
                .map(Into::into)
                .or(file.method)
                .unwrap_or(QuantileMethod::Practical),
            truncation: o.truncation.or(file.truncation).unwrap_or(Truncation::Auto),
            eta: o.eta.or(file.eta).unwrap_or(stnmmd::quantile::DEFAULT_ETA),
            aggregation: file.aggregation.unwrap_or_default(),
            kernel: o
                .kernel
                .map(Into::into)
                .or(file.kernel)
                .unwrap_or(KernelFamily::Gaussian),
            bandwidth: o.bandwidth.or(file.bandwidth).unwrap_or_default(),
            seed: o.seed.or(file.seed).unwrap_or(0),
            header: args.header || file.header.unwrap_or(false),
            subsample_to_balance: args.subsample_to_balance
                || file.subsample_to_balance.unwrap_or(false),
            solver: file.solver.unwrap_or_default(),
        }
    }

    pub fn test_config(&self) -> Result<TestConfig, CliError> {
        let kernel = KernelSetting {
            family: self.kernel,
            bandwidth: self.bandwidth,
        }
        .choice()
        .map_err(|e| CliError::config("bandwidth", e.to_string()))?;
        let cfg = TestConfig {
            kernel,
            alpha: self.alpha,
            method: self.method,
            t_policy: self.truncation.policy(),
            quantile: BundleOptions {
                eta: self.eta,
                aggregation: self.aggregation,
                ..BundleOptions::default()
            },
            solver: self.solver,
            subsample_to_balance: self.subsample_to_balance.then_some(self.seed),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(&shown, e.to_string()))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).map_err(|e| CliError {
            line: Some(e.line() as u64),
            file: Some(shown.clone()),
            ..CliError::new("config_error", format!("{shown}: {e}"))
        })
    } else {
        toml::from_str(&text).map_err(|e| CliError {
            file: Some(shown.clone()),
            ..CliError::new("config_error", format!("{shown}: {e}"))
        })
    }
}

/// Applies the experiment command-line overrides on top of a loaded config.
pub fn apply_overrides(cfg: &mut ExperimentConfig, args: &ExperimentArgs) {
    let o = &args.overrides;
    if let Some(a) = o.alpha {
        cfg.alpha = vec![a];
    }
    if let Some(m) = o.method {
        cfg.methods = vec![m.into()];
    }
    if let Some(t) = o.truncation {
        cfg.truncation = vec![t];
    }
    if let Some(eta) = o.eta {
        cfg.eta = eta;
    }
    if let Some(k) = o.kernel {
        cfg.kernel.family = k.into();
    }
    if let Some(b) = o.bandwidth {
        cfg.kernel.bandwidth = b;
    }
    if let Some(seed) = o.seed {
        cfg.master_seed = seed;
    }
    if let Some(r) = args.repetitions {
        cfg.repetitions = r;
    }
    if let Some(p) = &args.mnist_store {
        cfg.mnist_store = Some(p.display().to_string());
    }
}

fn rounded<T: Serialize>(v: &T) -> Value {
    output::to_json(v)
}

fn cmd_test(args: &TestArgs) -> Result<(Value, i32), CliError> {
    let file = match &args.config {
        Some(p) => read_config(p)?,
        None => TestFile::default(),
    };
    let settings = TestSettings::resolve(file, args);
    let cfg = settings.test_config()?;
    let x = input::read_matrix(&args.x, settings.header)?;
    let y = input::read_matrix(&args.y, settings.header)?;
    if x[0].len() != y[0].len() {
        return Err(CliError::new(
            "dimension_mismatch",
            format!("X has {} columns, Y has {}", x[0].len(), y[0].len()),
        ));
    }
    let report = stnmmd::run_test(&x, &y, &cfg)?;
    let exit = match report.decision {
        Decision::RejectH0 => EXIT_REJECT,
        Decision::RetainH0 => EXIT_RETAIN,
    };
    let doc = json!({
        "format": REPORT_FORMAT,
        "status": "ok",
        "exit_code": exit,
        "decision": report.decision,
        "seed": settings.seed,
        "config": rounded(&settings),
        "inputs": {
            "x": args.x.display().to_string(),
            "y": args.y.display().to_string(),
            "x_rows": x.len(),
            "y_rows": y.len(),
            "columns": x[0].len(),
        },
        "result": rounded(&report),
    });
    Ok((doc, exit))
}

fn load_experiment(args: &ExperimentArgs) -> Result<(ExperimentConfig, Option<MnistStore>), CliError> {
    let mut cfg: ExperimentConfig = read_config(&args.config)?;
    apply_overrides(&mut cfg, args);
    cfg.validate()?;
    if args.jobs == Some(0) {
        return Err(CliError::config("jobs", "must be at least 1"));
    }
    let store = if cfg.needs_mnist() {
        let path = cfg.mnist_store.as_ref().ok_or_else(|| {
            CliError::config("mnist_store", "MNIST families need a store from `mnist-prep`")
        })?;
        Some(MnistStore::read_csv(Path::new(path))?)
    } else {
        None
    };
    Ok((cfg, store))
}

fn create_file(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, CliError> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| CliError::io(&path.display().to_string(), e.to_string()))
}

fn write_with<F>(path: &Path, f: F) -> Result<String, CliError>
where
    F: FnOnce(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()>,
{
    let mut w = create_file(path)?;
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(&path.display().to_string(), e.to_string()))?;
    Ok(path.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Level,
    Power,
    SelectT,
}

fn cmd_experiment(args: &ExperimentArgs, kind: ExperimentKind) -> Result<Value, CliError> {
    let (cfg, store) = load_experiment(args)?;
    let options = RunOptions {
        jobs: args.jobs,
        mnist: store.as_ref(),
    };
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::io(&args.out.display().to_string(), e.to_string()))?;
    let suffix = match kind {
        ExperimentKind::Level => "level",
        ExperimentKind::Power => "power",
        ExperimentKind::SelectT => "census",
    };
    let stem = args.out.join(format!("{}-{suffix}", cfg.name));
    let path = |ext: &str| PathBuf::from(format!("{}.{ext}", stem.display()));
    let mut written = Vec::new();
    match kind {
        ExperimentKind::Level | ExperimentKind::Power => {
            let table = if kind == ExperimentKind::Level {
                empirical_level(&cfg, options)?
            } else {
                empirical_power(&cfg, options)?
            };
            written.push(write_with(&path("csv"), |w| output::write_table_csv(w, &cfg, &table))?);
            let records = json!({
                "format": RECORDS_FORMAT,
                "kind": suffix,
                "master_seed": cfg.master_seed,
                "config": rounded(&cfg),
                "rows": rounded(&table.rows),
            });
            written.push(write_with(&path("json"), |w| output::write_json(w, &records))?);
            let plot = output::table_plot_data(&cfg, &table);
            written.push(write_with(&path("plot.json"), |w| output::write_json(w, &plot))?);
        }
        ExperimentKind::SelectT => {
            let census = t_selection_census(&cfg, options)?;
            written.push(write_with(&path("csv"), |w| output::write_census_csv(w, &cfg, &census))?);
            let records = json!({
                "format": RECORDS_FORMAT,
                "kind": suffix,
                "master_seed": cfg.master_seed,
                "config": rounded(&cfg),
                "rows": rounded(&census),
            });
            written.push(write_with(&path("json"), |w| output::write_json(w, &records))?);
            let plot = output::census_plot_data(&cfg, &census);
            written.push(write_with(&path("plot.json"), |w| output::write_json(w, &plot))?);
        }
    }
    Ok(json!({
        "format": REPORT_FORMAT,
        "status": "ok",
        "exit_code": 0,
        "seed": cfg.master_seed,
        "config": rounded(&cfg),
        "outputs": written,
    }))
}

fn cmd_mnist_prep(args: &MnistPrepArgs) -> Result<Value, CliError> {
    let store = MnistStore::load_idx(&args.images, &args.labels)?;
    let shown = args.out.display().to_string();
    let file = create_file(&args.out)?;
    store
        .write_csv(file)
        .map_err(|e| CliError::io(&shown, e.to_string()))?;
    let mut counts = [0u64; 10];
    for &l in store.labels() {
        if let Some(c) = counts.get_mut(l as usize) {
            *c += 1;
        }
    }
    Ok(json!({
        "format": REPORT_FORMAT,
        "status": "ok",
        "exit_code": 0,
        "images": store.len(),
        "label_counts": counts,
        "outputs": [shown],
    }))
}

fn error_document(e: &CliError) -> Value {
    json!({
        "format": REPORT_FORMAT,
        "status": "error",
        "exit_code": EXIT_ERROR,
        "error": e,
    })
}

/// Runs the command line and returns the process exit code. The JSON report
/// (or error report) goes to `stdout`.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Test(a) => cmd_test(a).and_then(|(doc, exit)| {
            if let Some(out) = &a.out {
                write_with(out, |w| output::write_json(w, &doc))?;
            }
            Ok((doc, exit))
        }),
        Command::Level(a) => cmd_experiment(a, ExperimentKind::Level).map(|d| (d, 0)),
        Command::Power(a) => cmd_experiment(a, ExperimentKind::Power).map(|d| (d, 0)),
        Command::SelectT(a) => cmd_experiment(a, ExperimentKind::SelectT).map(|d| (d, 0)),
        Command::MnistPrep(a) => cmd_mnist_prep(a).map(|d| (d, 0)),
    };
    let (doc, code) = match outcome {
        Ok(v) => v,
        Err(e) => {
            log::error!("{e}");
            (error_document(&e), EXIT_ERROR)
        }
    };
    if output::write_json(&mut *stdout, &doc).is_err() {
        return EXIT_ERROR;
    }
    code
}
