//! Command-line front end. [`run`] parses arguments, executes one
//! subcommand and returns the process exit code: `0` on success, `1` when a
//! requested check fails, `2` on usage or configuration errors.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{self, AmbientKind, FoliationModel, ModelKind};
use crate::comparison::{self, ComparisonError};
use crate::diagnostics::{self, Check, DiagnosticsError};
use crate::extrinsic;
use crate::flow::{self, FlowOptions};
use crate::report;
use crate::verify::{self, Suite, SuiteContext};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "ISOFLOW_THREADS";

/// Largest accepted sweep grid.
pub const MAX_GRID: usize = 100_000;

const EXTRINSIC_SAMPLES: usize = 200;
const EXTRINSIC_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "isoflow", version, about = "Reduced mean curvature flow of isoparametric foliations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Inspect the model catalog.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
    /// Integrate the reduced flow.
    Flow {
        #[command(subcommand)]
        action: FlowAction,
    },
    /// Run verification suites.
    Verify(VerifyArgs),
    /// Lower bound on focal distances relative to strata distances.
    Sigma(SigmaArgs),
}

#[derive(Debug, Subcommand)]
enum CatalogAction {
    /// Print the catalog as JSON.
    List {
        /// Keep models matching `key=value` (repeatable).
        #[arg(long, value_name = "KEY=VALUE")]
        filter: Vec<String>,
    },
}

#[derive(Debug, Subcommand)]
enum FlowAction {
    /// Flow a single leaf and analyze the singularity.
    Run(RunArgs),
    /// Flow a grid of leaves and check finite-time singularities.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelName {
    Concentric,
    Cylinders,
    SphereIso,
}

#[derive(Debug, Clone, Default, Args)]
struct ModelArgs {
    #[arg(long, value_enum)]
    model: Option<ModelName>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    g: Option<usize>,
    #[arg(long)]
    m0: Option<usize>,
    #[arg(long)]
    m1: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
struct OptionArgs {
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    #[arg(long)]
    theta_stop: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    sample_stride: Option<usize>,
    #[arg(long)]
    target_samples: Option<usize>,
    #[arg(long)]
    step_ratio: Option<f64>,
}

#[derive(Debug, Clone, Args)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    options: OptionArgs,
    /// Starting coordinate, or `sweep` to flow a grid.
    #[arg(long, allow_hyphen_values = true)]
    theta0: Option<String>,
    /// Grid size when `--theta0 sweep`.
    #[arg(long)]
    grid: Option<usize>,
    /// Checks to run (repeatable or comma separated).
    #[arg(long = "check", value_delimiter = ',', value_parser = parse_check)]
    checks: Vec<Check>,
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Option<f64>,
    #[arg(long = "K", allow_hyphen_values = true)]
    k_curv: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trace_csv: Option<PathBuf>,
    #[arg(long)]
    report_json: Option<PathBuf>,
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    options: OptionArgs,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    report_json: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct VerifyArgs {
    /// Suites to run (repeatable or comma separated; default all).
    #[arg(long = "suite", value_delimiter = ',', value_parser = parse_suite)]
    suites: Vec<SuiteChoice>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    options: OptionArgs,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Option<f64>,
    #[arg(long = "K", allow_hyphen_values = true)]
    k_curv: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    report_json: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct SigmaArgs {
    #[arg(long = "K", allow_hyphen_values = true, default_value_t = 1.0)]
    k_curv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SuiteChoice {
    All,
    One(Suite),
}

fn parse_check(s: &str) -> Result<Check, String> {
    Check::parse(s).ok_or_else(|| {
        let names: Vec<_> = Check::ALL.iter().map(|c| c.name()).collect();
        format!("unknown check `{s}`; expected one of {}", names.join(", "))
    })
}

fn parse_suite(s: &str) -> Result<SuiteChoice, String> {
    if s == "all" {
        return Ok(SuiteChoice::All);
    }
    Suite::parse(s).map(SuiteChoice::One).ok_or_else(|| {
        let names: Vec<_> = Suite::ALL.iter().map(|c| c.name()).collect();
        format!("unknown suite `{s}`; expected all or one of {}", names.join(", "))
    })
}

/// Where a flow run starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Start {
    Theta(f64),
    Sweep(SweepKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepKeyword {
    #[serde(rename = "sweep")]
    Sweep,
}

/// JSON run configuration. Every field is optional; unknown keys are
/// rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<ModelKind>,
    pub theta0: Option<Start>,
    pub grid: Option<usize>,
    pub options: FlowOptions,
    pub checks: Option<Vec<Check>>,
    pub suites: Option<Vec<String>>,
    pub epsilon: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    pub seed: Option<u64>,
    pub trace_csv: Option<PathBuf>,
    pub report_json: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("invalid config: {e}"))
    }

    fn load(path: Option<&Path>) -> Result<Self, Failure> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_json(&text).map_err(Failure::Usage)
            }
        }
    }
}

#[derive(Debug)]
enum Failure {
    /// Bad flags, config or environment: exit 2.
    Usage(String),
    /// Output could not be written: exit 1.
    Io(String),
}

type CmdResult = Result<i32, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Run the command line `args` (including the program name) and return the
/// exit code. Reports go to `out` unless a path is given; diagnostics go to
/// `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let threads = std::env::var(THREADS_ENV).ok();
    run_with_threads(args, threads.as_deref(), out, err)
}

/// [`run`] with the thread cap given explicitly instead of read from the
/// environment.
pub fn run_with_threads<I, T>(args: I, threads: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    2
                }
            };
        }
    };
    let pool = match thread_pool(threads) {
        Ok(p) => p,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            return 2;
        }
    };
    // commands write into buffers so that they can run on the worker pool
    let mut out_buf: Vec<u8> = Vec::new();
    let mut err_buf: Vec<u8> = Vec::new();
    let result = match &pool {
        Some(p) => p.install(|| dispatch(cli.command, &mut out_buf, &mut err_buf)),
        None => dispatch(cli.command, &mut out_buf, &mut err_buf),
    };
    let _ = out.write_all(&out_buf);
    let _ = err.write_all(&err_buf);
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            let _ = writeln!(err, "run `isoflow --help` for usage");
            2
        }
        Err(Failure::Io(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
    }
}

fn thread_pool(threads: Option<&str>) -> Result<Option<rayon::ThreadPool>, String> {
    let Some(raw) = threads else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("{THREADS_ENV} must be a positive integer, got `{raw}`"))?;
    if n == 0 || n > 4096 {
        return Err(format!("{THREADS_ENV} must lie in [1, 4096], got {n}"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map(Some)
        .map_err(|e| format!("cannot start {n} worker threads: {e}"))
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    match command {
        Command::Catalog {
            action: CatalogAction::List { filter },
        } => cmd_catalog_list(&filter, out),
        Command::Flow {
            action: FlowAction::Run(args),
        } => cmd_flow_run(args, out, err),
        Command::Flow {
            action: FlowAction::Sweep(args),
        } => cmd_flow_sweep(args, out),
        Command::Verify(args) => cmd_verify(args, out),
        Command::Sigma(args) => cmd_sigma(args.k_curv, out),
    }
}

fn emit<T: Serialize + ?Sized>(value: &T, path: Option<&Path>, out: &mut dyn Write) -> Result<(), Failure> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| Failure::Io(format!("cannot create {}: {e}", p.display())))?;
            let mut w = BufWriter::new(file);
            report::write_json(value, &mut w).map_err(|e| Failure::Io(e.to_string()))?;
            w.flush().map_err(|e| Failure::Io(e.to_string()))
        }
        None => report::write_json(value, out).map_err(|e| Failure::Io(e.to_string())),
    }
}

/// One row of `catalog list`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatalogEntry {
    #[serde(flatten)]
    pub model: ModelKind,
    pub ambient: AmbientKind,
    pub ambient_dim: usize,
    pub theta_max: f64,
    #[serde(rename = "D0")]
    pub d0: usize,
    #[serde(rename = "D1")]
    pub d1: Option<usize>,
    pub minimal_theta: Option<f64>,
}

impl CatalogEntry {
    pub fn new(model: &FoliationModel) -> Self {
        Self {
            model: model.kind(),
            ambient: model.ambient().kind,
            ambient_dim: model.ambient().dim,
            theta_max: model.theta_max(),
            d0: model.lower_endpoint().dimension_drop,
            d1: model.upper_endpoint().map(|e| e.dimension_drop),
            minimal_theta: model.minimal_leaf(),
        }
    }

    fn field(&self, key: &str) -> Option<String> {
        let (n, k, g, m0, m1) = match self.model {
            ModelKind::ConcentricSpheres { n } => (Some(n), None, None, None, None),
            ModelKind::SphericalCylinders { k, n } => (Some(n), Some(k), None, None, None),
            ModelKind::IsoparametricSphere { g, m0, m1 } => (None, None, Some(g), Some(m0), Some(m1)),
        };
        let kind = match self.model {
            ModelKind::ConcentricSpheres { .. } => "concentric_spheres",
            ModelKind::SphericalCylinders { .. } => "spherical_cylinders",
            ModelKind::IsoparametricSphere { .. } => "isoparametric_sphere",
        };
        let ambient = match self.ambient {
            AmbientKind::Euclidean => "euclidean",
            AmbientKind::UnitSphere => "unit_sphere",
        };
        match key {
            "kind" => Some(kind.into()),
            "ambient" => Some(ambient.into()),
            "ambient_dim" => Some(self.ambient_dim.to_string()),
            "n" => n.map(|v| v.to_string()),
            "k" => k.map(|v| v.to_string()),
            "g" => g.map(|v| v.to_string()),
            "m0" => m0.map(|v| v.to_string()),
            "m1" => m1.map(|v| v.to_string()),
            "D0" => Some(self.d0.to_string()),
            "D1" => self.d1.map(|v| v.to_string()),
            _ => None,
        }
    }
}

const FILTER_KEYS: [&str; 10] = ["kind", "ambient", "ambient_dim", "n", "k", "g", "m0", "m1", "D0", "D1"];

fn parse_filter(raw: &str) -> Result<(String, String), Failure> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| usage(format!("malformed filter `{raw}`; expected KEY=VALUE")))?;
    if !FILTER_KEYS.contains(&key) {
        return Err(usage(format!(
            "unknown filter key `{key}`; expected one of {}",
            FILTER_KEYS.join(", ")
        )));
    }
    if value.is_empty() {
        return Err(usage(format!("filter `{raw}` has an empty value")));
    }
    let numeric = !matches!(key, "kind" | "ambient");
    if numeric && value.parse::<usize>().is_err() {
        return Err(usage(format!("filter `{key}` needs a non-negative integer, got `{value}`")));
    }
    Ok((key.to_string(), value.to_string()))
}

fn cmd_catalog_list(filters: &[String], out: &mut dyn Write) -> CmdResult {
    let filters = filters.iter().map(|f| parse_filter(f)).collect::<Result<Vec<_>, _>>()?;
    let entries: Vec<CatalogEntry> = catalog::standard_catalog()
        .iter()
        .map(CatalogEntry::new)
        .filter(|e| {
            filters.iter().all(|(k, v)| {
                let have = e.field(k);
                match k.as_str() {
                    "kind" | "ambient" => have.as_deref() == Some(v.as_str()),
                    _ => have.and_then(|h| h.parse::<usize>().ok()) == v.parse::<usize>().ok(),
                }
            })
        })
        .collect();
    emit(&entries, None, out)?;
    Ok(0)
}

fn resolve_model(args: &ModelArgs, base: Option<ModelKind>) -> Result<Option<FoliationModel>, Failure> {
    use ModelKind::*;
    let name = args.model.or(match base {
        Some(ConcentricSpheres { .. }) => Some(ModelName::Concentric),
        Some(SphericalCylinders { .. }) => Some(ModelName::Cylinders),
        Some(IsoparametricSphere { .. }) => Some(ModelName::SphereIso),
        None => None,
    });
    let Some(name) = name else {
        if args.n.is_some() || args.k.is_some() || args.g.is_some() || args.m0.is_some() || args.m1.is_some() {
            return Err(usage("model parameters given without --model"));
        }
        return Ok(None);
    };
    let same = |n: ModelName| if args.model.is_none() || args.model == Some(n) { base } else { None };
    let kind = match name {
        ModelName::Concentric => {
            if args.k.is_some() || args.g.is_some() || args.m0.is_some() || args.m1.is_some() {
                return Err(usage("--model concentric takes only --n"));
            }
            let base_n = match same(name) {
                Some(ConcentricSpheres { n }) => Some(n),
                _ => None,
            };
            ConcentricSpheres {
                n: args.n.or(base_n).ok_or_else(|| usage("--model concentric needs --n"))?,
            }
        }
        ModelName::Cylinders => {
            if args.g.is_some() || args.m0.is_some() || args.m1.is_some() {
                return Err(usage("--model cylinders takes only --k and --n"));
            }
            let (bk, bn) = match same(name) {
                Some(SphericalCylinders { k, n }) => (Some(k), Some(n)),
                _ => (None, None),
            };
            SphericalCylinders {
                k: args.k.or(bk).ok_or_else(|| usage("--model cylinders needs --k"))?,
                n: args.n.or(bn).ok_or_else(|| usage("--model cylinders needs --n"))?,
            }
        }
        ModelName::SphereIso => {
            if args.n.is_some() || args.k.is_some() {
                return Err(usage("--model sphere-iso takes only --g, --m0 and --m1"));
            }
            let (bg, bm0, bm1) = match same(name) {
                Some(IsoparametricSphere { g, m0, m1 }) => (Some(g), Some(m0), Some(m1)),
                _ => (None, None, None),
            };
            let g = args.g.or(bg).ok_or_else(|| usage("--model sphere-iso needs --g"))?;
            let m0 = args.m0.or(bm0).unwrap_or(1);
            let m1 = args.m1.or(if args.m0.is_some() { None } else { bm1 }).unwrap_or(m0);
            IsoparametricSphere { g, m0, m1 }
        }
    };
    FoliationModel::from_kind(kind).map(Some).map_err(|e| usage(e.to_string()))
}

fn require_model(args: &ModelArgs, base: Option<ModelKind>) -> Result<FoliationModel, Failure> {
    resolve_model(args, base)?.ok_or_else(|| usage("no model given; use --model or a config file"))
}

fn resolve_options(args: &OptionArgs, base: FlowOptions) -> Result<FlowOptions, Failure> {
    let mut o = base;
    if let Some(v) = args.rel_tol {
        o.rel_tol = v;
    }
    if let Some(v) = args.abs_tol {
        o.abs_tol = v;
    }
    if let Some(v) = args.theta_stop {
        o.theta_stop = Some(v);
    }
    if let Some(v) = args.t_max {
        o.t_max = v;
    }
    if let Some(v) = args.sample_stride {
        o.sample_stride = v;
    }
    if let Some(v) = args.target_samples {
        o.target_samples = v;
    }
    if let Some(v) = args.step_ratio {
        o.step_ratio = v;
    }
    o.validate().map_err(|e| usage(e.to_string()))?;
    Ok(o)
}

fn resolve_grid(flag: Option<usize>, base: Option<usize>) -> Result<usize, Failure> {
    let grid = flag.or(base).unwrap_or(50);
    if grid == 0 || grid > MAX_GRID {
        return Err(usage(format!("grid must lie in [1, {MAX_GRID}], got {grid}")));
    }
    Ok(grid)
}

fn resolve_epsilon(flag: Option<f64>, base: Option<f64>) -> Result<f64, Failure> {
    let eps = flag.or(base).unwrap_or(0.1);
    if !(eps.is_finite() && eps > 0.0) {
        return Err(usage(format!("epsilon must be positive and finite, got {eps}")));
    }
    Ok(eps)
}

fn resolve_k(flag: Option<f64>, base: Option<f64>) -> Result<f64, Failure> {
    let k = flag.or(base).unwrap_or(1.0);
    if !(k.is_finite() && k >= 0.0) {
        return Err(usage(format!("K must be non-negative and finite, got {k}")));
    }
    Ok(k)
}

fn parse_start(raw: Option<&str>, base: Option<Start>) -> Result<Option<Start>, Failure> {
    match raw {
        None => Ok(base),
        Some("sweep") => Ok(Some(Start::Sweep(SweepKeyword::Sweep))),
        Some(s) => s
            .parse::<f64>()
            .map(|v| Some(Start::Theta(v)))
            .map_err(|_| usage(format!("--theta0 must be a number or `sweep`, got `{s}`"))),
    }
}

/// Report written when the flow itself cannot be integrated.
#[derive(Debug, Serialize)]
struct FailedRun {
    model: ModelKind,
    theta0: f64,
    tool_version: &'static str,
    seed: u64,
    error: &'static str,
    detail: String,
}

fn cmd_flow_run(args: RunArgs, out: &mut dyn Write, _err: &mut dyn Write) -> CmdResult {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let model = require_model(&args.model, cfg.model)?;
    let options = resolve_options(&args.options, cfg.options)?;
    let epsilon = resolve_epsilon(args.epsilon, cfg.epsilon)?;
    let k = resolve_k(args.k_curv, cfg.k)?;
    let seed = args.seed.or(cfg.seed).unwrap_or(verify::DEFAULT_SEED);
    let report_path = args.report_json.or(cfg.report_json);
    let csv_path = args.trace_csv.or(cfg.trace_csv);
    let mut checks = if args.checks.is_empty() { cfg.checks.unwrap_or_default() } else { args.checks };
    checks.sort();
    checks.dedup();

    let theta0 = match parse_start(args.theta0.as_deref(), cfg.theta0)? {
        None => return Err(usage("no starting point given; use --theta0")),
        Some(Start::Sweep(_)) => {
            let grid = resolve_grid(args.grid, cfg.grid)?;
            return sweep(&model, grid, &options, report_path.as_deref(), out);
        }
        Some(Start::Theta(t)) => t,
    };
    model.check_theta(theta0).map_err(|e| usage(e.to_string()))?;
    if !model.is_sphere() && theta0 > flow::MAX_FLAT_THETA {
        return Err(usage(format!("theta0 must not exceed {:e}", flow::MAX_FLAT_THETA)));
    }

    let trace = match flow::integrate(&model, theta0, &options) {
        Ok(t) => t,
        Err(e) => {
            let failed = FailedRun {
                model: model.kind(),
                theta0,
                tool_version: env!("CARGO_PKG_VERSION"),
                seed,
                error: DiagnosticsError::from(e.clone()).code(),
                detail: e.to_string(),
            };
            emit(&failed, report_path.as_deref(), out)?;
            return Ok(1);
        }
    };
    if let Some(p) = &csv_path {
        let file = File::create(p).map_err(|e| Failure::Io(format!("cannot create {}: {e}", p.display())))?;
        let mut w = BufWriter::new(file);
        flow::write_csv(&trace, &mut w).map_err(|e| Failure::Io(e.to_string()))?;
        w.flush().map_err(|e| Failure::Io(e.to_string()))?;
    }
    let mut rep = diagnostics::analyze(&trace, epsilon, &checks, Some(seed));
    model_checks(&mut rep, &model, &checks, k, seed);
    emit(&rep, report_path.as_deref(), out)?;
    Ok(if rep.all_passed() { 0 } else { 1 })
}

fn comparison_code(e: &ComparisonError) -> &'static str {
    match e {
        ComparisonError::NotApplicable(_) => "not_applicable",
        ComparisonError::NegativeK(_) | ComparisonError::Catalog(_) => "invalid_input",
        _ => "comparison_failed",
    }
}

/// Checks that depend only on the model, not on the trace.
fn model_checks(rep: &mut diagnostics::SingularityReport, model: &FoliationModel, checks: &[Check], k: f64, seed: u64) {
    if checks.contains(&Check::Volume) {
        match comparison::volume_local_max_check(model) {
            Ok(c) => {
                rep.volume_margin = Some(c.margin);
                rep.passed.insert(Check::Volume.name().into(), c.passed);
            }
            Err(e) => rep.fail_with_code(Check::Volume, comparison_code(&e)),
        }
    }
    if checks.contains(&Check::Sigma) {
        match comparison::focal_strata_check(model, k) {
            Ok(c) => {
                rep.focal_ratio = Some(c.worst_ratio);
                rep.passed.insert(Check::Sigma.name().into(), c.passed);
            }
            Err(e) => rep.fail_with_code(Check::Sigma, comparison_code(&e)),
        }
    }
    if checks.contains(&Check::Extrinsic) {
        match extrinsic::level_set_for(*model) {
            None => rep.fail_with_code(Check::Extrinsic, "not_applicable"),
            Some(f) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                match verify::oracle_agreement(f.as_ref(), model, EXTRINSIC_SAMPLES, &mut rng) {
                    Ok(w) => {
                        rep.oracle_defect = Some(w);
                        rep.passed.insert(Check::Extrinsic.name().into(), w <= EXTRINSIC_TOLERANCE);
                    }
                    Err(_) => rep.fail_with_code(Check::Extrinsic, "extrinsic_failed"),
                }
            }
        }
    }
}

#[derive(Debug, Serialize)]
struct SweepReport {
    model: ModelKind,
    grid: usize,
    tool_version: &'static str,
    all_finite: bool,
    offending: Vec<f64>,
    rows: Vec<diagnostics::SweepRow>,
}

fn sweep(
    model: &FoliationModel,
    grid: usize,
    options: &FlowOptions,
    report_path: Option<&Path>,
    out: &mut dyn Write,
) -> CmdResult {
    let result = diagnostics::finite_time_sweep(model, grid, options).map_err(|e| usage(e.to_string()))?;
    let rep = SweepReport {
        model: model.kind(),
        grid,
        tool_version: env!("CARGO_PKG_VERSION"),
        all_finite: result.all_finite,
        offending: result.offending,
        rows: result.rows,
    };
    emit(&rep, report_path, out)?;
    Ok(if rep.all_finite { 0 } else { 1 })
}

fn cmd_flow_sweep(args: SweepArgs, out: &mut dyn Write) -> CmdResult {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let model = require_model(&args.model, cfg.model)?;
    let options = resolve_options(&args.options, cfg.options)?;
    let grid = resolve_grid(args.grid, cfg.grid)?;
    let path = args.report_json.or(cfg.report_json);
    sweep(&model, grid, &options, path.as_deref(), out)
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    tool_version: &'static str,
    seed: u64,
    passed: bool,
    suites: Vec<verify::SuiteOutcome>,
}

fn cmd_verify(args: VerifyArgs, out: &mut dyn Write) -> CmdResult {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let mut choices = args.suites.clone();
    if choices.is_empty() {
        for name in cfg.suites.clone().unwrap_or_default() {
            choices.push(parse_suite(&name).map_err(Failure::Usage)?);
        }
    }
    let suites: Vec<Suite> = if choices.is_empty() || choices.contains(&SuiteChoice::All) {
        Suite::ALL.to_vec()
    } else {
        Suite::ALL
            .into_iter()
            .filter(|s| choices.contains(&SuiteChoice::One(*s)))
            .collect()
    };
    let ctx = SuiteContext {
        models: resolve_model(&args.model, cfg.model)?.map(|m| vec![m]),
        k: resolve_k(args.k_curv, cfg.k)?,
        seed: args.seed.or(cfg.seed).unwrap_or(verify::DEFAULT_SEED),
        sweep_grid: resolve_grid(args.grid, cfg.grid)?,
        options: resolve_options(&args.options, cfg.options)?,
        epsilon: resolve_epsilon(args.epsilon, cfg.epsilon)?,
    };
    let outcomes: Vec<_> = suites.iter().map(|&s| verify::run_suite(s, &ctx)).collect();
    let rep = VerifyReport {
        tool_version: env!("CARGO_PKG_VERSION"),
        seed: ctx.seed,
        passed: outcomes.iter().all(|o| o.passed),
        suites: outcomes,
    };
    let path = args.report_json.or(cfg.report_json);
    emit(&rep, path.as_deref(), out)?;
    Ok(if rep.passed { 0 } else { 1 })
}

fn cmd_sigma(k: f64, out: &mut dyn Write) -> CmdResult {
    if !(k.is_finite() && k >= 0.0) {
        return Err(usage(format!("K must be non-negative and finite, got {k}")));
    }
    match comparison::sigma_lower_bound(k) {
        Ok(res) => {
            emit(&res, None, out)?;
            Ok(0)
        }
        Err(e) => Err(Failure::Io(e.to_string())),
    }
}
