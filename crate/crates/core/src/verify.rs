//! Verification suites: each runs one family of invariants over a set of
//! models and reports per-case outcomes. The command-line `verify` command
//! is a thin wrapper around [`run_suite`].

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::{self, AmbientKind, FoliationModel, ShapeSpectrum};
use crate::comparison::{self, JacobiComparison};
use crate::diagnostics::{self, BoundCertificate};
use crate::extrinsic::{self, FiniteDifference, LevelSetFunction};
use crate::flow::{self, FlowOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Bounds,
    Extrinsic,
    Gradient,
    Volume,
    Sweep,
    Sigma,
    Type1,
    Rate,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Bounds,
        Suite::Extrinsic,
        Suite::Gradient,
        Suite::Volume,
        Suite::Sweep,
        Suite::Sigma,
        Suite::Type1,
        Suite::Rate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Bounds => "bounds",
            Suite::Extrinsic => "extrinsic",
            Suite::Gradient => "gradient",
            Suite::Volume => "volume",
            Suite::Sweep => "sweep",
            Suite::Sigma => "sigma",
            Suite::Type1 => "type1",
            Suite::Rate => "rate",
        }
    }

    pub fn parse(s: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|x| x.name() == s)
    }

    /// Models a suite runs on when none is named.
    pub fn default_models(self) -> Vec<FoliationModel> {
        match self {
            Suite::Sweep | Suite::Volume | Suite::Type1 | Suite::Rate => catalog::sphere_catalog(),
            _ => catalog::standard_catalog(),
        }
    }
}

/// Shared inputs of all suites.
#[derive(Debug, Clone)]
pub struct SuiteContext {
    pub models: Option<Vec<FoliationModel>>,
    /// Curvature constant for the `σ` checks.
    pub k: f64,
    pub seed: u64,
    pub sweep_grid: usize,
    pub options: FlowOptions,
    /// Tube radius for rate certificates.
    pub epsilon: f64,
}

impl Default for SuiteContext {
    fn default() -> Self {
        Self {
            models: None,
            k: 1.0,
            seed: DEFAULT_SEED,
            sweep_grid: 50,
            options: FlowOptions::default(),
            epsilon: 0.1,
        }
    }
}

/// Seed used for all randomized sampling unless overridden.
pub const DEFAULT_SEED: u64 = 20_240_601;

/// Tube radii of the certificate ladder.
pub const EPSILON_LADDER: [f64; 4] = [0.3, 0.1, 0.03, 0.01];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteEntry {
    pub model: Option<String>,
    pub case: String,
    pub passed: bool,
    pub value: Option<f64>,
    pub detail: Option<String>,
}

impl SuiteEntry {
    fn new(model: Option<&FoliationModel>, case: impl Into<String>, passed: bool) -> Self {
        Self {
            model: model.map(|m| m.to_string()),
            case: case.into(),
            passed,
            value: None,
            detail: None,
        }
    }

    fn value(mut self, v: f64) -> Self {
        self.value = Some(v);
        self
    }

    fn detail(mut self, d: impl Into<String>) -> Self {
        self.detail = Some(d.into());
        self
    }

    fn failure(model: Option<&FoliationModel>, case: impl Into<String>, err: impl ToString) -> Self {
        Self::new(model, case, false).detail(err.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteOutcome {
    pub suite: Suite,
    pub passed: bool,
    pub entries: Vec<SuiteEntry>,
}

pub fn run_suite(suite: Suite, ctx: &SuiteContext) -> SuiteOutcome {
    let models = ctx.models.clone().unwrap_or_else(|| suite.default_models());
    let entries = match suite {
        Suite::Bounds => bounds_suite(&models),
        Suite::Extrinsic => extrinsic_suite(&models, ctx),
        Suite::Gradient => gradient_suite(&models, ctx),
        Suite::Volume => volume_suite(&models, ctx),
        Suite::Sweep => sweep_suite(&models, ctx),
        Suite::Sigma => sigma_suite(&models, ctx),
        Suite::Type1 => type1_suite(&models, ctx),
        Suite::Rate => rate_suite(&models, ctx),
    };
    SuiteOutcome {
        suite,
        passed: !entries.is_empty() && entries.iter().all(|e| e.passed),
        entries,
    }
}

fn endpoints(model: &FoliationModel) -> Vec<catalog::SingularEndpoint> {
    [Some(model.lower_endpoint()), model.upper_endpoint()]
        .into_iter()
        .flatten()
        .collect()
}

/// Certificate ladder for one endpoint: all fits succeed, `δ` and `c` do not
/// grow as `ε` shrinks, `δ(0.01) ≤ 0.01`, and flat models are exact.
pub fn certificate_ladder(
    model: &FoliationModel,
    endpoint: &catalog::SingularEndpoint,
) -> Result<Vec<BoundCertificate>, String> {
    let mut out: Vec<BoundCertificate> = Vec::new();
    for eps in EPSILON_LADDER {
        let cert = diagnostics::fit_bound_certificate(model, endpoint, eps).map_err(|e| e.to_string())?;
        if let Some(prev) = out.last() {
            if cert.delta > prev.delta || cert.c > prev.c {
                return Err(format!("constants grew from ε = {} to ε = {eps}", prev.epsilon));
            }
        }
        if !model.is_sphere() && (cert.delta != 0.0 || cert.c != 0.0) {
            return Err(format!("flat model certificate is not exact at ε = {eps}"));
        }
        out.push(cert);
    }
    let last = out.last().expect("non-empty ladder");
    if last.delta > 0.01 {
        return Err(format!("δ(0.01) = {} exceeds 0.01", last.delta));
    }
    Ok(out)
}

fn bounds_suite(models: &[FoliationModel]) -> Vec<SuiteEntry> {
    let mut out = Vec::new();
    for model in models {
        for ep in endpoints(model) {
            let case = format!("ladder at θ = {}", ep.coordinate);
            out.push(match certificate_ladder(model, &ep) {
                Ok(ladder) => SuiteEntry::new(Some(model), case, true)
                    .value(ladder.last().expect("non-empty").delta),
                Err(e) => SuiteEntry::failure(Some(model), case, e),
            });
        }
    }
    out
}

/// Random interior quotient coordinate.
fn random_theta<R: Rng>(model: &FoliationModel, rng: &mut R) -> f64 {
    if model.is_sphere() {
        model.theta_max() * rng.random_range(0.05..0.95)
    } else {
        rng.random_range(0.1..3.0)
    }
}

/// Largest `|tr A_{∇r}(x) − tr A(θ(x))|` between the level-set oracle and
/// the catalog over `samples` random leaf points.
pub fn oracle_agreement<L: LevelSetFunction + ?Sized>(
    f: &L,
    model: &FoliationModel,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let theta = random_theta(model, rng);
        let x = extrinsic::sample_leaf_point(f, theta, rng).map_err(|e| e.to_string())?;
        let got = extrinsic::trace_radial(f, &x).map_err(|e| e.to_string())?;
        let expected = model.mean_curvature_trace(theta).map_err(|e| e.to_string())?;
        worst = worst.max((got - expected).abs());
    }
    Ok(worst)
}

/// Largest deviation between the quotient coordinate of a particle moved by
/// its mean curvature vector and the reduced flow, up to `fraction` of the
/// singular time.
pub fn particle_agreement(
    model: &FoliationModel,
    theta0: f64,
    fraction: f64,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64, String> {
    let f = extrinsic::level_set_for(*model).ok_or("no level-set realization")?;
    let opts = FlowOptions::default();
    let trace = flow::integrate(model, theta0, &opts).map_err(|e| e.to_string())?;
    let t_end = fraction * flow::singular_time(&trace).map_err(|e| e.to_string())?.t;
    let x0 = extrinsic::sample_leaf_point(f.as_ref(), theta0, rng).map_err(|e| e.to_string())?;
    let path = extrinsic::particle_mcf_flow(f.as_ref(), &x0, t_end, t_end / steps as f64)
        .map_err(|e| e.to_string())?;
    if path.termination != extrinsic::ParticleTermination::Completed {
        return Err(format!("particle stopped early: {:?}", path.termination));
    }
    let stride = (path.times.len() / 50).max(1);
    let picks: Vec<usize> = (0..path.times.len()).step_by(stride).chain([path.times.len() - 1]).collect();
    let times: Vec<f64> = picks.iter().map(|&i| path.times[i]).collect();
    let reduced = flow::theta_at(model, theta0, &times, &opts).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (&i, th) in picks.iter().zip(reduced) {
        let x: &DVector<f64> = &path.points[i];
        let got = f.quotient_coordinate(x).ok_or("no chart")?;
        worst = worst.max((got - th).abs());
    }
    Ok(worst)
}

/// Interior starting points for per-model flow checks.
pub fn start_grid(model: &FoliationModel, count: usize) -> Vec<f64> {
    if model.is_sphere() {
        diagnostics::sweep_grid(model, count)
    } else {
        (1..=count).map(|i| 0.25 * i as f64).collect()
    }
}

fn extrinsic_suite(models: &[FoliationModel], ctx: &SuiteContext) -> Vec<SuiteEntry> {
    let mut out = Vec::new();
    for model in models {
        let Some(f) = extrinsic::level_set_for(*model) else {
            continue;
        };
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
        let dim = model.ambient().embedding_dim();
        let points: Vec<DVector<f64>> = (0..20)
            .map(|_| {
                let v = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
                if model.is_sphere() {
                    v.normalize()
                } else {
                    v
                }
            })
            .collect();
        let self_test = extrinsic::derivative_self_test(f.as_ref(), &points);
        out.push(SuiteEntry::new(Some(model), "derivative self-test", self_test <= 1e-5).value(self_test));

        out.push(match oracle_agreement(f.as_ref(), model, 200, &mut rng) {
            Ok(w) => SuiteEntry::new(Some(model), "oracle (analytic Hessian)", w <= 1e-6).value(w),
            Err(e) => SuiteEntry::failure(Some(model), "oracle (analytic Hessian)", e),
        });
        let fd = FiniteDifference::new(BoxedLevelSet(f.as_ref()));
        out.push(match oracle_agreement(&fd, model, 200, &mut rng) {
            Ok(w) => SuiteEntry::new(Some(model), "oracle (finite-difference Hessian)", w <= 1e-4).value(w),
            Err(e) => SuiteEntry::failure(Some(model), "oracle (finite-difference Hessian)", e),
        });

        let starts = start_grid(model, 10);
        let results: Vec<_> = starts
            .par_iter()
            .map(|&theta0| {
                let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ theta0.to_bits());
                (theta0, particle_agreement(model, theta0, 0.9, 4000, &mut rng))
            })
            .collect();
        for (theta0, res) in results {
            let case = format!("particle flow from θ0 = {theta0}");
            out.push(match res {
                Ok(w) => SuiteEntry::new(Some(model), case, w <= 1e-6).value(w),
                Err(e) => SuiteEntry::failure(Some(model), case, e),
            });
        }
    }
    if out.is_empty() {
        out.push(SuiteEntry::failure(None, "level-set realization", "no selected model has one"));
    }
    out
}

/// Borrowed trait object usable where a sized level-set function is needed.
struct BoxedLevelSet<'a>(&'a dyn LevelSetFunction);

impl LevelSetFunction for BoxedLevelSet<'_> {
    fn ambient(&self) -> catalog::AmbientSpace {
        self.0.ambient()
    }
    fn evaluate(&self, x: &DVector<f64>) -> f64 {
        self.0.evaluate(x)
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.0.gradient(x)
    }
    fn hessian(&self, x: &DVector<f64>) -> nalgebra::DMatrix<f64> {
        self.0.hessian(x)
    }
    fn orientation(&self) -> f64 {
        self.0.orientation()
    }
    fn model(&self) -> Option<FoliationModel> {
        self.0.model()
    }
    fn quotient_coordinate(&self, x: &DVector<f64>) -> Option<f64> {
        self.0.quotient_coordinate(x)
    }
}

fn gradient_suite(models: &[FoliationModel], ctx: &SuiteContext) -> Vec<SuiteEntry> {
    let jobs: Vec<(FoliationModel, f64)> = models
        .iter()
        .flat_map(|m| start_grid(m, 3).into_iter().map(move |t| (*m, t)))
        .collect();
    let mut out: Vec<SuiteEntry> = jobs
        .par_iter()
        .map(|(model, theta0)| {
            let case = format!("flow from θ0 = {theta0}");
            let trace = match flow::integrate(model, *theta0, &ctx.options) {
                Ok(t) => t,
                Err(e) => return SuiteEntry::failure(Some(model), case, e),
            };
            if trace.samples.len() < 10_000 {
                return SuiteEntry::failure(
                    Some(model),
                    case,
                    format!("{} samples, need at least 10000", trace.samples.len()),
                );
            }
            match diagnostics::gradient_flow_check(model, &trace) {
                Ok(res) => SuiteEntry::new(Some(model), case, res <= diagnostics::GRADIENT_TOLERANCE).value(res),
                Err(e) => SuiteEntry::failure(Some(model), case, e),
            }
        })
        .collect();
    for model in models {
        out.push(catalog_identity_entry(model));
    }
    out
}

/// `tr A_{∂θ} = −d/dθ log V` from the spectrum and the volume product
/// formula, on a grid.
pub fn catalog_identity_defect(model: &FoliationModel) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for theta in start_grid(model, 200) {
        let tr = model.mean_curvature_trace(theta).map_err(|e| e.to_string())?;
        let grad = model.log_volume_gradient(theta).map_err(|e| e.to_string())?;
        worst = worst.max((tr + grad).abs() / grad.abs().max(1.0));
    }
    Ok(worst)
}

fn catalog_identity_entry(model: &FoliationModel) -> SuiteEntry {
    match catalog_identity_defect(model) {
        Ok(d) => SuiteEntry::new(Some(model), "catalog identity", d <= 1e-10).value(d),
        Err(e) => SuiteEntry::failure(Some(model), "catalog identity", e),
    }
}

/// Random spectra with `s_max ≥ 1`: all eigenvalues at most `1`.
pub fn random_spectrum(rng: &mut ChaCha8Rng) -> ShapeSpectrum {
    let n = rng.random_range(1..=5);
    let pairs = (0..n)
        .map(|_| (rng.random_range(-3.0..1.0), rng.random_range(1..=4usize)))
        .collect();
    ShapeSpectrum::new(pairs, AmbientKind::UnitSphere)
}

/// Worst log-scale disagreement between the product and Riccati forms of
/// `j̄` over random spectra and random `s ∈ [0, 0.999]`.
pub fn riccati_product_defect(count: usize, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let cmp = JacobiComparison::new(random_spectrum(&mut rng));
        let s = rng.random_range(0.0..0.999);
        let p = cmp.jbar_product(s).map_err(|e| e.to_string())?;
        let r = cmp.log_jbar_riccati(s).map_err(|e| e.to_string())?;
        worst = worst.max((p.ln() - r).abs());
    }
    Ok(worst)
}

fn volume_suite(models: &[FoliationModel], ctx: &SuiteContext) -> Vec<SuiteEntry> {
    let mut out = Vec::new();
    for model in models {
        out.push(match comparison::volume_local_max_check(model) {
            Ok(c) => SuiteEntry::new(Some(model), "j ≤ j̄ ≤ 1 at the minimal leaf", c.passed).value(c.margin),
            Err(e) => SuiteEntry::failure(Some(model), "j ≤ j̄ ≤ 1 at the minimal leaf", e),
        });
    }
    out.push(match riccati_product_defect(100, ctx.seed) {
        Ok(d) => SuiteEntry::new(None, "Riccati vs product on 100 spectra", d <= comparison::AGREEMENT).value(d),
        Err(e) => SuiteEntry::failure(None, "Riccati vs product on 100 spectra", e),
    });
    out
}

fn sweep_suite(models: &[FoliationModel], ctx: &SuiteContext) -> Vec<SuiteEntry> {
    let mut out = Vec::new();
    for model in models {
        let case = format!("grid of {}", ctx.sweep_grid);
        let sweep = match diagnostics::finite_time_sweep(model, ctx.sweep_grid, &ctx.options) {
            Ok(s) => s,
            Err(e) => {
                out.push(SuiteEntry::failure(Some(model), case, e));
                continue;
            }
        };
        let mut entry = SuiteEntry::new(Some(model), case, sweep.all_finite);
        if !sweep.all_finite {
            entry = entry.detail(format!("offending θ0: {:?}", sweep.offending));
        }
        out.push(entry);
        if flow::closed_form_singular_time(model, model.theta_max() / 3.0).is_ok() {
            let worst = sweep
                .rows
                .iter()
                .filter_map(|r| {
                    let exact = flow::closed_form_singular_time(model, r.theta0).ok()?;
                    Some((r.singular_time.unwrap_or(f64::INFINITY) - exact).abs())
                })
                .fold(0.0, f64::max);
            out.push(SuiteEntry::new(Some(model), "T(θ0) against closed form", worst <= 1e-6).value(worst));
        }
    }
    out
}

/// Curvature constants whose `σ` is checked against the closed form.
pub const SIGMA_LADDER: [f64; 6] = [0.0, 0.1, 0.25, 0.3, 1.25, 10.0];

fn sigma_suite(models: &[FoliationModel], ctx: &SuiteContext) -> Vec<SuiteEntry> {
    let mut out = Vec::new();
    let expected = -(-std::f64::consts::PI).exp_m1();
    out.push(match comparison::sigma_lower_bound(1.25) {
        Ok(r) => {
            let d = (r.sigma - expected).abs();
            SuiteEntry::new(None, "σ(1.25) = 1 − e^−π", d <= 1e-9).value(r.sigma)
        }
        Err(e) => SuiteEntry::failure(None, "σ(1.25) = 1 − e^−π", e),
    });
    for k in SIGMA_LADDER {
        let case = format!("closed form and integration agree at K = {k}");
        out.push(match comparison::sigma_lower_bound(k) {
            Ok(r) => {
                let ok = if k <= 0.25 { r.sigma == 1.0 && r.first_zero.is_none() } else { r.first_zero.is_some() };
                SuiteEntry::new(None, case, ok).value(r.sigma)
            }
            Err(e) => SuiteEntry::failure(None, case, e),
        });
    }
    for model in models {
        let case = format!("focal/strata ratio at K = {}", ctx.k);
        out.push(match comparison::focal_strata_check(model, ctx.k) {
            Ok(c) => SuiteEntry::new(Some(model), case, c.passed && (c.worst_ratio - 1.0).abs() <= 1e-12)
                .value(c.worst_ratio),
            Err(e) => SuiteEntry::failure(Some(model), case, e),
        });
    }
    out
}

/// Outcome of one singular flow with its type-I and rate analyses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularRun {
    pub theta0: f64,
    pub singular_time: f64,
    pub dimension_drop: usize,
    pub type1: diagnostics::Type1Statistic,
    pub rate: diagnostics::RateWindow,
    pub pairwise: diagnostics::PairwiseRateCheck,
    pub certificate: BoundCertificate,
}

/// Flow from `θ0` and run the type-I and rate analyses with a certificate at
/// `epsilon`.
pub fn singular_run(
    model: &FoliationModel,
    theta0: f64,
    opts: &FlowOptions,
    epsilon: f64,
) -> Result<SingularRun, String> {
    let trace = flow::integrate(model, theta0, opts).map_err(|e| e.to_string())?;
    let t = flow::singular_time(&trace).map_err(|e| e.to_string())?.t;
    let endpoint = diagnostics::limit_leaf(&trace).map_err(|e| e.to_string())?;
    let type1 = diagnostics::type1_statistic(&trace, t).map_err(|e| e.to_string())?;
    let certificate = diagnostics::fit_bound_certificate(model, &endpoint, epsilon).map_err(|e| e.to_string())?;
    let rate = diagnostics::rate_window(&trace, t, &certificate).map_err(|e| e.to_string())?;
    let pairwise = diagnostics::pairwise_rate_check(&trace, &certificate, diagnostics::PAIRWISE_SLACK);
    Ok(SingularRun {
        theta0,
        singular_time: t,
        dimension_drop: endpoint.dimension_drop,
        type1,
        rate,
        pairwise,
        certificate,
    })
}

fn singular_runs(models: &[FoliationModel], ctx: &SuiteContext) -> Vec<(FoliationModel, f64, Result<SingularRun, String>)> {
    let jobs: Vec<(FoliationModel, f64)> = models
        .iter()
        .flat_map(|m| start_grid(m, 10).into_iter().map(move |t| (*m, t)))
        .collect();
    jobs.into_par_iter()
        .map(|(m, t)| {
            let res = singular_run(&m, t, &ctx.options, ctx.epsilon);
            (m, t, res)
        })
        .collect()
}

fn type1_suite(models: &[FoliationModel], ctx: &SuiteContext) -> Vec<SuiteEntry> {
    singular_runs(models, ctx)
        .into_iter()
        .map(|(model, theta0, res)| {
            let case = format!("type-I limit from θ0 = {theta0}");
            match res {
                Ok(run) => {
                    let predicted = 0.5 / run.dimension_drop as f64;
                    let ok = (run.type1.limit / predicted - 1.0).abs() <= diagnostics::TYPE1_TOLERANCE;
                    SuiteEntry::new(Some(&model), case, ok).value(run.type1.limit)
                }
                Err(e) => SuiteEntry::failure(Some(&model), case, e),
            }
        })
        .collect()
}

fn rate_suite(models: &[FoliationModel], ctx: &SuiteContext) -> Vec<SuiteEntry> {
    singular_runs(models, ctx)
        .into_iter()
        .map(|(model, theta0, res)| {
            let case = format!("rate window from θ0 = {theta0}");
            match res {
                Ok(run) => SuiteEntry::new(Some(&model), case, run.rate.within_bounds && run.pairwise.passed)
                    .value(run.pairwise.worst_violation),
                Err(e) => SuiteEntry::failure(Some(&model), case, e),
            }
        })
        .collect()
}
