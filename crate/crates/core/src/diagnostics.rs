//! Analyses of flow traces: singularity rates, two-sided distance bounds,
//! trace-bound certificates, limit-leaf classification and the gradient-flow
//! identities of the log-volume functional.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{CatalogError, FoliationModel, ModelKind, SingularEndpoint};
use crate::flow::{self, FlowError, FlowOptions, FlowTrace, Termination};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("singular time {t} does not exceed the last sample time {last}")]
    InconsistentSingularTime { t: f64, last: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no certificate at ε = {epsilon}; largest feasible ε found is {max_feasible}")]
    Infeasible { epsilon: f64, max_feasible: f64 },
    #[error("endpoint at θ = {0} does not belong to the model")]
    UnknownEndpoint(f64),
    #[error("ε = {0} is not inside the quotient interval")]
    EpsilonOutOfRange(f64),
    #[error("could not classify the limit leaf: {0}")]
    Classification(String),
    #[error("not applicable: {0}")]
    NotApplicable(String),
}

impl DiagnosticsError {
    /// Short machine-readable tag for reports.
    pub fn code(&self) -> &'static str {
        match self {
            DiagnosticsError::Flow(FlowError::NotSingular(Termination::ConvergedToMinimal)) => {
                "converged_to_minimal"
            }
            DiagnosticsError::Flow(FlowError::NotSingular(_)) => "reached_t_max",
            DiagnosticsError::Flow(FlowError::StepUnderflow { .. }) => "step_underflow",
            DiagnosticsError::Flow(FlowError::InsufficientData { .. })
            | DiagnosticsError::InsufficientData(_) => "insufficient_data",
            DiagnosticsError::Flow(_) | DiagnosticsError::Catalog(_) => "invalid_input",
            DiagnosticsError::InconsistentSingularTime { .. } => "inconsistent_singular_time",
            DiagnosticsError::Infeasible { .. } => "certificate_infeasible",
            DiagnosticsError::UnknownEndpoint(_) | DiagnosticsError::EpsilonOutOfRange(_) => {
                "invalid_input"
            }
            DiagnosticsError::Classification(_) => "classification_failed",
            DiagnosticsError::NotApplicable(_) => "not_applicable",
        }
    }
}

/// Constants witnessing `−(1+δ)D/r − c ≤ tr A_{∇r} ≤ −(1−δ)D/r + c` on the
/// tube `r < ε` around a singular leaf, with the resulting rate constants
/// `C1² = 2((1−δ)D − cε)` and `C2² = 2((1+δ)D + cε)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCertificate {
    pub epsilon: f64,
    pub delta: f64,
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub endpoint: SingularEndpoint,
}

/// Number of log-spaced grid points on which certificates are checked.
pub const CERTIFICATE_GRID: usize = 1000;

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

struct CertificateFit {
    delta: f64,
    c: f64,
    c1_sq: f64,
}

/// Smallest `δ ∈ {0, 0.001, …, 0.999}` with `C1² > 0`, and its minimal `c`.
fn fit_constants(model: &FoliationModel, side: crate::catalog::Side, d: usize, epsilon: f64) -> Result<Option<CertificateFit>, CatalogError> {
    let lo = 1e-6 * model.interval_scale().unwrap_or(epsilon);
    let df = d as f64;
    // deviation from the leading term; exactly zero for the flat models
    let samples: Vec<(f64, f64)> = log_grid(lo.min(epsilon), epsilon, CERTIFICATE_GRID)
        .into_iter()
        .map(|r| Ok((r, model.radial_trace(side, r)? + df * r.recip())))
        .collect::<Result<_, CatalogError>>()?;
    for i in 0..1000 {
        let delta = i as f64 / 1000.0;
        let c = samples
            .iter()
            .map(|&(r, w)| w.abs() - delta * df * r.recip())
            .fold(0.0, f64::max);
        let c1_sq = 2.0 * ((1.0 - delta) * df - c * epsilon);
        if c1_sq > 0.0 {
            return Ok(Some(CertificateFit { delta, c, c1_sq }));
        }
    }
    Ok(None)
}

/// Fit the lexicographically smallest `(δ, c)` on a `1000`-point log grid
/// of `(r_stop, ε]` and derive `C1`, `C2`.
pub fn fit_bound_certificate(
    model: &FoliationModel,
    endpoint: &SingularEndpoint,
    epsilon: f64,
) -> Result<BoundCertificate, DiagnosticsError> {
    let side = model
        .side_of(endpoint)
        .ok_or(DiagnosticsError::UnknownEndpoint(endpoint.coordinate))?;
    if !(epsilon > 0.0 && epsilon < model.theta_max()) {
        return Err(DiagnosticsError::EpsilonOutOfRange(epsilon));
    }
    let d = endpoint.dimension_drop;
    match fit_constants(model, side, d, epsilon)? {
        Some(fit) => {
            let df = d as f64;
            Ok(BoundCertificate {
                epsilon,
                delta: fit.delta,
                c: fit.c,
                c1: fit.c1_sq.sqrt(),
                c2: (2.0 * ((1.0 + fit.delta) * df + fit.c * epsilon)).sqrt(),
                endpoint: *endpoint,
            })
        }
        None => {
            let (mut ok, mut bad) = (0.0, epsilon);
            for _ in 0..50 {
                let mid = 0.5 * (ok + bad);
                if mid <= 0.0 {
                    break;
                }
                if fit_constants(model, side, d, mid)?.is_some() {
                    ok = mid;
                } else {
                    bad = mid;
                }
            }
            Err(DiagnosticsError::Infeasible {
                epsilon,
                max_feasible: ok,
            })
        }
    }
}

/// Tube radius that defines where a flow has entered the singular regime.
pub const TAIL_TUBE: f64 = 0.1;

fn require_singular(trace: &FlowTrace) -> Result<(), DiagnosticsError> {
    if trace.termination != Termination::ReachedSingularSet {
        return Err(FlowError::NotSingular(trace.termination).into());
    }
    Ok(())
}

fn limit_endpoint_of(trace: &FlowTrace) -> Result<SingularEndpoint, DiagnosticsError> {
    trace
        .limit_side
        .and_then(|s| trace.model.endpoint(s))
        .ok_or_else(|| DiagnosticsError::Classification("trace has no limit side".into()))
}

/// Indices of the samples in the last decade of `T − t` before the stop:
/// `T − t ∈ [max(θ_stop²/(2D), 1e-8·T), 0.1·(T − t_enter)]`, where `t_enter`
/// is the first time with `r ≤ min(0.1, r0)`.
fn tail_range(trace: &FlowTrace, t_singular: f64) -> Result<(f64, f64, Vec<usize>), DiagnosticsError> {
    require_singular(trace)?;
    let last = trace.last().t;
    if t_singular.is_nan() || t_singular <= last {
        return Err(DiagnosticsError::InconsistentSingularTime { t: t_singular, last });
    }
    let d = limit_endpoint_of(trace)?.dimension_drop as f64;
    let r0 = trace.samples[0].r;
    let enter = trace
        .samples
        .iter()
        .find(|s| s.r <= TAIL_TUBE.min(r0))
        .ok_or_else(|| DiagnosticsError::InsufficientData("flow never entered the tube".into()))?;
    let s_hi = 0.1 * (t_singular - enter.t);
    let s_lo = (trace.theta_stop * trace.theta_stop / (2.0 * d)).max(1e-8 * t_singular);
    let idx: Vec<usize> = trace
        .samples
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            let rem = t_singular - s.t;
            rem >= s_lo && rem <= s_hi
        })
        .map(|(i, _)| i)
        .collect();
    if idx.len() < 3 {
        return Err(DiagnosticsError::InsufficientData(format!(
            "{} samples in the tail window",
            idx.len()
        )));
    }
    Ok((s_lo, s_hi, idx))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Type1Statistic {
    /// `max sup_A²·(T − t)` over the tail.
    pub stat: f64,
    /// Extrapolated value as `t → T`.
    pub limit: f64,
}

/// Type-I statistic `‖A‖∞²·(T − t)` over the tail, with a two-level
/// Richardson extrapolation in `s = T − t`.
pub fn type1_statistic(trace: &FlowTrace, t_singular: f64) -> Result<Type1Statistic, DiagnosticsError> {
    let (_, s_hi, idx) = tail_range(trace, t_singular)?;
    let q = |i: usize| {
        let s = &trace.samples[i];
        let rem = t_singular - s.t;
        (rem, s.sup_a * s.sup_a * rem)
    };
    let stat = idx.iter().map(|&i| q(i).1).fold(f64::NEG_INFINITY, f64::max);
    let nearest = |target: f64| {
        idx.iter()
            .copied()
            .min_by(|&a, &b| {
                let da = (q(a).0 / target).ln().abs();
                let db = (q(b).0 / target).ln().abs();
                da.total_cmp(&db)
            })
            .expect("non-empty tail")
    };
    let (s1, q1) = q(nearest(0.1 * s_hi));
    let (s2, q2) = q(nearest(0.05 * s_hi));
    let limit = if s1 != s2 {
        (s1 * q2 - s2 * q1) / (s1 - s2)
    } else {
        q1
    };
    if !stat.is_finite() || !limit.is_finite() {
        return Err(DiagnosticsError::InsufficientData("non-finite type-I statistic".into()));
    }
    Ok(Type1Statistic { stat, limit })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateWindow {
    pub c_low: f64,
    pub c_high: f64,
    pub within_bounds: bool,
}

/// Relative tolerance when comparing observed rates with certificate
/// constants.
pub const RATE_TOLERANCE: f64 = 1e-6;

/// Range of `r/√(T − t)` over the tail, compared with `[C1, C2]`.
pub fn rate_window(
    trace: &FlowTrace,
    t_singular: f64,
    cert: &BoundCertificate,
) -> Result<RateWindow, DiagnosticsError> {
    let (_, _, idx) = tail_range(trace, t_singular)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &i in &idx {
        let s = &trace.samples[i];
        if s.r > cert.epsilon {
            continue;
        }
        let ratio = s.r / (t_singular - s.t).sqrt();
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    if !lo.is_finite() {
        return Err(DiagnosticsError::InsufficientData("no tail samples inside the tube".into()));
    }
    Ok(RateWindow {
        c_low: lo,
        c_high: hi,
        within_bounds: cert.c1 <= lo * (1.0 + RATE_TOLERANCE) && hi <= cert.c2 * (1.0 + RATE_TOLERANCE),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairwiseRateCheck {
    pub samples_in_tube: usize,
    /// Largest violation of either inequality over all pairs (`≤ 0` when
    /// both hold exactly).
    pub worst_violation: f64,
    pub passed: bool,
}

/// `C1²(tⱼ − tᵢ) ≤ r²(tᵢ) − r²(tⱼ) ≤ C2²(tⱼ − tᵢ)` for every pair of samples
/// inside the tube. Equivalent to `r² + C1²t` non-increasing and
/// `r² + C2²t` non-decreasing, so a running min/max suffices.
pub fn pairwise_rate_check(trace: &FlowTrace, cert: &BoundCertificate, slack: f64) -> PairwiseRateCheck {
    let (c1_sq, c2_sq) = (cert.c1 * cert.c1, cert.c2 * cert.c2);
    let mut min_w1 = f64::INFINITY;
    let mut max_w2 = f64::NEG_INFINITY;
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    for s in trace.samples.iter().filter(|s| s.r < cert.epsilon) {
        let u = s.r * s.r;
        let w1 = u + c1_sq * s.t;
        let w2 = u + c2_sq * s.t;
        if count > 0 {
            worst = worst.max(w1 - min_w1).max(max_w2 - w2);
        }
        min_w1 = min_w1.min(w1);
        max_w2 = max_w2.max(w2);
        count += 1;
    }
    PairwiseRateCheck {
        samples_in_tube: count,
        worst_violation: if count > 1 { worst } else { 0.0 },
        passed: count < 2 || worst <= slack,
    }
}

/// Singular leaf the flow converged to. Also confirms that once committed,
/// the distance to the limit leaf is the distance to the whole singular set.
pub fn limit_leaf(trace: &FlowTrace) -> Result<SingularEndpoint, DiagnosticsError> {
    require_singular(trace)?;
    let endpoint = limit_endpoint_of(trace)?;
    let last = trace.last();
    if last.r > 2.0 * trace.theta_stop {
        return Err(DiagnosticsError::Classification(format!(
            "final distance {} is not within the stopping radius",
            last.r
        )));
    }
    let half = trace.samples.len() / 2;
    if let Some(s) = trace.samples[half..].iter().find(|s| s.r_sigma != s.r) {
        return Err(DiagnosticsError::Classification(format!(
            "strata distance {} differs from limit distance {} at t = {}",
            s.r_sigma, s.r, s.t
        )));
    }
    Ok(endpoint)
}

/// Derivative at the middle of three points by the second-order
/// non-uniform central formula.
fn central_derivative(x: [f64; 3], y: [f64; 3]) -> f64 {
    let hm = x[1] - x[0];
    let hp = x[2] - x[1];
    (hm * hm * y[2] - hp * hp * y[0] + (hp * hp - hm * hm) * y[1]) / (hm * hp * (hm + hp))
}

/// Both gradient-flow identities along a trace, as the largest scaled
/// residual `|a − b| / max(1, |b|)` over interior samples:
/// `d/dt log V = −(tr H)²` (centred in `t`) and `tr H = −d/dθ log V`
/// (centred in `log r`). Samples whose time gaps are within `2²⁴` ulps of `t` are
/// left out of the first identity.
pub fn gradient_flow_check(model: &FoliationModel, trace: &FlowTrace) -> Result<f64, DiagnosticsError> {
    if trace.termination == Termination::ConvergedToMinimal {
        return Ok(0.0);
    }
    if trace.samples.len() < 3 {
        return Err(DiagnosticsError::InsufficientData(format!(
            "{} samples, need 3",
            trace.samples.len()
        )));
    }
    if trace.model != *model {
        return Err(DiagnosticsError::NotApplicable("trace belongs to another model".into()));
    }
    let sign = match trace.limit_side {
        Some(crate::catalog::Side::Upper) => -1.0,
        _ => 1.0,
    };
    let scaled = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    let mut worst: f64 = 0.0;
    for w in trace.samples.windows(3) {
        let resolution = (1u64 << 24) as f64 * ulp(w[2].t);
        if w[1].t - w[0].t > resolution && w[2].t - w[1].t > resolution {
            let dl_dt = central_derivative(
                [w[0].t, w[1].t, w[2].t],
                [w[0].log_vol_rel, w[1].log_vol_rel, w[2].log_vol_rel],
            );
            worst = worst.max(scaled(dl_dt, -w[1].trace_h * w[1].trace_h));
        }
        if w[0].r != w[1].r && w[1].r != w[2].r {
            // log V ≈ D·log r near the singular leaf, so difference in log r
            let dl_dr = central_derivative(
                [w[0].r.ln(), w[1].r.ln(), w[2].r.ln()],
                [w[0].log_vol_rel, w[1].log_vol_rel, w[2].log_vol_rel],
            ) / w[1].r;
            worst = worst.max(scaled(w[1].trace_h, -sign * dl_dr));
        }
    }
    Ok(worst)
}

fn ulp(t: f64) -> f64 {
    let a = t.abs().max(f64::MIN_POSITIVE);
    f64::from_bits(a.to_bits() + 1) - a
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub theta0: f64,
    pub termination: Option<Termination>,
    pub singular_time: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteTimeSweep {
    pub all_finite: bool,
    pub rows: Vec<SweepRow>,
    /// Starting coordinates whose flow did not end in a finite-time
    /// singularity.
    pub offending: Vec<f64>,
}

/// Start points `θ_max·i/(n+1)`, `i = 1..=n`, without the minimal leaf.
pub fn sweep_grid(model: &FoliationModel, grid_size: usize) -> Vec<f64> {
    let theta_max = model.theta_max();
    let minimal = model.minimal_leaf();
    (1..=grid_size)
        .map(|i| theta_max * i as f64 / (grid_size + 1) as f64)
        .filter(|&th| minimal.is_none_or(|m| (th - m).abs() > 1e-9))
        .collect()
}

/// Flow every grid start point (in parallel on the current rayon pool) and
/// check that each run hits a singular leaf in finite time.
pub fn finite_time_sweep(
    model: &FoliationModel,
    grid_size: usize,
    opts: &FlowOptions,
) -> Result<FiniteTimeSweep, DiagnosticsError> {
    if !model.is_sphere() {
        return Err(DiagnosticsError::NotApplicable(
            "the finite-time sweep needs a compact sphere model".into(),
        ));
    }
    let rows: Vec<SweepRow> = sweep_grid(model, grid_size)
        .into_par_iter()
        .map(|theta0| match flow::integrate(model, theta0, opts) {
            Ok(trace) => {
                let t = flow::singular_time(&trace).ok().map(|e| e.t);
                SweepRow {
                    theta0,
                    termination: Some(trace.termination),
                    singular_time: t,
                    error: None,
                }
            }
            Err(e) => SweepRow {
                theta0,
                termination: None,
                singular_time: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let offending: Vec<f64> = rows
        .iter()
        .filter(|r| {
            r.termination != Some(Termination::ReachedSingularSet)
                || !r.singular_time.is_some_and(f64::is_finite)
        })
        .map(|r| r.theta0)
        .collect();
    Ok(FiniteTimeSweep {
        all_finite: offending.is_empty() && !rows.is_empty(),
        rows,
        offending,
    })
}

/// Checks that can be requested for a flow run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Type1,
    Rate,
    Bounds,
    Gradient,
    Volume,
    Sigma,
    Extrinsic,
}

impl Check {
    pub const ALL: [Check; 7] = [
        Check::Type1,
        Check::Rate,
        Check::Bounds,
        Check::Gradient,
        Check::Volume,
        Check::Sigma,
        Check::Extrinsic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Type1 => "type1",
            Check::Rate => "rate",
            Check::Bounds => "bounds",
            Check::Gradient => "gradient",
            Check::Volume => "volume",
            Check::Sigma => "sigma",
            Check::Extrinsic => "extrinsic",
        }
    }

    pub fn parse(s: &str) -> Option<Check> {
        Check::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// Relative tolerance for the type-I limit against `1/(2D)`.
pub const TYPE1_TOLERANCE: f64 = 0.01;
/// Largest accepted gradient-flow residual.
pub const GRADIENT_TOLERANCE: f64 = 1e-6;
/// Absolute slack of the pairwise rate inequalities.
pub const PAIRWISE_SLACK: f64 = 1e-6;

/// Everything learned from one flow run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularityReport {
    pub model: ModelKind,
    pub theta0: f64,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub termination: Termination,
    pub samples: usize,
    pub singular_time: Option<f64>,
    pub singular_time_ci: Option<f64>,
    pub limit_endpoint: Option<SingularEndpoint>,
    pub type1_stat: Option<f64>,
    pub type1_limit: Option<f64>,
    pub rate_window: Option<RateWindow>,
    pub pairwise_rate: Option<PairwiseRateCheck>,
    pub certificate: Option<BoundCertificate>,
    pub gradient_residual: Option<f64>,
    /// Smallest `j̄ − j` over the volume comparison grid.
    pub volume_margin: Option<f64>,
    /// Worst focal-to-strata distance ratio.
    pub focal_ratio: Option<f64>,
    /// Worst extrinsic oracle disagreement.
    pub oracle_defect: Option<f64>,
    pub passed: BTreeMap<String, bool>,
    pub error: Option<String>,
}

impl SingularityReport {
    pub fn all_passed(&self) -> bool {
        self.error.is_none() && self.passed.values().all(|&p| p)
    }

    fn fail(&mut self, check: Check, err: &DiagnosticsError) {
        self.fail_with_code(check, err.code());
    }

    /// Record `check` as failed; the first error code is kept.
    pub fn fail_with_code(&mut self, check: Check, code: &str) {
        self.passed.insert(check.name().into(), false);
        if self.error.is_none() {
            self.error = Some(code.into());
        }
    }
}

/// Run the trace-level analyses for the requested checks. Model-level checks
/// (`volume`, `sigma`, `extrinsic`) are ignored here.
pub fn analyze(trace: &FlowTrace, epsilon: f64, checks: &[Check], seed: Option<u64>) -> SingularityReport {
    let mut report = SingularityReport {
        model: trace.model.kind(),
        theta0: trace.theta0,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        seed,
        termination: trace.termination,
        samples: trace.samples.len(),
        singular_time: None,
        singular_time_ci: None,
        limit_endpoint: None,
        type1_stat: None,
        type1_limit: None,
        rate_window: None,
        pairwise_rate: None,
        certificate: None,
        gradient_residual: None,
        volume_margin: None,
        focal_ratio: None,
        oracle_defect: None,
        passed: BTreeMap::new(),
        error: None,
    };
    let wants = |c: Check| checks.contains(&c);
    let singular = flow::singular_time(trace).map_err(DiagnosticsError::from);
    match &singular {
        Ok(est) => {
            report.singular_time = Some(est.t);
            report.singular_time_ci = Some(est.ci);
        }
        Err(e) => {
            for c in [Check::Type1, Check::Rate] {
                if wants(c) {
                    report.fail(c, e);
                }
            }
        }
    }
    if trace.termination == Termination::ReachedSingularSet {
        match limit_leaf(trace) {
            Ok(ep) => report.limit_endpoint = Some(ep),
            Err(e) => report.error = Some(e.code().into()),
        }
    }

    if wants(Check::Type1) {
        if let Ok(est) = &singular {
            match type1_statistic(trace, est.t) {
                Ok(t1) => {
                    report.type1_stat = Some(t1.stat);
                    report.type1_limit = Some(t1.limit);
                    let ok = report.limit_endpoint.is_some_and(|ep| {
                        let predicted = 0.5 / ep.dimension_drop as f64;
                        (t1.limit / predicted - 1.0).abs() <= TYPE1_TOLERANCE
                    });
                    report.passed.insert(Check::Type1.name().into(), ok);
                }
                Err(e) => report.fail(Check::Type1, &e),
            }
        }
    }

    if wants(Check::Bounds) || wants(Check::Rate) {
        let cert = limit_endpoint_of(trace)
            .and_then(|ep| fit_bound_certificate(&trace.model, &ep, epsilon));
        match cert {
            Ok(cert) => {
                report.certificate = Some(cert);
                if wants(Check::Bounds) {
                    report.passed.insert(Check::Bounds.name().into(), true);
                }
                if wants(Check::Rate) {
                    if let Ok(est) = &singular {
                        match rate_window(trace, est.t, &cert) {
                            Ok(w) => {
                                let pair = pairwise_rate_check(trace, &cert, PAIRWISE_SLACK);
                                report.rate_window = Some(w);
                                report.pairwise_rate = Some(pair);
                                report
                                    .passed
                                    .insert(Check::Rate.name().into(), w.within_bounds && pair.passed);
                            }
                            Err(e) => report.fail(Check::Rate, &e),
                        }
                    }
                }
            }
            Err(e) => {
                for c in [Check::Bounds, Check::Rate] {
                    if wants(c) {
                        report.fail(c, &e);
                    }
                }
            }
        }
    }

    if wants(Check::Gradient) {
        match gradient_flow_check(&trace.model, trace) {
            Ok(res) => {
                report.gradient_residual = Some(res);
                report
                    .passed
                    .insert(Check::Gradient.name().into(), res <= GRADIENT_TOLERANCE);
            }
            Err(e) => report.fail(Check::Gradient, &e),
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Side;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, FRAC_PI_6};

    fn sphere(g: usize, m0: usize, m1: usize) -> FoliationModel {
        FoliationModel::isoparametric_sphere(g, m0, m1).unwrap()
    }

    fn run(model: &FoliationModel, theta0: f64) -> (FlowTrace, f64) {
        let trace = flow::integrate(model, theta0, &FlowOptions::default()).unwrap();
        let t = flow::singular_time(&trace).unwrap().t;
        (trace, t)
    }

    #[test]
    fn flat_certificates_are_exact() {
        for n in [2, 3, 5] {
            let model = FoliationModel::concentric_spheres(n).unwrap();
            for eps in [0.3, 0.1, 0.01, 10.0] {
                let cert = fit_bound_certificate(&model, &model.lower_endpoint(), eps).unwrap();
                assert_eq!(cert.delta, 0.0);
                assert_eq!(cert.c, 0.0);
                let expected = (2.0 * (n - 1) as f64).sqrt();
                assert_eq!(cert.c1, expected);
                assert_eq!(cert.c2, expected);
            }
        }
    }

    #[test]
    fn latitude_certificate_constant() {
        let model = sphere(1, 1, 1);
        let cert = fit_bound_certificate(&model, &model.lower_endpoint(), 0.3).unwrap();
        assert_eq!(cert.delta, 0.0);
        assert_abs_diff_eq!(cert.c, 1.0 / 0.3 - 1.0 / 0.3f64.tan(), epsilon = 1e-12);
    }

    #[test]
    fn certificates_refine_as_the_tube_shrinks() {
        for model in crate::catalog::sphere_catalog() {
            for ep in [Some(model.lower_endpoint()), model.upper_endpoint()].into_iter().flatten() {
                let mut prev: Option<BoundCertificate> = None;
                for eps in [0.3, 0.1, 0.03, 0.01] {
                    let cert = fit_bound_certificate(&model, &ep, eps).unwrap();
                    if let Some(p) = prev {
                        assert!(cert.delta <= p.delta && cert.c <= p.c, "{model} {eps}");
                    }
                    prev = Some(cert);
                }
            }
        }
    }

    #[test]
    fn oversized_tube_is_infeasible() {
        // near the equator the trace deviates from −1/θ by more than 1/ε
        let model = sphere(1, 1, 1);
        match fit_bound_certificate(&model, &model.lower_endpoint(), 3.0) {
            Err(DiagnosticsError::Infeasible { max_feasible, .. }) => {
                assert!(max_feasible > 0.3 && max_feasible < 3.0)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn type1_limits() {
        let model = FoliationModel::concentric_spheres(3).unwrap();
        let (trace, t) = run(&model, 1.0);
        let t1 = type1_statistic(&trace, t).unwrap();
        assert_abs_diff_eq!(t1.limit, 0.25, epsilon = 1e-6);

        let model = sphere(1, 1, 1);
        let (trace, t) = run(&model, FRAC_PI_3);
        let t1 = type1_statistic(&trace, t).unwrap();
        assert!((t1.limit / 0.5 - 1.0).abs() < 0.01, "{t1:?}");

        let model = sphere(2, 1, 1);
        let (trace, t) = run(&model, FRAC_PI_6);
        let t1 = type1_statistic(&trace, t).unwrap();
        assert!((t1.limit / 0.5 - 1.0).abs() < 0.01, "{t1:?}");
    }

    #[test]
    fn type1_rejects_early_singular_time() {
        let model = FoliationModel::concentric_spheres(2).unwrap();
        let (trace, _) = run(&model, 1.0);
        assert!(matches!(
            type1_statistic(&trace, 0.1),
            Err(DiagnosticsError::InconsistentSingularTime { .. })
        ));
    }

    #[test]
    fn rate_window_examples() {
        let model = FoliationModel::concentric_spheres(2).unwrap();
        let (trace, t) = run(&model, 1.0);
        let cert = fit_bound_certificate(&model, &model.lower_endpoint(), 0.1).unwrap();
        let w = rate_window(&trace, t, &cert).unwrap();
        assert!(w.within_bounds, "{w:?}");
        assert_abs_diff_eq!(w.c_low, 2f64.sqrt(), epsilon = 1e-5);

        let shrunk = BoundCertificate {
            c2: 0.99 * 2f64.sqrt(),
            ..cert
        };
        assert!(!rate_window(&trace, t, &shrunk).unwrap().within_bounds);

        let model = sphere(1, 1, 1);
        let (trace, t) = run(&model, FRAC_PI_3);
        let cert = fit_bound_certificate(&model, &model.lower_endpoint(), 0.1).unwrap();
        assert!(rate_window(&trace, t, &cert).unwrap().within_bounds);
        assert!(pairwise_rate_check(&trace, &cert, PAIRWISE_SLACK).passed);
    }

    #[test]
    fn pairwise_check_catches_a_tight_bound() {
        let model = sphere(2, 1, 1);
        let (trace, _) = run(&model, FRAC_PI_6);
        let cert = fit_bound_certificate(&model, &model.lower_endpoint(), 0.1).unwrap();
        let tight = BoundCertificate {
            c1: cert.c2,
            ..cert
        };
        assert!(pairwise_rate_check(&trace, &cert, PAIRWISE_SLACK).passed);
        assert!(!pairwise_rate_check(&trace, &tight, PAIRWISE_SLACK).passed);
    }

    #[test]
    fn limit_leaf_examples() {
        let model = sphere(2, 1, 1);
        let (trace, _) = run(&model, FRAC_PI_6);
        assert_eq!(limit_leaf(&trace).unwrap().coordinate, 0.0);
        let (trace, _) = run(&model, FRAC_PI_3);
        assert_eq!(limit_leaf(&trace).unwrap().coordinate, model.theta_max());
        assert_eq!(trace.limit_side, Some(Side::Upper));
        let model = FoliationModel::concentric_spheres(5).unwrap();
        let (trace, _) = run(&model, 2.0);
        assert_eq!(limit_leaf(&trace).unwrap().coordinate, 0.0);
    }

    #[test]
    fn gradient_identities_hold_along_flows() {
        for (model, theta0) in [
            (sphere(1, 1, 1), FRAC_PI_3),
            (FoliationModel::concentric_spheres(3).unwrap(), 1.0),
            (sphere(2, 1, 2), 1.2),
        ] {
            let (trace, _) = run(&model, theta0);
            assert!(trace.samples.len() >= 10_000);
            let res = gradient_flow_check(&model, &trace).unwrap();
            assert!(res <= 1e-6, "{model}: {res:e}");
        }
        let model = sphere(2, 1, 1);
        let trace = flow::integrate(&model, FRAC_PI_4, &FlowOptions::default()).unwrap();
        assert_eq!(gradient_flow_check(&model, &trace).unwrap(), 0.0);
    }

    #[test]
    fn sweep_on_the_latitude_family() {
        let model = sphere(1, 1, 1);
        let sweep = finite_time_sweep(&model, 12, &FlowOptions::default()).unwrap();
        assert!(sweep.all_finite);
        for row in &sweep.rows {
            let exact = -row.theta0.cos().abs().ln();
            assert_abs_diff_eq!(row.singular_time.unwrap(), exact, epsilon = 1e-6);
        }
        assert!(finite_time_sweep(&FoliationModel::concentric_spheres(2).unwrap(), 5, &FlowOptions::default()).is_err());
    }

    #[test]
    fn report_for_a_stationary_start_fails_type1() {
        let model = sphere(2, 1, 1);
        let trace = flow::integrate(&model, FRAC_PI_4, &FlowOptions::default()).unwrap();
        let report = analyze(&trace, 0.1, &[Check::Type1], None);
        assert_eq!(report.error.as_deref(), Some("converged_to_minimal"));
        assert!(!report.all_passed());
    }

    #[test]
    fn full_report_passes_on_a_closed_form_case() {
        let model = sphere(1, 1, 1);
        let trace = flow::integrate(&model, FRAC_PI_3, &FlowOptions::default()).unwrap();
        let report = analyze(
            &trace,
            0.1,
            &[Check::Type1, Check::Rate, Check::Bounds, Check::Gradient],
            Some(7),
        );
        assert!(report.all_passed(), "{report:?}");
        assert_abs_diff_eq!(report.singular_time.unwrap(), std::f64::consts::LN_2, epsilon = 1e-6);
    }
}
