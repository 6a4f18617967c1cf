//! Reduced mean curvature flow on the quotient interval.
//!
//! The leaf at `θ` moves with velocity `dθ/dt = tr A_{∂θ}(θ)`. The integrator
//! works in the distance `r` to the singular leaf the flow is heading for,
//! and once `r` has halved it switches to `u = r²`, whose derivative
//! `2r·tr A_{∇r}` stays bounded up to the singular time.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{CatalogError, FoliationModel, ModelKind, Side};
use crate::ode::{dp45_step, error_norm, step_factor, CompensatedSum};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("invalid flow options: {0}")]
    InvalidOptions(String),
    #[error("step size underflow at t = {t}, θ = {theta}")]
    StepUnderflow { t: f64, theta: f64 },
    #[error("flow did not reach a singular leaf (termination: {0})")]
    NotSingular(Termination),
    #[error("not enough samples: {have} in the fit window, need {need}")]
    InsufficientData { have: usize, need: usize },
    #[error("no closed form for {0}")]
    NoClosedForm(String),
    #[error("t = {t} is not before the singular time {singular_time}")]
    PastSingularTime { t: f64, singular_time: f64 },
}

/// Integrator settings. `theta_stop = None` means `1e-6` times the interval
/// scale (`θ_max` for sphere models, `θ0` for flat ones).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub theta_stop: Option<f64>,
    pub t_max: f64,
    /// Keep every `sample_stride`-th accepted step (first and last are
    /// always kept).
    pub sample_stride: usize,
    /// Lower bound on the number of steps across the run; sets the largest
    /// allowed step from a rough estimate of the singular time.
    pub target_samples: usize,
    /// Steps satisfy `h ≤ step_ratio · r/|r'|`, which makes the sampling
    /// geometric in `T − t` near the singularity.
    pub step_ratio: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            theta_stop: None,
            t_max: 1e6,
            sample_stride: 1,
            target_samples: 10_000,
            step_ratio: 5e-4,
        }
    }
}

impl FlowOptions {
    pub fn validate(&self) -> Result<(), FlowError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(FlowError::InvalidOptions(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        let within = |name: &str, v: f64, lo: f64, hi: f64| {
            if (lo..=hi).contains(&v) {
                Ok(())
            } else {
                Err(FlowError::InvalidOptions(format!(
                    "{name} must lie in [{lo:e}, {hi:e}], got {v}"
                )))
            }
        };
        // the bounds keep run time and step counts finite
        within("rel_tol", self.rel_tol, 1e-14, 1e-2)?;
        within("abs_tol", self.abs_tol, 1e-300, 1.0)?;
        within("step_ratio", self.step_ratio, 1e-5, 0.5)?;
        positive("t_max", self.t_max)?;
        if let Some(s) = self.theta_stop {
            positive("theta_stop", s)?;
        }
        if self.sample_stride == 0 {
            return Err(FlowError::InvalidOptions("sample_stride must be at least 1".into()));
        }
        if !(1..=10_000_000).contains(&self.target_samples) {
            return Err(FlowError::InvalidOptions(
                "target_samples must lie in [1, 10000000]".into(),
            ));
        }
        Ok(())
    }

    /// Stopping distance actually used for `model` started at `θ0`.
    pub fn resolved_theta_stop(&self, model: &FoliationModel, theta0: f64) -> f64 {
        self.theta_stop
            .unwrap_or_else(|| 1e-6 * model.interval_scale().unwrap_or(theta0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedSingularSet,
    ReachedTMax,
    ConvergedToMinimal,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::ReachedSingularSet => "reached_singular_set",
            Termination::ReachedTMax => "reached_t_max",
            Termination::ConvergedToMinimal => "converged_to_minimal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowSample {
    pub t: f64,
    pub theta: f64,
    /// Distance to the singular leaf on the limit side.
    pub r: f64,
    /// Distance to the nearest singular leaf.
    pub r_sigma: f64,
    /// `tr A_{∂θ}`, i.e. `dθ/dt`.
    pub trace_h: f64,
    pub sup_a: f64,
    /// `log V(θ) − log V(θ0)`.
    pub log_vol_rel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrace {
    pub model: FoliationModel,
    pub theta0: f64,
    pub theta_stop: f64,
    pub samples: Vec<FlowSample>,
    pub termination: Termination,
    /// Side of the singular leaf the flow is moving towards; `None` when the
    /// initial leaf is stationary.
    pub limit_side: Option<Side>,
}

impl FlowTrace {
    pub fn last(&self) -> &FlowSample {
        self.samples.last().expect("traces are never empty")
    }
}

fn sample(
    model: &FoliationModel,
    side: Side,
    r: f64,
    t: f64,
    log_vol0: f64,
) -> Result<FlowSample, CatalogError> {
    let theta_max = model.theta_max();
    let theta = match side {
        Side::Lower => r,
        Side::Upper => theta_max - r,
    };
    let radial = model.radial_trace(side, r)?;
    Ok(FlowSample {
        t,
        theta,
        r,
        r_sigma: r.min(theta_max - r),
        trace_h: match side {
            Side::Lower => radial,
            Side::Upper => -radial,
        },
        sup_a: model.spectrum_from(side, r)?.sup_norm(),
        log_vol_rel: model.log_volume_from(side, r)? - log_vol0,
    })
}

/// Rough singular time from `∫ du / |u'|` over `u = r²`, used only to size
/// the largest step.
fn singular_time_guess(model: &FoliationModel, side: Side, r0: f64, r_stop: f64) -> f64 {
    const NODES: usize = 64;
    let (u0, u1) = (r_stop * r_stop, r0 * r0);
    let du = (u1 - u0) / NODES as f64;
    (0..NODES)
        .map(|i| {
            let r = (u0 + (i as f64 + 0.5) * du).sqrt();
            model
                .radial_trace(side, r)
                .map_or(0.0, |v| du / (2.0 * r * v.abs()))
        })
        .sum()
}

/// Largest starting radius for the flat models (keeps `θ0²` finite).
pub const MAX_FLAT_THETA: f64 = 1e100;

#[derive(Clone, Copy, PartialEq)]
enum Variable {
    /// State is `r`.
    Distance,
    /// State is `u = r²`.
    Squared,
}

/// Integrate the reduced flow from `θ0` until it comes within `theta_stop`
/// of a singular leaf, reaches `t_max`, or is found to be stationary.
pub fn integrate(
    model: &FoliationModel,
    theta0: f64,
    opts: &FlowOptions,
) -> Result<FlowTrace, FlowError> {
    opts.validate()?;
    model.check_theta(theta0)?;
    if theta0 > MAX_FLAT_THETA {
        return Err(FlowError::InvalidOptions(format!(
            "θ0 = {theta0} exceeds {MAX_FLAT_THETA:e}"
        )));
    }
    let theta_stop = opts.resolved_theta_stop(model, theta0);
    let v0 = model.mean_curvature_trace(theta0)?;

    let stationary = v0.abs() < opts.abs_tol;
    let side = if v0 < 0.0 || stationary {
        Side::Lower
    } else {
        Side::Upper
    };
    let r0 = model.distance_to(side, theta0);
    let log_vol0 = model.log_volume_from(side, r0)?;
    let first = sample(model, side, r0, 0.0, log_vol0)?;
    let mut trace = FlowTrace {
        model: *model,
        theta0,
        theta_stop,
        samples: vec![first],
        termination: Termination::ReachedSingularSet,
        limit_side: Some(side),
    };
    if stationary {
        trace.termination = Termination::ConvergedToMinimal;
        trace.limit_side = None;
        return Ok(trace);
    }
    if r0 <= theta_stop {
        return Ok(trace);
    }

    let speed = |r: f64| model.radial_trace(side, r).ok().filter(|v| v.is_finite());
    let rhs_r = |_t: f64, y: &[f64; 1]| {
        if y[0] <= 0.0 {
            return None;
        }
        speed(y[0]).map(|v| [v])
    };
    let rhs_u = |_t: f64, y: &[f64; 1]| {
        if y[0] <= 0.0 {
            return None;
        }
        let r = y[0].sqrt();
        speed(r).map(|v| [2.0 * r * v])
    };

    let t_guess = singular_time_guess(model, side, r0, theta_stop).min(opts.t_max);
    let max_step = t_guess / opts.target_samples as f64;
    let u_stop = theta_stop * theta_stop;

    let mut variable = Variable::Distance;
    let mut y = [r0];
    let mut fy = rhs_r(0.0, &y).ok_or(FlowError::StepUnderflow { t: 0.0, theta: theta0 })?;
    let mut time = CompensatedSum::new(0.0);
    let mut h = max_step.min(opts.step_ratio * r0 / fy[0].abs());
    let mut accepted = 0usize;

    loop {
        let t = time.value();
        let r = match variable {
            Variable::Distance => y[0],
            Variable::Squared => y[0].sqrt(),
        };
        // local blow-up scale and stopping target
        let dr = match variable {
            Variable::Distance => fy[0],
            Variable::Squared => fy[0] / (2.0 * r),
        };
        // sampling density is limited by the resolution of t itself
        let mut cap = max_step.min((opts.step_ratio * r / dr.abs()).max(1024.0 * ulp(t)));
        if variable == Variable::Squared {
            let to_stop = (y[0] - u_stop) / fy[0].abs();
            if to_stop < cap {
                cap = to_stop;
            }
        }
        let mut last = false;
        if t + cap.min(h) >= opts.t_max {
            last = true;
        }
        let h_try = if last { opts.t_max - t } else { h.min(cap) };
        if h_try < 64.0 * ulp(t) {
            return Err(FlowError::StepUnderflow {
                t,
                theta: trace.last().theta,
            });
        }

        let step = match variable {
            Variable::Distance => dp45_step(&rhs_r, t, &y, &fy, h_try),
            Variable::Squared => dp45_step(&rhs_u, t, &y, &fy, h_try),
        };
        let Some(step) = step else {
            h = 0.25 * h_try;
            continue;
        };
        let atol = match variable {
            Variable::Distance => opts.abs_tol,
            Variable::Squared => opts.abs_tol * opts.abs_tol,
        };
        let en = error_norm(&y, &step.y, &step.err, opts.rel_tol, atol);
        if en > 1.0 {
            h = h_try * step_factor(en);
            continue;
        }

        if last {
            time = CompensatedSum::new(opts.t_max);
        } else {
            time.add(h_try);
        }
        y = step.y;
        fy = step.f_new;
        h = h_try * step_factor(en);
        accepted += 1;

        let r_new = match variable {
            Variable::Distance => y[0],
            Variable::Squared => y[0].sqrt(),
        };
        let done_singular = match variable {
            Variable::Distance => r_new <= theta_stop,
            // within rounding of t from the stopping leaf counts as arrived
            Variable::Squared => {
                y[0] <= u_stop * (1.0 + 1e-6)
                    || (y[0] - u_stop) / fy[0].abs() < 1024.0 * ulp(time.value())
            }
        };
        let done = done_singular || last;
        if done || accepted.is_multiple_of(opts.sample_stride) {
            trace
                .samples
                .push(sample(model, side, r_new, time.value(), log_vol0)?);
        }
        if done_singular {
            trace.termination = Termination::ReachedSingularSet;
            return Ok(trace);
        }
        if last {
            trace.termination = Termination::ReachedTMax;
            return Ok(trace);
        }
        if variable == Variable::Distance && r_new <= 0.5 * r0 {
            variable = Variable::Squared;
            y = [r_new * r_new];
            fy = [2.0 * r_new * fy[0]];
        }
    }
}

fn ulp(t: f64) -> f64 {
    let a = t.abs().max(f64::MIN_POSITIVE);
    f64::from_bits(a.to_bits() + 1) - a
}

/// Singular time of the closed-form solution from `θ0` (`∞` for a
/// stationary leaf).
pub fn closed_form_singular_time(model: &FoliationModel, theta0: f64) -> Result<f64, FlowError> {
    model.check_theta(theta0)?;
    Ok(match model.kind() {
        ModelKind::ConcentricSpheres { n } => theta0 * theta0 / (2.0 * (n - 1) as f64),
        ModelKind::SphericalCylinders { k, .. } => theta0 * theta0 / (2.0 * k as f64),
        ModelKind::IsoparametricSphere { g: 1, m0, .. } => -theta0.cos().abs().ln() / m0 as f64,
        ModelKind::IsoparametricSphere { g: 2, m0, m1 } if m0 == m1 => {
            -(2.0 * theta0).cos().abs().ln() / (4.0 * m0 as f64)
        }
        _ => return Err(FlowError::NoClosedForm(model.to_string())),
    })
}

/// Exact solution `θ(t)` where one exists: flat models, and the sphere
/// families `g = 1` and `g = 2` with equal multiplicities.
pub fn closed_form(model: &FoliationModel, theta0: f64, t: f64) -> Result<f64, FlowError> {
    let singular_time = closed_form_singular_time(model, theta0)?;
    if t == 0.0 {
        return Ok(theta0);
    }
    if t >= singular_time {
        return Err(FlowError::PastSingularTime { t, singular_time });
    }
    let s = singular_time - t;
    Ok(match model.kind() {
        ModelKind::ConcentricSpheres { n } => (theta0 * theta0 - 2.0 * (n - 1) as f64 * t).sqrt(),
        ModelKind::SphericalCylinders { k, .. } => (theta0 * theta0 - 2.0 * k as f64 * t).sqrt(),
        // cos θ = ±e^{−m(T−t)}; the half-angle form keeps precision near 0
        ModelKind::IsoparametricSphere { g: 1, m0, .. } => {
            let a = 2.0 * (-(-(m0 as f64) * s).exp_m1() / 2.0).sqrt().asin();
            if theta0 < model.theta_max() / 2.0 {
                a
            } else {
                model.theta_max() - a
            }
        }
        // cos 2θ = ±e^{−4m(T−t)}
        ModelKind::IsoparametricSphere { g: 2, m0, .. } => {
            let a = (-(-4.0 * m0 as f64 * s).exp_m1() / 2.0).sqrt().asin();
            if theta0 < model.theta_max() / 2.0 {
                a
            } else {
                model.theta_max() - a
            }
        }
        _ => unreachable!("closed_form_singular_time rejects other models"),
    })
}

/// Singular time estimate with a residual-based half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingularTime {
    pub t: f64,
    pub ci: f64,
}

/// Least-squares affine fit of `r²` against `t` over the final tenth of
/// the samples; the singular time is the root of the fit.
pub fn singular_time(trace: &FlowTrace) -> Result<SingularTime, FlowError> {
    const MIN_FIT: usize = 20;
    if trace.termination != Termination::ReachedSingularSet {
        return Err(FlowError::NotSingular(trace.termination));
    }
    let n = trace.samples.len();
    let window = n / 10;
    if window < MIN_FIT {
        return Err(FlowError::InsufficientData {
            have: window,
            need: MIN_FIT,
        });
    }
    let tail = &trace.samples[n - window..];
    let t_last = trace.last().t;
    // centre τ for conditioning
    let (mut st, mut su) = (0.0, 0.0);
    for s in tail {
        st += s.t - t_last;
        su += s.r * s.r;
    }
    let mt = st / window as f64;
    let mu = su / window as f64;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for s in tail {
        let x = s.t - t_last - mt;
        sxx += x * x;
        sxy += x * (s.r * s.r - mu);
    }
    let slope = sxy / sxx;
    let intercept = mu - slope * mt;
    let root = -intercept / slope;
    let t = t_last + root;
    let ci = tail
        .iter()
        .map(|s| (s.r * s.r - (intercept + slope * (s.t - t_last))).abs())
        .fold(0.0, f64::max)
        / slope.abs();
    if slope.is_nan() || slope >= 0.0 || !t.is_finite() || t <= t_last {
        return Err(FlowError::InsufficientData {
            have: window,
            need: MIN_FIT,
        });
    }
    Ok(SingularTime { t, ci })
}

/// `θ` at each of the (ascending, non-negative) `times`, integrated
/// directly in `r` with dense landings. Times at or beyond the singular
/// time yield an error.
pub fn theta_at(
    model: &FoliationModel,
    theta0: f64,
    times: &[f64],
    opts: &FlowOptions,
) -> Result<Vec<f64>, FlowError> {
    opts.validate()?;
    model.check_theta(theta0)?;
    let v0 = model.mean_curvature_trace(theta0)?;
    if v0.abs() < opts.abs_tol {
        return Ok(vec![theta0; times.len()]);
    }
    let side = if v0 < 0.0 { Side::Lower } else { Side::Upper };
    let rhs = |_t: f64, y: &[f64; 1]| {
        if y[0] <= 0.0 {
            return None;
        }
        model.radial_trace(side, y[0]).ok().map(|v| [v])
    };
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    let mut y = [model.distance_to(side, theta0)];
    for &target in times {
        if target < t {
            return Err(FlowError::InvalidOptions("times must be ascending".into()));
        }
        y = crate::ode::integrate_to(&rhs, t, y, target, opts.rel_tol, opts.abs_tol).map_err(
            |_| FlowError::StepUnderflow {
                t,
                theta: y[0],
            },
        )?;
        t = target;
        out.push(match side {
            Side::Lower => y[0],
            Side::Upper => model.theta_max() - y[0],
        });
    }
    Ok(out)
}

pub const CSV_HEADER: &str = "t,theta,r,r_sigma,trace_H,sup_A,log_vol_rel";

/// Write the trace as CSV with 17 significant digits per value.
pub fn write_csv<W: Write>(trace: &FlowTrace, mut w: W) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for s in &trace.samples {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            s.t, s.theta, s.r, s.r_sigma, s.trace_h, s.sup_a, s.log_vol_rel
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, FRAC_PI_6, LN_2};

    fn sphere(g: usize, m0: usize, m1: usize) -> FoliationModel {
        FoliationModel::isoparametric_sphere(g, m0, m1).unwrap()
    }

    #[test]
    fn shrinking_circle_follows_square_root() {
        let model = FoliationModel::concentric_spheres(2).unwrap();
        let trace = integrate(&model, 1.0, &FlowOptions::default()).unwrap();
        assert_eq!(trace.termination, Termination::ReachedSingularSet);
        for s in &trace.samples {
            let exact = (1.0 - 2.0 * s.t).max(0.0).sqrt();
            assert!((s.theta - exact).abs() < 1e-8, "t={} θ={} exact={}", s.t, s.theta, exact);
        }
        let est = singular_time(&trace).unwrap();
        assert_abs_diff_eq!(est.t, 0.5, epsilon = 1e-6);
    }

    #[test]
    fn latitude_circle_singular_time() {
        let model = sphere(1, 1, 1);
        let trace = integrate(&model, FRAC_PI_3, &FlowOptions::default()).unwrap();
        let est = singular_time(&trace).unwrap();
        assert_abs_diff_eq!(est.t, LN_2, epsilon = 1e-6);
        assert_eq!(trace.limit_side, Some(Side::Lower));
    }

    #[test]
    fn clifford_singular_time() {
        let model = sphere(2, 1, 1);
        let trace = integrate(&model, FRAC_PI_6, &FlowOptions::default()).unwrap();
        let est = singular_time(&trace).unwrap();
        assert_abs_diff_eq!(est.t, 0.25 * LN_2, epsilon = 1e-6);
    }

    #[test]
    fn minimal_leaf_is_stationary() {
        let model = sphere(2, 1, 1);
        let trace = integrate(&model, FRAC_PI_4, &FlowOptions::default()).unwrap();
        assert_eq!(trace.termination, Termination::ConvergedToMinimal);
        assert_eq!(trace.samples.len(), 1);
        assert!(matches!(singular_time(&trace), Err(FlowError::NotSingular(_))));
    }

    #[test]
    fn upper_side_flow_reaches_theta_max() {
        let model = sphere(2, 1, 1);
        let trace = integrate(&model, FRAC_PI_3, &FlowOptions::default()).unwrap();
        assert_eq!(trace.limit_side, Some(Side::Upper));
        assert!(trace.last().theta > 1.57);
        let est = singular_time(&trace).unwrap();
        assert_abs_diff_eq!(est.t, 0.25 * LN_2, epsilon = 1e-6);
    }

    #[test]
    fn closed_form_examples() {
        let m = FoliationModel::concentric_spheres(3).unwrap();
        assert_abs_diff_eq!(closed_form(&m, 1.0, 0.2).unwrap(), 0.2f64.sqrt(), epsilon = 1e-15);
        let c = sphere(2, 1, 1);
        assert_abs_diff_eq!(
            closed_form_singular_time(&c, FRAC_PI_6).unwrap(),
            0.25 * LN_2,
            epsilon = 1e-15
        );
        for model in crate::catalog::standard_catalog() {
            if closed_form_singular_time(&model, 0.4).is_ok() {
                assert_eq!(closed_form(&model, 0.4, 0.0).unwrap(), 0.4);
            }
        }
    }

    #[test]
    fn closed_form_past_singular_time_carries_it() {
        let m = FoliationModel::concentric_spheres(2).unwrap();
        match closed_form(&m, 1.0, 0.6) {
            Err(FlowError::PastSingularTime { singular_time, .. }) => {
                assert_eq!(singular_time, 0.5)
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            closed_form(&sphere(3, 1, 1), 0.3, 0.1),
            Err(FlowError::NoClosedForm(_))
        ));
    }

    #[test]
    fn closed_form_solves_the_ode() {
        for model in [sphere(1, 2, 2), sphere(2, 3, 3)] {
            for theta0 in [0.3, 0.6, 0.9] {
                if theta0 >= model.theta_max() {
                    continue;
                }
                let t = 0.3 * closed_form_singular_time(&model, theta0).unwrap();
                let h = 1e-6;
                let d = (closed_form(&model, theta0, t + h).unwrap()
                    - closed_form(&model, theta0, t - h).unwrap())
                    / (2.0 * h);
                let theta = closed_form(&model, theta0, t).unwrap();
                assert_abs_diff_eq!(d, model.mean_curvature_trace(theta).unwrap(), epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn trace_invariants() {
        let model = sphere(3, 1, 1);
        let trace = integrate(&model, 0.9, &FlowOptions::default()).unwrap();
        for w in trace.samples.windows(2) {
            assert!(w[1].t > w[0].t);
            assert!(w[1].theta >= w[0].theta);
            assert!(w[1].log_vol_rel <= w[0].log_vol_rel);
        }
        for s in &trace.samples {
            assert_abs_diff_eq!(s.r_sigma, s.theta.min(model.theta_max() - s.theta), epsilon = 1e-15);
        }
    }

    #[test]
    fn sample_stride_thins_the_trace() {
        let model = FoliationModel::concentric_spheres(3).unwrap();
        let full = integrate(&model, 1.0, &FlowOptions::default()).unwrap();
        let opts = FlowOptions {
            sample_stride: 10,
            ..FlowOptions::default()
        };
        let thin = integrate(&model, 1.0, &opts).unwrap();
        assert!(thin.samples.len() * 9 < full.samples.len());
        assert_eq!(thin.last(), full.last());
    }

    #[test]
    fn t_max_cuts_the_run() {
        let model = FoliationModel::concentric_spheres(2).unwrap();
        let opts = FlowOptions {
            t_max: 0.25,
            ..FlowOptions::default()
        };
        let trace = integrate(&model, 1.0, &opts).unwrap();
        assert_eq!(trace.termination, Termination::ReachedTMax);
        assert_eq!(trace.last().t, 0.25);
        assert_abs_diff_eq!(trace.last().theta, 0.5f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn out_of_range_start_is_rejected() {
        let model = sphere(2, 1, 1);
        assert!(matches!(
            integrate(&model, 2.0, &FlowOptions::default()),
            Err(FlowError::Catalog(CatalogError::AboveUpper { .. }))
        ));
        let opts = FlowOptions {
            rel_tol: -1.0,
            ..FlowOptions::default()
        };
        assert!(matches!(
            integrate(&model, 0.5, &opts),
            Err(FlowError::InvalidOptions(_))
        ));
    }

    #[test]
    fn theta_at_matches_closed_form() {
        let model = sphere(1, 1, 1);
        let times = [0.0, 0.1, 0.3];
        let got = theta_at(&model, FRAC_PI_3, &times, &FlowOptions::default()).unwrap();
        for (t, th) in times.iter().zip(got) {
            assert_abs_diff_eq!(th, closed_form(&model, FRAC_PI_3, *t).unwrap(), epsilon = 1e-10);
        }
    }

    #[test]
    fn csv_has_fixed_header_and_width() {
        let model = FoliationModel::concentric_spheres(2).unwrap();
        let opts = FlowOptions {
            sample_stride: 1000,
            ..FlowOptions::default()
        };
        let trace = integrate(&model, 1.0, &opts).unwrap();
        let mut buf = Vec::new();
        write_csv(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        let row: Vec<_> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 7);
        assert_eq!(row[1], "1.0000000000000000e0");
    }
}
