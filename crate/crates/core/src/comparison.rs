//! Comparison geometry: the Euler-type conjugate-point equation behind the
//! focal/strata constant `σ`, and the Riccati comparison for Jacobi
//! determinants that makes minimal leaves local volume maxima.

use serde::Serialize;
use thiserror::Error;

use crate::catalog::{CatalogError, FoliationModel, ShapeSpectrum, Side};
use crate::ode::{dp45_step, error_norm, integrate_to, step_factor, OdeError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComparisonError {
    #[error("curvature constant K must be non-negative, got {0}")]
    NegativeK(f64),
    #[error("s = {s} lies beyond s_max = {s_max}")]
    BeyondSMax { s: f64, s_max: f64 },
    #[error("closed form {closed} and numerical value {numeric} disagree")]
    Mismatch { closed: f64, numeric: f64 },
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Integration(#[from] OdeError),
}

/// Required agreement between closed-form and numerical answers.
pub const AGREEMENT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaResult {
    #[serde(rename = "K")]
    pub k: f64,
    pub sigma: f64,
    pub first_zero: Option<f64>,
}

/// First zero in `(0, 1)` of the solution of `g'' = −K g/(1−s)²`,
/// `g(0) = 0`, `g'(0) = 1`, from the closed form: with `ω = √(K − 1/4)`,
/// `g = ω⁻¹ √(1−s) sin(ω log(1/(1−s)))`, so the zero is `1 − e^{−π/ω}`.
/// A zero indistinguishable from `1` in double precision counts as none.
pub fn first_zero_closed_form(k: f64) -> Option<f64> {
    if k <= 0.25 {
        return None;
    }
    let omega = (k - 0.25).sqrt();
    let zero = -(-std::f64::consts::PI / omega).exp_m1();
    (zero < 1.0).then_some(zero)
}

/// Integration stops this close to the singular point `s = 1`.
pub const SIGMA_HORIZON: f64 = 1e-10;

/// First sign change of `g` on `(0, 1 − SIGMA_HORIZON)` by adaptive
/// integration, refined by bisection with re-integration from the last
/// accepted state.
pub fn first_zero_numeric(k: f64) -> Result<Option<f64>, ComparisonError> {
    if k < 0.0 || k.is_nan() {
        return Err(ComparisonError::NegativeK(k));
    }
    let rhs = move |s: f64, y: &[f64; 2]| {
        let d = 1.0 - s;
        (d > 0.0).then(|| [y[1], -k * y[0] / (d * d)])
    };
    let (rtol, atol) = (1e-13, 1e-15);
    let end = 1.0 - SIGMA_HORIZON;
    let mut s = 0.0;
    let mut y = [0.0, 1.0];
    let mut fy = rhs(s, &y).expect("defined at 0");
    let mut h: f64 = 1e-3;
    while s < end {
        let h_try = h.min(end - s);
        let Some(step) = dp45_step(&rhs, s, &y, &fy, h_try) else {
            h = 0.25 * h_try;
            continue;
        };
        let en = error_norm(&y, &step.y, &step.err, rtol, atol);
        if en > 1.0 {
            h = h_try * step_factor(en);
            if h < 1e-18 {
                return Err(OdeError::StepUnderflow { t: s }.into());
            }
            continue;
        }
        if s > 0.0 && step.y[0] <= 0.0 {
            let (mut lo, mut hi) = (s, s + h_try);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let g = integrate_to(&rhs, s, y, mid, rtol, atol)?;
                if g[0] > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(Some(0.5 * (lo + hi)));
        }
        s += h_try;
        y = step.y;
        fy = step.f_new;
        h = h_try * step_factor(en);
    }
    Ok(None)
}

/// `σ = σ₀` when `g` has a first zero `σ₀ ∈ (0, 1)`, else `σ = 1`. The
/// closed form is confirmed by numerical integration whenever the zero lies
/// inside the integration horizon.
pub fn sigma_lower_bound(k: f64) -> Result<SigmaResult, ComparisonError> {
    if k < 0.0 || k.is_nan() {
        return Err(ComparisonError::NegativeK(k));
    }
    let closed = first_zero_closed_form(k);
    let horizon_reached = closed.is_none_or(|z| 1.0 - z >= SIGMA_HORIZON);
    if horizon_reached {
        let numeric = first_zero_numeric(k)?;
        match (closed, numeric) {
            (Some(c), Some(n)) if (c - n).abs() <= AGREEMENT => {}
            (None, None) => {}
            (c, n) => {
                return Err(ComparisonError::Mismatch {
                    closed: c.unwrap_or(1.0),
                    numeric: n.unwrap_or(1.0),
                })
            }
        }
    }
    Ok(SigmaResult {
        k,
        sigma: closed.unwrap_or(1.0),
        first_zero: closed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FocalStrataCheck {
    pub worst_ratio: f64,
    pub sigma: f64,
    pub passed: bool,
}

/// `min f(θ)/r_Σ(θ)` over a grid of regular leaves, where `f` is the
/// distance to the first focal point, compared with `σ(K)`.
pub fn focal_strata_check(model: &FoliationModel, k: f64) -> Result<FocalStrataCheck, ComparisonError> {
    const GRID: usize = 1000;
    let sigma = sigma_lower_bound(k)?.sigma;
    let thetas: Vec<f64> = if model.is_sphere() {
        let theta_max = model.theta_max();
        (1..=GRID).map(|i| theta_max * i as f64 / (GRID + 1) as f64).collect()
    } else {
        (0..GRID)
            .map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / (GRID - 1) as f64))
            .collect()
    };
    let mut worst = f64::INFINITY;
    for theta in thetas {
        let f = model
            .spectrum_at(theta)?
            .first_focal_distance()
            .unwrap_or(f64::INFINITY);
        worst = worst.min(f / model.strata_distance(theta));
    }
    Ok(FocalStrataCheck {
        worst_ratio: worst,
        sigma,
        passed: worst >= sigma - 1e-12,
    })
}

/// Euclidean comparison for the Jacobi determinant along the normal
/// geodesic in direction `X`, from the spectrum of `A_X` at the foot point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JacobiComparison {
    pub spectrum: ShapeSpectrum,
    /// `1/λ⁺` for the largest positive eigenvalue `λ⁺`, `∞` if there is none.
    pub s_max: f64,
}

impl JacobiComparison {
    pub fn new(spectrum: ShapeSpectrum) -> Self {
        let s_max = spectrum.max_positive().map_or(f64::INFINITY, f64::recip);
        Self { spectrum, s_max }
    }

    fn check_s(&self, s: f64) -> Result<(), ComparisonError> {
        if !(0.0..=self.s_max).contains(&s) {
            return Err(ComparisonError::BeyondSMax { s, s_max: self.s_max });
        }
        Ok(())
    }

    /// `∏ (1 − λs)^m`.
    pub fn jbar_product(&self, s: f64) -> Result<f64, ComparisonError> {
        self.check_s(s)?;
        Ok(self
            .spectrum
            .eigenpairs
            .iter()
            .map(|&(l, m)| (1.0 - l * s).powi(m as i32))
            .product())
    }

    /// `log j̄(s) = ∫₀ˢ tr S̄`, with the scalar Riccati solutions
    /// `S̄ᵢ = −λᵢ/(1 − λᵢσ)` integrated numerically.
    pub fn log_jbar_riccati(&self, s: f64) -> Result<f64, ComparisonError> {
        self.check_s(s)?;
        let pairs = self.spectrum.eigenpairs.clone();
        let rhs = move |sig: f64, _y: &[f64; 1]| {
            let mut acc = 0.0;
            for &(l, m) in &pairs {
                let d = 1.0 - l * sig;
                if d <= 0.0 {
                    return None;
                }
                acc -= m as f64 * l / d;
            }
            Some([acc])
        };
        Ok(integrate_to(&rhs, 0.0, [0.0], s, 1e-13, 1e-14)?[0])
    }

    pub fn jbar_riccati(&self, s: f64) -> Result<f64, ComparisonError> {
        Ok(self.log_jbar_riccati(s)?.exp())
    }
}

/// `j̄(s)` computed both ways; fails unless they agree to `1e-9` in log
/// scale. At `s = s_max` the product is `0` and only it is returned.
pub fn riccati_jbar(spectrum: &ShapeSpectrum, s: f64) -> Result<f64, ComparisonError> {
    let cmp = JacobiComparison::new(spectrum.clone());
    let product = cmp.jbar_product(s)?;
    if s == cmp.s_max {
        return Ok(product);
    }
    let log_riccati = cmp.log_jbar_riccati(s)?;
    if (product.ln() - log_riccati).abs() > AGREEMENT {
        return Err(ComparisonError::Mismatch {
            closed: product,
            numeric: log_riccati.exp(),
        });
    }
    Ok(product)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeCheck {
    pub passed: bool,
    /// `min (j̄ − j)` over grid points with `s > 0`.
    pub margin: f64,
    pub minimal_leaf: f64,
    /// Largest `j̄` seen (must not exceed `1`).
    pub max_jbar: f64,
}

/// Grid size for the volume comparison, per normal direction.
pub const VOLUME_GRID: usize = 1000;

/// At the minimal leaf `θ*`, check `j(s) ≤ j̄(s) ≤ 1` in both normal
/// directions, where `j(s) = V(θ* ± s)/V(θ*)` and `j̄` comes from the
/// spectrum at `θ*`. `s` runs over `[0, s_max(1 − 1e-6)]`, with `s_max`
/// also capped by the distance to the singular leaf on that side.
pub fn volume_local_max_check(model: &FoliationModel) -> Result<VolumeCheck, ComparisonError> {
    let theta_star = model
        .minimal_leaf()
        .ok_or_else(|| ComparisonError::NotApplicable(format!("{model} has no regular minimal leaf")))?;
    let spectrum = model.spectrum_at(theta_star)?;
    let log_v0 = model.log_volume_density(theta_star)?;
    let tol = 1e-12;
    let mut margin = f64::INFINITY;
    let mut max_jbar: f64 = 0.0;
    let mut passed = true;
    for (side, spec) in [(Side::Upper, spectrum.clone()), (Side::Lower, spectrum.negated())] {
        let cmp = JacobiComparison::new(spec);
        let reach = model.distance_to(side, theta_star);
        let s_end = cmp.s_max.min(reach) * (1.0 - 1e-6);
        for i in 0..VOLUME_GRID {
            let s = s_end * i as f64 / (VOLUME_GRID - 1) as f64;
            let theta = match side {
                Side::Upper => theta_star + s,
                Side::Lower => theta_star - s,
            };
            let j = (model.log_volume_density(theta)? - log_v0).exp();
            let jbar = riccati_jbar(&cmp.spectrum, s)?;
            max_jbar = max_jbar.max(jbar);
            if j > jbar + tol || jbar > 1.0 + tol {
                passed = false;
            }
            if i > 0 {
                margin = margin.min(jbar - j);
            }
        }
    }
    Ok(VolumeCheck {
        passed,
        margin,
        minimal_leaf: theta_star,
        max_jbar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::AmbientKind;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn sigma_examples() {
        let r = sigma_lower_bound(0.0).unwrap();
        assert_eq!((r.sigma, r.first_zero), (1.0, None));
        let r = sigma_lower_bound(0.25).unwrap();
        assert_eq!((r.sigma, r.first_zero), (1.0, None));
        let r = sigma_lower_bound(1.25).unwrap();
        assert_abs_diff_eq!(r.sigma, 1.0 - (-std::f64::consts::PI).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(r.sigma, 0.956786, epsilon = 1e-6);
        assert!(matches!(sigma_lower_bound(-0.1), Err(ComparisonError::NegativeK(_))));
    }

    #[test]
    fn numeric_zero_matches_closed_form() {
        for k in [0.3, 1.25, 10.0, 100.0] {
            let closed = first_zero_closed_form(k).unwrap();
            let numeric = first_zero_numeric(k).unwrap().unwrap();
            assert!((closed - numeric).abs() <= AGREEMENT, "K={k}: {closed} vs {numeric}");
        }
        for k in [0.0, 0.1, 0.25] {
            assert_eq!(first_zero_numeric(k).unwrap(), None);
        }
    }

    #[test]
    fn sigma_json_field_names() {
        let json = serde_json::to_string(&sigma_lower_bound(0.0).unwrap()).unwrap();
        assert_eq!(json, r#"{"K":0.0,"sigma":1.0,"first_zero":null}"#);
    }

    #[test]
    fn focal_ratio_is_one_on_the_catalog() {
        for model in crate::catalog::standard_catalog() {
            let c = focal_strata_check(&model, 1.0).unwrap();
            assert_abs_diff_eq!(c.worst_ratio, 1.0, epsilon = 1e-12);
            assert!(c.passed);
        }
    }

    #[test]
    fn jbar_examples() {
        let torus = ShapeSpectrum::new(vec![(-1.0, 1), (1.0, 1)], AmbientKind::UnitSphere);
        assert_abs_diff_eq!(riccati_jbar(&torus, 0.5).unwrap(), 0.75, epsilon = 1e-15);
        assert_eq!(riccati_jbar(&torus, 0.0).unwrap(), 1.0);
        assert!(matches!(
            riccati_jbar(&torus, 1.5),
            Err(ComparisonError::BeyondSMax { s_max, .. }) if s_max == 1.0
        ));
        let theta = 0.8;
        for n in [2, 3, 5] {
            let sphere = ShapeSpectrum::new(vec![(-1.0 / theta, n - 1)], AmbientKind::Euclidean);
            assert_abs_diff_eq!(
                riccati_jbar(&sphere, theta / 2.0).unwrap(),
                1.5f64.powi(n as i32 - 1),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn volume_comparison_examples() {
        let model = FoliationModel::isoparametric_sphere(2, 1, 1).unwrap();
        let c = volume_local_max_check(&model).unwrap();
        assert!(c.passed);
        assert!(c.margin >= 0.0);
        // j̄(0.5) − j(0.5) for the Clifford torus
        let cmp = JacobiComparison::new(model.spectrum_at(std::f64::consts::FRAC_PI_4).unwrap());
        let j = (model.log_volume_density(std::f64::consts::FRAC_PI_4 + 0.5).unwrap()
            - model.log_volume_density(std::f64::consts::FRAC_PI_4).unwrap())
        .exp();
        assert_abs_diff_eq!(cmp.jbar_product(0.5).unwrap() - j, 0.75 - 1f64.cos(), epsilon = 1e-12);

        for model in crate::catalog::sphere_catalog() {
            assert!(volume_local_max_check(&model).unwrap().passed, "{model}");
        }
        assert!(matches!(
            volume_local_max_check(&FoliationModel::concentric_spheres(3).unwrap()),
            Err(ComparisonError::NotApplicable(_))
        ));
    }

    proptest! {
        #[test]
        fn sigma_matches_formula_and_decreases(k1 in 0.26f64..50.0, dk in 0.0f64..10.0) {
            let a = sigma_lower_bound(k1).unwrap().sigma;
            let b = sigma_lower_bound(k1 + dk).unwrap().sigma;
            prop_assert!(b <= a);
            let omega = (k1 - 0.25).sqrt();
            prop_assert!((a - (1.0 - (-std::f64::consts::PI / omega).exp())).abs() < 1e-15);
        }

        #[test]
        fn riccati_identity(
            pairs in prop::collection::vec((-3.0f64..1.0, 1usize..4), 1..5),
            frac in 0.0f64..0.999,
        ) {
            let spectrum = ShapeSpectrum::new(pairs, AmbientKind::UnitSphere);
            let cmp = JacobiComparison::new(spectrum.clone());
            let s = frac * cmp.s_max.min(1.0);
            let p = cmp.jbar_product(s).unwrap();
            let r = cmp.log_jbar_riccati(s).unwrap();
            prop_assert!((p.ln() - r).abs() <= AGREEMENT);
        }
    }
}
