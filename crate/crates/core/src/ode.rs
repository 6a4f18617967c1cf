//! Small fixed-dimension ODE steppers shared by the flow integrator, the
//! conjugate-point solver and the particle oracle.
//!
//! States are `[f64; N]` arrays. Right-hand sides return `None` when the
//! trial state leaves the domain of the vector field; adaptive drivers treat
//! that as a rejected step.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("vector field undefined at t = {t}")]
    Undefined { t: f64 },
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Difference between the 5th-order and embedded 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[inline]
fn axpy<const N: usize>(y: &[f64; N], terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (coef, k) in terms {
        for i in 0..N {
            out[i] += coef * k[i];
        }
    }
    out
}

/// Result of one Dormand–Prince trial step.
#[derive(Debug, Clone, Copy)]
pub struct Dp45Step<const N: usize> {
    pub y: [f64; N],
    pub err: [f64; N],
    /// Derivative at the new point (first stage of the next step).
    pub f_new: [f64; N],
}

/// One Dormand–Prince 5(4) step from `(t, y)` with derivative `f0 = f(t, y)`.
pub fn dp45_step<const N: usize, F>(
    f: &F,
    t: f64,
    y: &[f64; N],
    f0: &[f64; N],
    h: f64,
) -> Option<Dp45Step<N>>
where
    F: Fn(f64, &[f64; N]) -> Option<[f64; N]>,
{
    let k1 = *f0;
    let k2 = f(t + C2 * h, &axpy(y, &[(h * A21, &k1)]))?;
    let k3 = f(t + C3 * h, &axpy(y, &[(h * A31, &k1), (h * A32, &k2)]))?;
    let k4 = f(
        t + C4 * h,
        &axpy(y, &[(h * A41, &k1), (h * A42, &k2), (h * A43, &k3)]),
    )?;
    let k5 = f(
        t + C5 * h,
        &axpy(
            y,
            &[(h * A51, &k1), (h * A52, &k2), (h * A53, &k3), (h * A54, &k4)],
        ),
    )?;
    let k6 = f(
        t + h,
        &axpy(
            y,
            &[
                (h * A61, &k1),
                (h * A62, &k2),
                (h * A63, &k3),
                (h * A64, &k4),
                (h * A65, &k5),
            ],
        ),
    )?;
    let y_new = axpy(
        y,
        &[
            (h * A71, &k1),
            (h * A73, &k3),
            (h * A74, &k4),
            (h * A75, &k5),
            (h * A76, &k6),
        ],
    );
    if y_new.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let k7 = f(t + h, &y_new)?;
    let mut err = [0.0; N];
    for i in 0..N {
        err[i] = h
            * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    Some(Dp45Step {
        y: y_new,
        err,
        f_new: k7,
    })
}

/// Scaled RMS error norm used for step acceptance (accept when `<= 1`).
pub fn error_norm<const N: usize>(
    y: &[f64; N],
    y_new: &[f64; N],
    err: &[f64; N],
    rel_tol: f64,
    abs_tol: f64,
) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let scale = abs_tol + rel_tol * y[i].abs().max(y_new[i].abs());
        let e = err[i] / scale;
        acc += e * e;
    }
    (acc / N as f64).sqrt()
}

/// Step-size update factor from a scaled error norm.
pub fn step_factor(err_norm: f64) -> f64 {
    const SAFETY: f64 = 0.9;
    if err_norm == 0.0 {
        5.0
    } else {
        (SAFETY * err_norm.powf(-0.2)).clamp(0.2, 5.0)
    }
}

/// Integrate adaptively from `t0` to exactly `t1` (`t1 > t0`).
pub fn integrate_to<const N: usize, F>(
    f: &F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<[f64; N], OdeError>
where
    F: Fn(f64, &[f64; N]) -> Option<[f64; N]>,
{
    if t1 <= t0 {
        return Ok(y0);
    }
    let mut t = t0;
    let mut y = y0;
    let mut fy = f(t, &y).ok_or(OdeError::Undefined { t })?;
    let mut h = (t1 - t0) * 0.01;
    let h_min = 1e-15 * t1.abs().max(t0.abs()).max(1e-300);
    while t < t1 {
        let last = t + h >= t1;
        let h_try = if last { t1 - t } else { h };
        match dp45_step(f, t, &y, &fy, h_try) {
            Some(step) => {
                let en = error_norm(&y, &step.y, &step.err, rel_tol, abs_tol);
                if en <= 1.0 {
                    t = if last { t1 } else { t + h_try };
                    y = step.y;
                    fy = step.f_new;
                }
                h = h_try * step_factor(en);
            }
            None => h = h_try * 0.25,
        }
        if h < h_min && t < t1 {
            return Err(OdeError::StepUnderflow { t });
        }
    }
    Ok(y)
}

/// One classical fourth-order Runge–Kutta step.
pub fn rk4_step<const N: usize, F>(f: &F, t: f64, y: &[f64; N], h: f64) -> Option<[f64; N]>
where
    F: Fn(f64, &[f64; N]) -> Option<[f64; N]>,
{
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, &axpy(y, &[(0.5 * h, &k1)]))?;
    let k3 = f(t + 0.5 * h, &axpy(y, &[(0.5 * h, &k2)]))?;
    let k4 = f(t + h, &axpy(y, &[(h, &k3)]))?;
    Some(axpy(
        y,
        &[
            (h / 6.0, &k1),
            (h / 3.0, &k2),
            (h / 3.0, &k3),
            (h / 6.0, &k4),
        ],
    ))
}

/// Neumaier-compensated running sum, used for the time coordinate so that
/// tens of thousands of small steps do not drift.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new(start: f64) -> Self {
        Self {
            sum: start,
            comp: 0.0,
        }
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let f = |_t: f64, y: &[f64; 1]| Some([-y[0]]);
        let y = integrate_to(&f, 0.0, [1.0], 2.0, 1e-12, 1e-14).unwrap();
        assert!((y[0] - (-2.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn harmonic_oscillator_returns_after_full_period() {
        let f = |_t: f64, y: &[f64; 2]| Some([y[1], -y[0]]);
        let y = integrate_to(&f, 0.0, [0.0, 1.0], std::f64::consts::TAU, 1e-12, 1e-14).unwrap();
        assert!(y[0].abs() < 1e-10);
        assert!((y[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rk4_is_exact_for_cubic_polynomials() {
        let f = |t: f64, _y: &[f64; 1]| Some([3.0 * t * t]);
        let y = rk4_step(&f, 1.0, &[1.0], 0.5).unwrap();
        assert!((y[0] - 1.5f64.powi(3)).abs() < 1e-14);
    }

    #[test]
    fn undefined_field_is_reported() {
        let f = |_t: f64, _y: &[f64; 1]| None;
        assert!(matches!(
            integrate_to(&f, 0.0, [1.0], 1.0, 1e-8, 1e-10),
            Err(OdeError::Undefined { .. })
        ));
    }

    #[test]
    fn compensated_sum_beats_naive_summation() {
        let mut c = CompensatedSum::new(0.7);
        let mut naive = 0.7;
        for _ in 0..1_000_000 {
            c.add(1e-7);
            naive += 1e-7;
        }
        let exact = 0.8;
        assert!((c.value() - exact).abs() < 1e-15);
        assert!((c.value() - exact).abs() <= (naive - exact).abs());
    }
}
