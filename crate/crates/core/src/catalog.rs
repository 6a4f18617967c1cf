//! Foliation models with a one-dimensional leaf space.
//!
//! Every model is parametrized by the arc-length coordinate `θ` of its
//! quotient interval `(0, θ_max)`, measured from the lower singular leaf.
//! Shape operators are taken with respect to `+∂θ`, with the sign chosen so
//! that the trace equals `⟨H, ∂θ⟩`: a shrinking round leaf has negative
//! trace, and the trace is literally the reduced flow velocity `dθ/dt`.
//!
//! Volume densities are only defined up to a model-wide constant; callers
//! should use ratios and log-derivatives.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("θ = {theta} is not above the lower singular endpoint 0")]
    BelowLower { theta: f64 },
    #[error("θ = {theta} is not below the upper singular endpoint {theta_max}")]
    AboveUpper { theta: f64, theta_max: f64 },
    #[error("θ is not a number")]
    NotANumber,
    #[error("invalid model parameters: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmbientKind {
    Euclidean,
    UnitSphere,
}

/// Ambient manifold: `ℝⁿ` or the unit sphere `Sⁿ ⊂ ℝⁿ⁺¹`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AmbientSpace {
    pub kind: AmbientKind,
    pub dim: usize,
}

impl AmbientSpace {
    /// Dimension of the Euclidean space the ambient manifold sits in.
    pub fn embedding_dim(&self) -> usize {
        match self.kind {
            AmbientKind::Euclidean => self.dim,
            AmbientKind::UnitSphere => self.dim + 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelKind {
    /// Round spheres `Sⁿ⁻¹(θ)` around the origin of `ℝⁿ`.
    ConcentricSpheres { n: usize },
    /// Cylinders `Sᵏ(θ) × ℝⁿ⁻ᵏ⁻¹` in `ℝⁿ`.
    SphericalCylinders { k: usize, n: usize },
    /// Cartan–Münzner family in the unit sphere with `g` distinct principal
    /// curvatures and multiplicities alternating `m0, m1`.
    IsoparametricSphere { g: usize, m0: usize, m1: usize },
}

/// Which singular end of the quotient interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Lower,
    Upper,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Lower => Side::Upper,
            Side::Upper => Side::Lower,
        }
    }
}

/// A singular leaf at one end of the quotient interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingularEndpoint {
    pub coordinate: f64,
    /// `dim 𝓕 − dim L_q`.
    pub dimension_drop: usize,
    pub minimal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuotientInterval {
    pub theta_max: f64,
    pub lower: SingularEndpoint,
    pub upper: Option<SingularEndpoint>,
}

/// Eigenvalues of a shape operator with multiplicities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeSpectrum {
    pub eigenpairs: Vec<(f64, usize)>,
    /// Geometry in which normal geodesics run; decides how eigenvalues turn
    /// into focal distances.
    pub geometry: AmbientKind,
}

impl ShapeSpectrum {
    pub fn new(eigenpairs: Vec<(f64, usize)>, geometry: AmbientKind) -> Self {
        Self {
            eigenpairs,
            geometry,
        }
    }

    pub fn dim(&self) -> usize {
        self.eigenpairs.iter().map(|&(_, m)| m).sum()
    }

    pub fn trace(&self) -> f64 {
        self.eigenpairs.iter().map(|&(l, m)| m as f64 * l).sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.eigenpairs
            .iter()
            .map(|&(l, _)| l.abs())
            .fold(0.0, f64::max)
    }

    /// Spectrum with respect to the opposite unit normal.
    pub fn negated(&self) -> Self {
        Self {
            eigenpairs: self.eigenpairs.iter().map(|&(l, m)| (-l, m)).collect(),
            geometry: self.geometry,
        }
    }

    /// Largest positive eigenvalue, if any.
    pub fn max_positive(&self) -> Option<f64> {
        self.eigenpairs
            .iter()
            .map(|&(l, _)| l)
            .filter(|&l| l > 0.0)
            .fold(None, |acc: Option<f64>, l| Some(acc.map_or(l, |a| a.max(l))))
    }

    /// Signed distance to the nearest focal point contributed by each
    /// eigenvalue; positive values lie in the direction of the normal.
    ///
    /// Flat geometry gives `1/λ` (zero eigenvalues contribute nothing). Along
    /// great circles of the unit sphere the focal point sits at `atan(1/λ)`,
    /// and a zero eigenvalue has its focal points a quarter circle away.
    pub fn focal_distances(&self) -> Vec<f64> {
        self.eigenpairs
            .iter()
            .filter_map(|&(l, _)| match self.geometry {
                AmbientKind::Euclidean => (l != 0.0).then(|| l.recip()),
                AmbientKind::UnitSphere => Some(if l == 0.0 {
                    FRAC_PI_2
                } else {
                    l.recip().atan()
                }),
            })
            .collect()
    }

    /// Distance from the leaf to its nearest focal point (in either normal
    /// direction); `None` for totally geodesic flat leaves.
    pub fn first_focal_distance(&self) -> Option<f64> {
        self.focal_distances()
            .into_iter()
            .map(f64::abs)
            .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.min(d))))
    }
}

/// A closed foliation with one-dimensional quotient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FoliationModel {
    kind: ModelKind,
    ambient: AmbientSpace,
}

impl fmt::Display for FoliationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ModelKind::ConcentricSpheres { n } => write!(f, "concentric_spheres(n={n})"),
            ModelKind::SphericalCylinders { k, n } => {
                write!(f, "spherical_cylinders(k={k},n={n})")
            }
            ModelKind::IsoparametricSphere { g, m0, m1 } => {
                write!(f, "isoparametric_sphere(g={g},m0={m0},m1={m1})")
            }
        }
    }
}

/// Per-term data `(cot, sin, multiplicity)` of the sphere family, where the
/// `k`-th eigenvalue with respect to `+∂θ` is `−cot(θ + kπ/g)`.
///
/// For the upper side the angles are formed as `jπ/g − r` and the term that
/// degenerates at `θ_max` is evaluated directly in `r`, so that distances to
/// either endpoint keep full relative precision.
fn sphere_terms(g: usize, m0: usize, m1: usize, side: Side, r: f64) -> Vec<(f64, f64, usize)> {
    let step = PI / g as f64;
    (0..g)
        .map(|k| {
            let m = if k % 2 == 0 { m0 } else { m1 };
            let (c, s) = match side {
                Side::Lower => {
                    let a = r + k as f64 * step;
                    (a.cos() / a.sin(), a.sin())
                }
                Side::Upper if k + 1 == g => (-(r.cos() / r.sin()), r.sin()),
                Side::Upper => {
                    let a = (k + 1) as f64 * step - r;
                    (a.cos() / a.sin(), a.sin())
                }
            };
            (c, s, m)
        })
        .collect()
}

/// Largest ambient dimension accepted by the constructors.
pub const MAX_DIM: usize = 10_000;

fn check_dim(dim: usize) -> Result<(), CatalogError> {
    if dim > MAX_DIM {
        return Err(CatalogError::InvalidModel(format!(
            "ambient dimension {dim} exceeds the supported maximum {MAX_DIM}"
        )));
    }
    Ok(())
}

impl FoliationModel {
    pub fn concentric_spheres(n: usize) -> Result<Self, CatalogError> {
        check_dim(n)?;
        if n < 2 {
            return Err(CatalogError::InvalidModel(format!(
                "concentric spheres need ambient dimension n >= 2, got {n}"
            )));
        }
        Ok(Self {
            kind: ModelKind::ConcentricSpheres { n },
            ambient: AmbientSpace {
                kind: AmbientKind::Euclidean,
                dim: n,
            },
        })
    }

    pub fn spherical_cylinders(k: usize, n: usize) -> Result<Self, CatalogError> {
        check_dim(n)?;
        if k < 1 || n < k + 2 {
            return Err(CatalogError::InvalidModel(format!(
                "spherical cylinders need 1 <= k <= n - 2, got k={k}, n={n}"
            )));
        }
        Ok(Self {
            kind: ModelKind::SphericalCylinders { k, n },
            ambient: AmbientSpace {
                kind: AmbientKind::Euclidean,
                dim: n,
            },
        })
    }

    pub fn isoparametric_sphere(g: usize, m0: usize, m1: usize) -> Result<Self, CatalogError> {
        if !(1..=3).contains(&g) {
            return Err(CatalogError::InvalidModel(format!(
                "only g in {{1, 2, 3}} is supported, got g={g}"
            )));
        }
        check_dim(m0.max(m1))?;
        if m0 == 0 || m1 == 0 {
            return Err(CatalogError::InvalidModel(
                "multiplicities must be positive".into(),
            ));
        }
        if g % 2 == 1 && m0 != m1 {
            return Err(CatalogError::InvalidModel(format!(
                "odd g forces m1 = m0, got m0={m0}, m1={m1}"
            )));
        }
        if g == 3 && ![1, 2, 4, 8].contains(&m0) {
            log::warn!("g=3 with multiplicity {m0} does not occur in Cartan's list; simulating anyway");
        }
        let leaf_dim = if g.is_multiple_of(2) { g / 2 * (m0 + m1) } else { g * m0 };
        check_dim(leaf_dim + 1)?;
        Ok(Self {
            kind: ModelKind::IsoparametricSphere { g, m0, m1 },
            ambient: AmbientSpace {
                kind: AmbientKind::UnitSphere,
                dim: leaf_dim + 1,
            },
        })
    }

    /// Validating constructor from a bare kind.
    pub fn from_kind(kind: ModelKind) -> Result<Self, CatalogError> {
        match kind {
            ModelKind::ConcentricSpheres { n } => Self::concentric_spheres(n),
            ModelKind::SphericalCylinders { k, n } => Self::spherical_cylinders(k, n),
            ModelKind::IsoparametricSphere { g, m0, m1 } => Self::isoparametric_sphere(g, m0, m1),
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn ambient(&self) -> AmbientSpace {
        self.ambient
    }

    pub fn is_sphere(&self) -> bool {
        self.ambient.kind == AmbientKind::UnitSphere
    }

    /// Dimension of the regular leaves.
    pub fn leaf_dim(&self) -> usize {
        self.ambient.dim - 1
    }

    pub fn theta_max(&self) -> f64 {
        match self.kind {
            ModelKind::IsoparametricSphere { g, .. } => PI / g as f64,
            _ => f64::INFINITY,
        }
    }

    /// Natural length scale of the quotient; `None` for the unbounded flat
    /// models, whose scale is set by the initial leaf.
    pub fn interval_scale(&self) -> Option<f64> {
        self.is_sphere().then(|| self.theta_max())
    }

    pub fn lower_endpoint(&self) -> SingularEndpoint {
        let dimension_drop = match self.kind {
            ModelKind::ConcentricSpheres { n } => n - 1,
            ModelKind::SphericalCylinders { k, .. } => k,
            ModelKind::IsoparametricSphere { m0, .. } => m0,
        };
        SingularEndpoint {
            coordinate: 0.0,
            dimension_drop,
            minimal: true,
        }
    }

    pub fn upper_endpoint(&self) -> Option<SingularEndpoint> {
        match self.kind {
            ModelKind::IsoparametricSphere { g, m0, m1 } => Some(SingularEndpoint {
                coordinate: self.theta_max(),
                dimension_drop: if (g - 1) % 2 == 0 { m0 } else { m1 },
                minimal: true,
            }),
            _ => None,
        }
    }

    pub fn endpoint(&self, side: Side) -> Option<SingularEndpoint> {
        match side {
            Side::Lower => Some(self.lower_endpoint()),
            Side::Upper => self.upper_endpoint(),
        }
    }

    /// Side of the quotient interval an endpoint record belongs to.
    pub fn side_of(&self, endpoint: &SingularEndpoint) -> Option<Side> {
        if endpoint.coordinate == 0.0 {
            Some(Side::Lower)
        } else if self.upper_endpoint().is_some() && endpoint.coordinate == self.theta_max() {
            Some(Side::Upper)
        } else {
            None
        }
    }

    pub fn quotient_interval(&self) -> QuotientInterval {
        QuotientInterval {
            theta_max: self.theta_max(),
            lower: self.lower_endpoint(),
            upper: self.upper_endpoint(),
        }
    }

    /// Coordinate of the unique regular minimal leaf, if the model has one.
    pub fn minimal_leaf(&self) -> Option<f64> {
        match self.kind {
            ModelKind::IsoparametricSphere { g: 1, .. } => Some(FRAC_PI_2),
            // m0·cot θ = m1·tan θ
            ModelKind::IsoparametricSphere { g: 2, m0, m1 } => {
                Some((m0 as f64 / m1 as f64).sqrt().atan())
            }
            // equal multiplicities: the trace is −3m·cot 3θ
            ModelKind::IsoparametricSphere { g: 3, .. } => Some(PI / 6.0),
            _ => None,
        }
    }

    pub fn check_theta(&self, theta: f64) -> Result<(), CatalogError> {
        if theta.is_nan() {
            return Err(CatalogError::NotANumber);
        }
        if theta <= 0.0 {
            return Err(CatalogError::BelowLower { theta });
        }
        let theta_max = self.theta_max();
        if theta >= theta_max {
            return Err(CatalogError::AboveUpper { theta, theta_max });
        }
        Ok(())
    }

    /// Distance from `θ` to the singular leaf on `side` (infinite for the
    /// missing upper end of flat models).
    pub fn distance_to(&self, side: Side, theta: f64) -> f64 {
        match side {
            Side::Lower => theta,
            Side::Upper => self.theta_max() - theta,
        }
    }

    /// Distance from the leaf at `θ` to the union of singular leaves.
    pub fn strata_distance(&self, theta: f64) -> f64 {
        theta.min(self.theta_max() - theta)
    }

    fn nearest_side(&self, theta: f64) -> Side {
        if self.is_sphere() && theta > 0.5 * self.theta_max() {
            Side::Upper
        } else {
            Side::Lower
        }
    }

    /// Spectrum of `A_{∇r}` at distance `r` from the singular leaf on
    /// `side`, where `∇r` points away from that leaf.
    pub fn spectrum_from(&self, side: Side, r: f64) -> Result<ShapeSpectrum, CatalogError> {
        let theta = self.theta_from(side, r);
        self.check_theta(theta)?;
        let eigenpairs = match self.kind {
            ModelKind::ConcentricSpheres { n } => vec![(-r.recip(), n - 1)],
            ModelKind::SphericalCylinders { k, n } => vec![(-r.recip(), k), (0.0, n - k - 1)],
            ModelKind::IsoparametricSphere { g, m0, m1 } => {
                let sign = match side {
                    Side::Lower => -1.0,
                    Side::Upper => 1.0,
                };
                sphere_terms(g, m0, m1, side, r)
                    .into_iter()
                    .map(|(c, _, m)| (sign * c, m))
                    .collect()
            }
        };
        Ok(ShapeSpectrum::new(eigenpairs, self.ambient.kind))
    }

    /// `tr A_{∇r}` at distance `r` from the singular leaf on `side`; this is
    /// `dr/dt` along the reduced flow.
    pub fn radial_trace(&self, side: Side, r: f64) -> Result<f64, CatalogError> {
        let theta = self.theta_from(side, r);
        self.check_theta(theta)?;
        Ok(match self.kind {
            ModelKind::ConcentricSpheres { n } => (n - 1) as f64 * -r.recip(),
            ModelKind::SphericalCylinders { k, .. } => k as f64 * -r.recip(),
            ModelKind::IsoparametricSphere { g, m0, m1 } => {
                let sign = match side {
                    Side::Lower => -1.0,
                    Side::Upper => 1.0,
                };
                sphere_terms(g, m0, m1, side, r)
                    .into_iter()
                    .map(|(c, _, m)| m as f64 * (sign * c))
                    .sum()
            }
        })
    }

    /// `log V` at distance `r` from the singular leaf on `side`.
    pub fn log_volume_from(&self, side: Side, r: f64) -> Result<f64, CatalogError> {
        let theta = self.theta_from(side, r);
        self.check_theta(theta)?;
        Ok(match self.kind {
            ModelKind::ConcentricSpheres { n } => (n - 1) as f64 * r.ln(),
            ModelKind::SphericalCylinders { k, .. } => k as f64 * r.ln(),
            ModelKind::IsoparametricSphere { g, m0, m1 } => sphere_terms(g, m0, m1, side, r)
                .into_iter()
                .map(|(_, s, m)| m as f64 * s.ln())
                .sum(),
        })
    }

    fn theta_from(&self, side: Side, r: f64) -> f64 {
        match side {
            Side::Lower => r,
            Side::Upper => self.theta_max() - r,
        }
    }

    /// Eigenvalues of `A_{∂θ}` at `θ`.
    pub fn spectrum_at(&self, theta: f64) -> Result<ShapeSpectrum, CatalogError> {
        self.check_theta(theta)?;
        match self.nearest_side(theta) {
            Side::Lower => self.spectrum_from(Side::Lower, theta),
            Side::Upper => Ok(self
                .spectrum_from(Side::Upper, self.theta_max() - theta)?
                .negated()),
        }
    }

    /// `tr A_{∂θ}(θ)`, the reduced mean curvature flow velocity `dθ/dt`.
    pub fn mean_curvature_trace(&self, theta: f64) -> Result<f64, CatalogError> {
        self.check_theta(theta)?;
        match self.nearest_side(theta) {
            Side::Lower => self.radial_trace(Side::Lower, theta),
            Side::Upper => Ok(-self.radial_trace(Side::Upper, self.theta_max() - theta)?),
        }
    }

    /// Leaf volume up to a model-wide constant: `θⁿ⁻¹`, `θᵏ`, or
    /// `∏ sin^{m_k}(θ + kπ/g)`.
    pub fn volume_density(&self, theta: f64) -> Result<f64, CatalogError> {
        Ok(self.log_volume_density(theta)?.exp())
    }

    pub fn log_volume_density(&self, theta: f64) -> Result<f64, CatalogError> {
        self.check_theta(theta)?;
        let side = self.nearest_side(theta);
        self.log_volume_from(side, self.distance_to(side, theta))
    }

    /// `d/dθ log V`, written out from the product formula rather than from
    /// the spectrum.
    pub fn log_volume_gradient(&self, theta: f64) -> Result<f64, CatalogError> {
        self.check_theta(theta)?;
        Ok(match self.kind {
            ModelKind::ConcentricSpheres { n } => (n - 1) as f64 / theta,
            ModelKind::SphericalCylinders { k, .. } => k as f64 / theta,
            ModelKind::IsoparametricSphere { g, m0, m1 } => (0..g)
                .map(|k| {
                    let m = if k % 2 == 0 { m0 } else { m1 };
                    let a = theta + k as f64 * PI / g as f64;
                    m as f64 * a.cos() / a.sin()
                })
                .sum(),
        })
    }
}

/// Models every experiment in this crate runs on.
pub fn standard_catalog() -> Vec<FoliationModel> {
    let mut out = Vec::new();
    for n in [2, 3, 5] {
        out.push(FoliationModel::concentric_spheres(n).expect("valid"));
    }
    for (k, n) in [(1, 3), (2, 4)] {
        out.push(FoliationModel::spherical_cylinders(k, n).expect("valid"));
    }
    out.extend(sphere_catalog());
    out
}

/// The compact (unit sphere) part of [`standard_catalog`].
pub fn sphere_catalog() -> Vec<FoliationModel> {
    [
        (1, 1, 1),
        (1, 2, 2),
        (2, 1, 1),
        (2, 1, 2),
        (2, 2, 3),
        (3, 1, 1),
        (3, 2, 2),
        (3, 4, 4),
        (3, 8, 8),
    ]
    .into_iter()
    .map(|(g, m0, m1)| FoliationModel::isoparametric_sphere(g, m0, m1).expect("valid"))
    .collect()
}
