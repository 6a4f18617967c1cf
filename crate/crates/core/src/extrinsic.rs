//! Level-set realizations of the catalog models, used as an independent
//! oracle: shape operators and mean curvatures are computed from ambient
//! gradients and Hessians, never from the catalog's closed-form spectra.
//!
//! Sphere-ambient functions live on `ℝⁿ⁺¹` and are restricted to the unit
//! sphere; all tangent-space computations happen in the embedding.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::catalog::{AmbientKind, AmbientSpace, FoliationModel, ModelKind};

/// Tangential gradients below this norm are treated as singular points.
pub const SINGULAR_GRADIENT: f64 = 1e-10;

/// Largest tolerated asymmetry of a computed shape operator.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtrinsicError {
    #[error("singular point: tangential gradient norm {norm:e} is below threshold")]
    SingularPoint { norm: f64 },
    #[error("shape operator is not symmetric (defect {defect:e})")]
    Asymmetric { defect: f64 },
    #[error("point is not on the unit sphere (|x| = {norm})")]
    NotOnSphere { norm: f64 },
    #[error("point has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("level set has no quotient chart")]
    NoChart,
    #[error("could not place a point on the leaf θ = {theta}")]
    Placement { theta: f64 },
}

/// A function whose level sets are the leaves of a foliation.
pub trait LevelSetFunction: Send + Sync {
    fn ambient(&self) -> AmbientSpace;
    fn evaluate(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// `+1` if the quotient coordinate grows with the function value, `-1`
    /// if it decreases. Fixes the orientation of `∇r`.
    fn orientation(&self) -> f64;

    fn model(&self) -> Option<FoliationModel> {
        None
    }

    /// Quotient coordinate `θ(x)` when the function is linked to a model.
    fn quotient_coordinate(&self, _x: &DVector<f64>) -> Option<f64> {
        None
    }
}

/// `Σ_{i<active} xᵢ²` on `ℝⁿ`: concentric spheres (`active = n`) or
/// spherical cylinders (`active = k + 1`).
#[derive(Debug, Clone)]
pub struct SumOfSquares {
    model: FoliationModel,
    active: usize,
}

impl SumOfSquares {
    pub fn new(model: FoliationModel) -> Option<Self> {
        let active = match model.kind() {
            ModelKind::ConcentricSpheres { n } => n,
            ModelKind::SphericalCylinders { k, .. } => k + 1,
            _ => return None,
        };
        Some(Self { model, active })
    }
}

impl LevelSetFunction for SumOfSquares {
    fn ambient(&self) -> AmbientSpace {
        self.model.ambient()
    }

    fn evaluate(&self, x: &DVector<f64>) -> f64 {
        x.rows(0, self.active).norm_squared()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(x.len(), |i, _| if i < self.active { 2.0 * x[i] } else { 0.0 })
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.len(), x.len(), |i, j| {
            if i == j && i < self.active {
                2.0
            } else {
                0.0
            }
        })
    }

    fn orientation(&self) -> f64 {
        1.0
    }

    fn model(&self) -> Option<FoliationModel> {
        Some(self.model)
    }

    fn quotient_coordinate(&self, x: &DVector<f64>) -> Option<f64> {
        Some(x.rows(0, self.active).norm())
    }
}

/// Height function `x₀` on `Sⁿ`: leaves are the latitude spheres (`g = 1`).
#[derive(Debug, Clone)]
pub struct HeightFunction {
    model: FoliationModel,
}

impl LevelSetFunction for HeightFunction {
    fn ambient(&self) -> AmbientSpace {
        self.model.ambient()
    }

    fn evaluate(&self, x: &DVector<f64>) -> f64 {
        x[0]
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(x.len());
        g[0] = 1.0;
        g
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(x.len(), x.len())
    }

    fn orientation(&self) -> f64 {
        -1.0
    }

    fn model(&self) -> Option<FoliationModel> {
        Some(self.model)
    }

    fn quotient_coordinate(&self, x: &DVector<f64>) -> Option<f64> {
        Some(x.rows(1, x.len() - 1).norm().atan2(x[0]))
    }
}

/// `|u|² − |v|²` with `x = (u, v)`, `u ∈ ℝ^{m1+1}`, `v ∈ ℝ^{m0+1}`; its
/// level sets in the sphere are the products `S^{m1}(cos θ) × S^{m0}(sin θ)`.
#[derive(Debug, Clone)]
pub struct CliffordQuadric {
    model: FoliationModel,
    split: usize,
}

impl LevelSetFunction for CliffordQuadric {
    fn ambient(&self) -> AmbientSpace {
        self.model.ambient()
    }

    fn evaluate(&self, x: &DVector<f64>) -> f64 {
        let u = x.rows(0, self.split).norm_squared();
        let v = x.rows(self.split, x.len() - self.split).norm_squared();
        u - v
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(x.len(), |i, _| {
            if i < self.split {
                2.0 * x[i]
            } else {
                -2.0 * x[i]
            }
        })
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.len(), x.len(), |i, j| match (i == j, i < self.split) {
            (true, true) => 2.0,
            (true, false) => -2.0,
            _ => 0.0,
        })
    }

    fn orientation(&self) -> f64 {
        -1.0
    }

    fn model(&self) -> Option<FoliationModel> {
        Some(self.model)
    }

    fn quotient_coordinate(&self, x: &DVector<f64>) -> Option<f64> {
        let u = x.rows(0, self.split).norm();
        let v = x.rows(self.split, x.len() - self.split).norm();
        Some(v.atan2(u))
    }
}

/// Cartan's harmonic cubic on `ℝ⁵`; its level sets in `S⁴` are the `g = 3`,
/// `m = 1` isoparametric hypersurfaces, with `F|_{S⁴} = cos 3θ`.
#[derive(Debug, Clone)]
pub struct CartanCubic {
    model: FoliationModel,
}

const HALF_3_SQRT_3: f64 = 2.598_076_211_353_316; // 3√3/2

impl LevelSetFunction for CartanCubic {
    fn ambient(&self) -> AmbientSpace {
        self.model.ambient()
    }

    fn evaluate(&self, x: &DVector<f64>) -> f64 {
        let (x1, x2, x3, x4, x5) = (x[0], x[1], x[2], x[3], x[4]);
        x1.powi(3)
            + 1.5 * x1 * (x2 * x2 + x3 * x3 - 2.0 * x4 * x4 - 2.0 * x5 * x5)
            + HALF_3_SQRT_3 * (x4 * (x2 * x2 - x3 * x3) + 2.0 * x2 * x3 * x5)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let (x1, x2, x3, x4, x5) = (x[0], x[1], x[2], x[3], x[4]);
        let b = HALF_3_SQRT_3;
        DVector::from_vec(vec![
            3.0 * x1 * x1 + 1.5 * (x2 * x2 + x3 * x3 - 2.0 * x4 * x4 - 2.0 * x5 * x5),
            3.0 * x1 * x2 + b * (2.0 * x4 * x2 + 2.0 * x3 * x5),
            3.0 * x1 * x3 + b * (-2.0 * x4 * x3 + 2.0 * x2 * x5),
            -6.0 * x1 * x4 + b * (x2 * x2 - x3 * x3),
            -6.0 * x1 * x5 + b * 2.0 * x2 * x3,
        ])
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (x1, x2, x3, x4, x5) = (x[0], x[1], x[2], x[3], x[4]);
        let b = HALF_3_SQRT_3;
        #[rustfmt::skip]
        let h = [
            6.0 * x1, 3.0 * x2, 3.0 * x3, -6.0 * x4, -6.0 * x5,
            3.0 * x2, 3.0 * x1 + 2.0 * b * x4, 2.0 * b * x5, 2.0 * b * x2, 2.0 * b * x3,
            3.0 * x3, 2.0 * b * x5, 3.0 * x1 - 2.0 * b * x4, -2.0 * b * x3, 2.0 * b * x2,
            -6.0 * x4, 2.0 * b * x2, -2.0 * b * x3, -6.0 * x1, 0.0,
            -6.0 * x5, 2.0 * b * x3, 2.0 * b * x2, 0.0, -6.0 * x1,
        ];
        DMatrix::from_row_slice(5, 5, &h)
    }

    fn orientation(&self) -> f64 {
        -1.0
    }

    fn model(&self) -> Option<FoliationModel> {
        Some(self.model)
    }

    fn quotient_coordinate(&self, x: &DVector<f64>) -> Option<f64> {
        // On the sphere |∇ˢF|² = 9(1 − F²), so this is arccos(F)/3 without
        // the loss of precision near the focal sets.
        let f = self.evaluate(x);
        let g = tangential_gradient(self, x).norm();
        Some((g / 3.0).atan2(f) / 3.0)
    }
}

/// Replaces the analytic derivatives of a level set by central differences
/// with step `h = ε^{1/3}(1 + |x|)`.
pub struct FiniteDifference<L> {
    inner: L,
}

impl<L: LevelSetFunction> FiniteDifference<L> {
    pub fn new(inner: L) -> Self {
        Self { inner }
    }

    fn step(x: &DVector<f64>) -> f64 {
        f64::EPSILON.cbrt() * (1.0 + x.norm())
    }
}

impl<L: LevelSetFunction> LevelSetFunction for FiniteDifference<L> {
    fn ambient(&self) -> AmbientSpace {
        self.inner.ambient()
    }

    fn evaluate(&self, x: &DVector<f64>) -> f64 {
        self.inner.evaluate(x)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let h = Self::step(x);
        DVector::from_fn(x.len(), |i, _| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            (self.inner.evaluate(&xp) - self.inner.evaluate(&xm)) / (2.0 * h)
        })
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let h = Self::step(x);
        let n = x.len();
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let col = (self.inner.gradient(&xp) - self.inner.gradient(&xm)) / (2.0 * h);
            out.set_column(j, &col);
        }
        out
    }

    fn orientation(&self) -> f64 {
        self.inner.orientation()
    }

    fn model(&self) -> Option<FoliationModel> {
        self.inner.model()
    }

    fn quotient_coordinate(&self, x: &DVector<f64>) -> Option<f64> {
        self.inner.quotient_coordinate(x)
    }
}

/// Level-set realization of a catalog model, where one is implemented.
pub fn level_set_for(model: FoliationModel) -> Option<Box<dyn LevelSetFunction>> {
    match model.kind() {
        ModelKind::ConcentricSpheres { .. } | ModelKind::SphericalCylinders { .. } => {
            SumOfSquares::new(model).map(|f| Box::new(f) as Box<dyn LevelSetFunction>)
        }
        ModelKind::IsoparametricSphere { g: 1, .. } => Some(Box::new(HeightFunction { model })),
        ModelKind::IsoparametricSphere { g: 2, m1, .. } => Some(Box::new(CliffordQuadric {
            model,
            split: m1 + 1,
        })),
        ModelKind::IsoparametricSphere { g: 3, m0: 1, .. } => Some(Box::new(CartanCubic { model })),
        _ => None,
    }
}

fn check_point<F: LevelSetFunction + ?Sized>(f: &F, x: &DVector<f64>) -> Result<(), ExtrinsicError> {
    let expected = f.ambient().embedding_dim();
    if x.len() != expected {
        return Err(ExtrinsicError::DimensionMismatch {
            expected,
            got: x.len(),
        });
    }
    if f.ambient().kind == AmbientKind::UnitSphere {
        let norm = x.norm();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(ExtrinsicError::NotOnSphere { norm });
        }
    }
    Ok(())
}

/// Gradient of `F` restricted to the ambient manifold.
pub fn tangential_gradient<F: LevelSetFunction + ?Sized>(f: &F, x: &DVector<f64>) -> DVector<f64> {
    let g = f.gradient(x);
    match f.ambient().kind {
        AmbientKind::Euclidean => g,
        AmbientKind::UnitSphere => {
            let radial = g.dot(x) / x.norm_squared();
            g - x * radial
        }
    }
}

/// Unit normal of the leaf through `x`, oriented as `+∇r`.
pub fn unit_normal<F: LevelSetFunction + ?Sized>(
    f: &F,
    x: &DVector<f64>,
) -> Result<DVector<f64>, ExtrinsicError> {
    check_point(f, x)?;
    let g = tangential_gradient(f, x);
    let norm = g.norm();
    if norm < SINGULAR_GRADIENT {
        return Err(ExtrinsicError::SingularPoint { norm });
    }
    Ok(g * (f.orientation() / norm))
}

/// Orthonormal vectors normal to the leaf inside the embedding space, the
/// unit normal last.
fn leaf_normals<F: LevelSetFunction + ?Sized>(
    f: &F,
    x: &DVector<f64>,
) -> Result<Vec<DVector<f64>>, ExtrinsicError> {
    let nu = unit_normal(f, x)?;
    Ok(match f.ambient().kind {
        AmbientKind::Euclidean => vec![nu],
        AmbientKind::UnitSphere => vec![x.normalize(), nu],
    })
}

/// Orthonormal basis of the orthogonal complement of `normals`, by
/// Gram–Schmidt over the coordinate vectors picking the largest residual
/// first.
fn complement_basis(normals: &[DVector<f64>], dim: usize) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(dim - normals.len());
    let mut candidates: Vec<DVector<f64>> = (0..dim)
        .map(|i| {
            let mut e = DVector::zeros(dim);
            e[i] = 1.0;
            e
        })
        .collect();
    let project = |v: &mut DVector<f64>, against: &DVector<f64>| {
        let c = v.dot(against);
        v.axpy(-c, against, 1.0);
    };
    for c in candidates.iter_mut() {
        for n in normals {
            project(c, n);
        }
    }
    while basis.len() < dim - normals.len() {
        let (idx, _) = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.norm()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty");
        let mut v = candidates.swap_remove(idx);
        // second pass for orthogonality
        for n in normals {
            project(&mut v, n);
        }
        for b in &basis {
            project(&mut v, b);
        }
        let v = v.normalize();
        for c in candidates.iter_mut() {
            project(c, &v);
        }
        basis.push(v);
    }
    basis
}

/// Matrix whose compression to the leaf tangent space is `A_ν`, together
/// with the scalar factor: `A_ν = factor · Pᵀ M P`.
fn weingarten_data<F: LevelSetFunction + ?Sized>(
    f: &F,
    x: &DVector<f64>,
) -> Result<(DMatrix<f64>, f64), ExtrinsicError> {
    let mut m = f.hessian(x);
    let g = tangential_gradient(f, x);
    let norm = g.norm();
    if norm < SINGULAR_GRADIENT {
        return Err(ExtrinsicError::SingularPoint { norm });
    }
    if f.ambient().kind == AmbientKind::UnitSphere {
        // second fundamental form of Sⁿ ⊂ ℝⁿ⁺¹
        let radial = f.gradient(x).dot(x);
        for i in 0..m.nrows() {
            m[(i, i)] -= radial;
        }
    }
    Ok((m, -f.orientation() / norm))
}

/// Shape operator of the leaf through a point, in an orthonormal basis of
/// the leaf tangent space, with its eigen-decomposition.
#[derive(Debug, Clone)]
pub struct ShapeOperator {
    pub basis: Vec<DVector<f64>>,
    pub matrix: DMatrix<f64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenvectors expressed in the embedding space.
    pub eigenvectors: DMatrix<f64>,
}

impl ShapeOperator {
    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Signed focal distances from the eigenvalues, using flat (`1/λ`) or
    /// spherical (`atan(1/λ)`) normal geodesics.
    pub fn focal_distances(&self, geometry: AmbientKind) -> Vec<f64> {
        let spectrum = crate::catalog::ShapeSpectrum::new(
            self.eigenvalues.iter().map(|&l| (l, 1)).collect(),
            geometry,
        );
        spectrum.focal_distances()
    }
}

/// `A_ν = −P (Hess F) P / |∇F|` on the leaf tangent space (with the sphere
/// correction `Hess F − ⟨∇F, x⟩ I` for sphere ambients), `ν = +∇r`.
pub fn shape_operator<F: LevelSetFunction + ?Sized>(
    f: &F,
    x: &DVector<f64>,
) -> Result<ShapeOperator, ExtrinsicError> {
    let normals = leaf_normals(f, x)?;
    let (m, factor) = weingarten_data(f, x)?;
    let basis = complement_basis(&normals, x.len());
    let d = basis.len();
    let mut a = DMatrix::zeros(d, d);
    for (i, bi) in basis.iter().enumerate() {
        let mbi = &m * bi;
        for (j, bj) in basis.iter().enumerate() {
            a[(j, i)] = factor * bj.dot(&mbi);
        }
    }
    let defect = (&a - a.transpose()).amax();
    if defect > SYMMETRY_TOLERANCE * (1.0 + a.amax()) {
        return Err(ExtrinsicError::Asymmetric { defect });
    }
    let sym = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut eigenvectors = DMatrix::zeros(x.len(), d);
    for (col, &i) in order.iter().enumerate() {
        let mut v = DVector::zeros(x.len());
        for (k, bk) in basis.iter().enumerate() {
            v.axpy(eig.eigenvectors[(k, i)], bk, 1.0);
        }
        eigenvectors.set_column(col, &v);
    }
    Ok(ShapeOperator {
        basis,
        matrix: sym,
        eigenvalues,
        eigenvectors,
    })
}

/// `tr A_{∇r}` at `x`, i.e. `⟨H, ∇r⟩`.
///
/// Computed as the full trace minus the normal components, without an
/// eigen-decomposition.
pub fn trace_radial<F: LevelSetFunction + ?Sized>(
    f: &F,
    x: &DVector<f64>,
) -> Result<f64, ExtrinsicError> {
    let normals = leaf_normals(f, x)?;
    let (m, factor) = weingarten_data(f, x)?;
    let normal_part: f64 = normals.iter().map(|n| n.dot(&(&m * n))).sum();
    Ok(factor * (m.trace() - normal_part))
}

/// Mean curvature vector `H = (tr A_ν) ν` of the codimension-one leaf.
pub fn mean_curvature_vector<F: LevelSetFunction + ?Sized>(
    f: &F,
    x: &DVector<f64>,
) -> Result<DVector<f64>, ExtrinsicError> {
    let nu = unit_normal(f, x)?;
    Ok(nu * trace_radial(f, x)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParticleTermination {
    Completed,
    /// The next step would have entered the singular set.
    SingularSet { t: f64 },
}

#[derive(Debug, Clone)]
pub struct ParticlePath {
    pub times: Vec<f64>,
    pub points: Vec<DVector<f64>>,
    pub termination: ParticleTermination,
}

impl ParticlePath {
    pub fn last(&self) -> (f64, &DVector<f64>) {
        (
            *self.times.last().expect("non-empty"),
            self.points.last().expect("non-empty"),
        )
    }
}

/// Follow a single point under `dx/dt = H(x)` with fixed-step RK4. On sphere
/// ambients the point is pulled back to the sphere after every step.
pub fn particle_mcf_flow<F: LevelSetFunction + ?Sized>(
    f: &F,
    x0: &DVector<f64>,
    t_end: f64,
    dt: f64,
) -> Result<ParticlePath, ExtrinsicError> {
    unit_normal(f, x0)?;
    let sphere = f.ambient().kind == AmbientKind::UnitSphere;
    let mut times = vec![0.0];
    let mut points = vec![x0.clone()];
    if t_end <= 0.0 {
        return Ok(ParticlePath {
            times,
            points,
            termination: ParticleTermination::Completed,
        });
    }
    let steps = (t_end / dt).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    // Stage points are pulled back to the sphere before evaluation.
    let velocity = |x: &DVector<f64>| {
        if sphere {
            mean_curvature_vector(f, &x.normalize()).ok()
        } else {
            mean_curvature_vector(f, x).ok()
        }
    };
    // The step must stay well inside the curvature radius of the leaf:
    // |H|·|A|·h is bounded by a Frobenius estimate of |A|.
    let resolved = |x: &DVector<f64>| {
        weingarten_data(f, x)
            .ok()
            .zip(trace_radial(f, x).ok())
            .is_some_and(|((m, factor), tr)| h * tr.abs() * factor.abs() * m.norm() <= 0.25)
    };
    let mut x = x0.clone();
    for i in 0..steps {
        let t = i as f64 * h;
        let next = (|| {
            if !resolved(&x) {
                return None;
            }
            let k1 = velocity(&x)?;
            let k2 = velocity(&(&x + &k1 * (0.5 * h)))?;
            let k3 = velocity(&(&x + &k2 * (0.5 * h)))?;
            let k4 = velocity(&(&x + &k3 * h))?;
            let mut y = &x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            if sphere {
                y.normalize_mut();
            }
            tangential_gradient(f, &y)
                .norm()
                .ge(&SINGULAR_GRADIENT)
                .then_some(y)
        })();
        match next {
            Some(y) => {
                x = y;
                times.push((i + 1) as f64 * h);
                points.push(x.clone());
            }
            None => {
                return Ok(ParticlePath {
                    times,
                    points,
                    termination: ParticleTermination::SingularSet { t },
                })
            }
        }
    }
    Ok(ParticlePath {
        times,
        points,
        termination: ParticleTermination::Completed,
    })
}

fn random_direction<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

/// Random point on the leaf `θ`: draw a regular point, then slide along the
/// normal geodesic through it (leaves are parallel, so the geodesic meets
/// every leaf orthogonally).
pub fn sample_leaf_point<F: LevelSetFunction + ?Sized, R: Rng + ?Sized>(
    f: &F,
    theta: f64,
    rng: &mut R,
) -> Result<DVector<f64>, ExtrinsicError> {
    let model = f.model().ok_or(ExtrinsicError::NoChart)?;
    model
        .check_theta(theta)
        .map_err(|_| ExtrinsicError::Placement { theta })?;
    let dim = f.ambient().embedding_dim();
    let sphere = model.is_sphere();
    let theta_max = model.theta_max();
    for _ in 0..1000 {
        let mut x = if sphere {
            random_direction(rng, dim)
        } else {
            random_direction(rng, dim) * (theta * (0.5 + rng.random::<f64>()))
        };
        let start = f.quotient_coordinate(&x).ok_or(ExtrinsicError::NoChart)?;
        if sphere && !(0.02 * theta_max..0.98 * theta_max).contains(&start) {
            continue;
        }
        if !sphere && start < 1e-3 * theta {
            continue;
        }
        let mut placed = false;
        for _ in 0..8 {
            let current = f.quotient_coordinate(&x).ok_or(ExtrinsicError::NoChart)?;
            let delta = theta - current;
            if delta.abs() <= 1e-15 * theta.max(1.0) {
                placed = true;
                break;
            }
            let nu = match unit_normal(f, &x) {
                Ok(nu) => nu,
                Err(_) => break,
            };
            x = if sphere {
                (&x * delta.cos() + nu * delta.sin()).normalize()
            } else {
                &x + nu * delta
            };
        }
        let current = f.quotient_coordinate(&x).ok_or(ExtrinsicError::NoChart)?;
        if placed || (current - theta).abs() <= 1e-13 * theta.max(1.0) {
            return Ok(x);
        }
    }
    Err(ExtrinsicError::Placement { theta })
}

/// Largest relative discrepancy between analytic derivatives of `f` and
/// central differences (of `F` for the gradient, of the analytic gradient
/// for the Hessian) over the given points.
pub fn derivative_self_test<F: LevelSetFunction + ?Sized>(f: &F, points: &[DVector<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for x in points {
        let h = f64::EPSILON.cbrt() * (1.0 + x.norm());
        let n = x.len();
        let g = f.gradient(x);
        let hess = f.hessian(x);
        let mut gd = DVector::zeros(n);
        let mut hd = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            gd[i] = (f.evaluate(&xp) - f.evaluate(&xm)) / (2.0 * h);
            hd.set_column(i, &((f.gradient(&xp) - f.gradient(&xm)) / (2.0 * h)));
        }
        worst = worst.max((&g - &gd).amax() / (1.0 + g.amax()));
        worst = worst.max((&hess - &hd).amax() / (1.0 + hess.amax()));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn realize(model: FoliationModel) -> Box<dyn LevelSetFunction> {
        level_set_for(model).expect("realization")
    }

    #[test]
    fn normal_of_a_circle() {
        let f = realize(FoliationModel::concentric_spheres(2).unwrap());
        let nu = unit_normal(f.as_ref(), &DVector::from_vec(vec![2.0, 0.0])).unwrap();
        assert_eq!(nu, DVector::from_vec(vec![1.0, 0.0]));
    }

    #[test]
    fn normal_of_a_cylinder_ignores_the_axis() {
        let f = realize(FoliationModel::spherical_cylinders(1, 3).unwrap());
        let nu = unit_normal(f.as_ref(), &DVector::from_vec(vec![0.0, 1.0, 5.0])).unwrap();
        assert_eq!(nu, DVector::from_vec(vec![0.0, 1.0, 0.0]));
    }

    #[test]
    fn origin_is_singular() {
        let f = realize(FoliationModel::concentric_spheres(3).unwrap());
        assert!(matches!(
            unit_normal(f.as_ref(), &DVector::zeros(3)),
            Err(ExtrinsicError::SingularPoint { .. })
        ));
    }

    #[test]
    fn clifford_normal_is_tangent_and_orthogonal_to_the_torus() {
        let model = FoliationModel::isoparametric_sphere(2, 1, 1).unwrap();
        let f = realize(model);
        let (a, b) = (0.3f64, 1.1f64);
        let th = PI / 4.0;
        let x = DVector::from_vec(vec![
            th.cos() * a.cos(),
            th.cos() * a.sin(),
            th.sin() * b.cos(),
            th.sin() * b.sin(),
        ]);
        let nu = unit_normal(f.as_ref(), &x).unwrap();
        assert_abs_diff_eq!(nu.dot(&x), 0.0, epsilon = 1e-10);
        // torus tangents from the parametrization
        let ta = DVector::from_vec(vec![-a.sin(), a.cos(), 0.0, 0.0]);
        let tb = DVector::from_vec(vec![0.0, 0.0, -b.sin(), b.cos()]);
        assert_abs_diff_eq!(nu.dot(&ta), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(nu.dot(&tb), 0.0, epsilon = 1e-10);
        // and it points towards growing θ
        let expected = DVector::from_vec(vec![
            -th.sin() * a.cos(),
            -th.sin() * a.sin(),
            th.cos() * b.cos(),
            th.cos() * b.sin(),
        ]);
        assert_abs_diff_eq!((nu - expected).amax(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn small_sphere_shape_operator() {
        let f = realize(FoliationModel::concentric_spheres(3).unwrap());
        let s = shape_operator(f.as_ref(), &DVector::from_vec(vec![0.0, 0.3, 0.4])).unwrap();
        assert_eq!(s.eigenvalues.len(), 2);
        for l in s.eigenvalues {
            assert_abs_diff_eq!(l, -2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn clifford_shape_operator_matches_catalog() {
        let model = FoliationModel::isoparametric_sphere(2, 1, 1).unwrap();
        let f = realize(model);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = sample_leaf_point(f.as_ref(), PI / 6.0, &mut rng).unwrap();
        let s = shape_operator(f.as_ref(), &x).unwrap();
        assert_abs_diff_eq!(s.eigenvalues[0], -3f64.sqrt(), epsilon = 1e-8);
        assert_abs_diff_eq!(s.eigenvalues[1], 1.0 / 3f64.sqrt(), epsilon = 1e-8);
    }

    #[test]
    fn cartan_cubic_shape_operator_matches_catalog() {
        let model = FoliationModel::isoparametric_sphere(3, 1, 1).unwrap();
        let f = realize(model);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let th = PI / 6.0;
        let x = sample_leaf_point(f.as_ref(), th, &mut rng).unwrap();
        let s = shape_operator(f.as_ref(), &x).unwrap();
        let mut expected: Vec<f64> = (0..3)
            .map(|k| -1.0 / (th + k as f64 * PI / 3.0).tan())
            .collect();
        expected.sort_by(f64::total_cmp);
        for (a, b) in s.eigenvalues.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn cartan_cubic_satisfies_munzner_identities() {
        let model = FoliationModel::isoparametric_sphere(3, 1, 1).unwrap();
        let f = realize(model);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x = random_direction(&mut rng, 5) * 1.7;
            let r2 = x.norm_squared();
            assert_abs_diff_eq!(f.gradient(&x).norm_squared(), 9.0 * r2 * r2, epsilon = 1e-10);
            assert_abs_diff_eq!(f.hessian(&x).trace(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn trace_radial_examples() {
        let f = realize(FoliationModel::concentric_spheres(4).unwrap());
        let x = DVector::from_vec(vec![0.1, 0.2, -0.3, 0.5]);
        assert_abs_diff_eq!(trace_radial(f.as_ref(), &x).unwrap(), -3.0 / x.norm(), epsilon = 1e-12);

        let f = realize(FoliationModel::spherical_cylinders(2, 4).unwrap());
        let x = DVector::from_vec(vec![0.0, 0.0, 0.25, 7.0]);
        assert_abs_diff_eq!(trace_radial(f.as_ref(), &x).unwrap(), -8.0, epsilon = 1e-12);

        let model = FoliationModel::isoparametric_sphere(1, 1, 1).unwrap();
        let f = realize(model);
        let th = PI / 3.0;
        let x = DVector::from_vec(vec![th.cos(), th.sin(), 0.0]);
        assert_abs_diff_eq!(
            trace_radial(f.as_ref(), &x).unwrap(),
            model.mean_curvature_trace(th).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn trace_agrees_with_eigenvalue_sum() {
        for model in crate::catalog::standard_catalog() {
            let Some(f) = level_set_for(model) else { continue };
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let th = model.minimal_leaf().map_or(0.7, |m| 0.6 * m);
            let x = sample_leaf_point(f.as_ref(), th, &mut rng).unwrap();
            let s = shape_operator(f.as_ref(), &x).unwrap();
            assert_abs_diff_eq!(s.trace(), trace_radial(f.as_ref(), &x).unwrap(), epsilon = 1e-10);
        }
    }

    #[test]
    fn shrinking_circle_particle() {
        let f = realize(FoliationModel::concentric_spheres(2).unwrap());
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let path = particle_mcf_flow(f.as_ref(), &x0, 0.375, 1e-4).unwrap();
        assert_eq!(path.termination, ParticleTermination::Completed);
        let (t, x) = path.last();
        assert_abs_diff_eq!(t, 0.375, epsilon = 1e-15);
        assert_abs_diff_eq!(x.norm(), 0.5, epsilon = 1e-8);
    }

    #[test]
    fn zero_time_particle_path_is_the_start() {
        let f = realize(FoliationModel::isoparametric_sphere(2, 1, 1).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x0 = sample_leaf_point(f.as_ref(), 0.4, &mut rng).unwrap();
        let path = particle_mcf_flow(f.as_ref(), &x0, 0.0, 1e-3).unwrap();
        assert_eq!(path.points, vec![x0]);
    }

    #[test]
    fn particle_reaching_the_centre_is_truncated() {
        let f = realize(FoliationModel::concentric_spheres(2).unwrap());
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let path = particle_mcf_flow(f.as_ref(), &x0, 1.0, 1e-3).unwrap();
        assert!(matches!(path.termination, ParticleTermination::SingularSet { .. }));
        assert!(*path.times.last().unwrap() < 0.5);
    }

    #[test]
    fn analytic_derivatives_pass_self_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for model in crate::catalog::standard_catalog() {
            let Some(f) = level_set_for(model) else { continue };
            let dim = model.ambient().embedding_dim();
            let pts: Vec<_> = (0..5).map(|_| random_direction(&mut rng, dim)).collect();
            let worst = derivative_self_test(f.as_ref(), &pts);
            assert!(worst < 1e-5, "{model}: {worst:e}");
        }
    }

    #[test]
    fn dimension_and_sphere_checks() {
        let f = realize(FoliationModel::isoparametric_sphere(2, 1, 1).unwrap());
        assert!(matches!(
            unit_normal(f.as_ref(), &DVector::from_vec(vec![1.0, 0.0, 0.0])),
            Err(ExtrinsicError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            unit_normal(f.as_ref(), &DVector::from_vec(vec![2.0, 0.0, 1.0, 0.0])),
            Err(ExtrinsicError::NotOnSphere { .. })
        ));
    }
}
