//! Convex bodies: ellipsoids (the universal body here), balls, circular cones
//! and seeded Gaussian projections.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Tolerance for symmetry and eigenvalue sign when classifying a shape as PSD.
pub const PSD_TOL: f64 = 1e-10;
/// Tolerance on the norm of unit vectors (cone axes).
pub const UNIT_TOL: f64 = 1e-12;
/// Affine-span residual allowed when testing membership in a flat ellipsoid.
pub const SPAN_TOL: f64 = 1e-9;

/// `{center + shape * x : |x| <= 1}` for a general `N x k` shape map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EllipsoidRepr", into = "EllipsoidRepr")]
pub struct Ellipsoid {
    center: DVector<f64>,
    shape: DMatrix<f64>,
    symmetric_psd: bool,
}

#[derive(Serialize, Deserialize)]
struct EllipsoidRepr {
    center: Vec<f64>,
    shape: Vec<Vec<f64>>,
}

impl TryFrom<EllipsoidRepr> for Ellipsoid {
    type Error = Error;

    fn try_from(r: EllipsoidRepr) -> Result<Self> {
        let rows = r.shape.len();
        let cols = r.shape.first().map_or(0, Vec::len);
        if r.shape.iter().any(|row| row.len() != cols) {
            return Err(Error::DimensionMismatch("ragged shape rows".into()));
        }
        let shape = DMatrix::from_fn(rows, cols, |i, j| r.shape[i][j]);
        Ellipsoid::new(DVector::from_vec(r.center), shape)
    }
}

impl From<Ellipsoid> for EllipsoidRepr {
    fn from(e: Ellipsoid) -> Self {
        EllipsoidRepr {
            center: e.center.iter().copied().collect(),
            shape: e
                .shape
                .row_iter()
                .map(|row| row.iter().copied().collect())
                .collect(),
        }
    }
}

impl Ellipsoid {
    pub fn new(center: DVector<f64>, shape: DMatrix<f64>) -> Result<Self> {
        if center.len() != shape.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "center has length {} but shape has {} rows",
                center.len(),
                shape.nrows()
            )));
        }
        if center.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("center"));
        }
        if shape.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("shape"));
        }
        let symmetric_psd = is_symmetric_psd(&shape);
        Ok(Ellipsoid {
            center,
            shape,
            symmetric_psd,
        })
    }

    pub fn from_slices(center: &[f64], shape_rows: &[&[f64]]) -> Result<Self> {
        let rows = shape_rows.len();
        let cols = shape_rows.first().map_or(0, |r| r.len());
        if shape_rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged shape rows".into()));
        }
        let shape = DMatrix::from_fn(rows, cols, |i, j| shape_rows[i][j]);
        Ellipsoid::new(DVector::from_column_slice(center), shape)
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn is_symmetric_psd(&self) -> bool {
        self.symmetric_psd
    }

    /// Support function: `sup_{p in body} <p, u>` and a maximizer.
    ///
    /// When `shape^T u = 0` every point of the body attains the supremum and
    /// the center is returned.
    pub fn support(&self, direction: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        if direction.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "direction has length {}, body lives in R^{}",
                direction.len(),
                self.dim()
            )));
        }
        if direction.iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroDirection);
        }
        let bt_u = self.shape.tr_mul(direction);
        let norm = bt_u.norm();
        let value = self.center.dot(direction) + norm;
        let argmax = if norm > 0.0 {
            &self.center + &self.shape * (bt_u / norm)
        } else {
            self.center.clone()
        };
        Ok((value, argmax))
    }

    /// Membership test. Flat bodies require the point to sit in the affine
    /// span (residual below [`SPAN_TOL`]).
    pub fn contains(&self, point: &DVector<f64>, tol: f64) -> bool {
        if point.len() != self.dim() {
            return false;
        }
        let d = point - &self.center;
        if self.shape.ncols() == 0 {
            return d.norm() <= SPAN_TOL;
        }
        let svd = self.shape.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let cutoff = smax * 1e-12 * self.shape.nrows().max(self.shape.ncols()) as f64;
        let x = match svd.solve(&d, cutoff.max(f64::MIN_POSITIVE)) {
            Ok(x) => x,
            Err(_) => return d.norm() <= SPAN_TOL,
        };
        let residual = (&self.shape * &x - &d).norm();
        residual <= SPAN_TOL * (1.0 + d.norm()) && x.norm() <= 1.0 + tol
    }

    /// Reflection through the origin: `{-p : p in body}`. The unit ball is
    /// symmetric, so only the center flips.
    pub fn reflected(&self) -> Ellipsoid {
        Ellipsoid {
            center: -&self.center,
            shape: self.shape.clone(),
            symmetric_psd: self.symmetric_psd,
        }
    }

    /// Image under a linear map: `{P c + P B x}`.
    pub fn project(&self, p: &DMatrix<f64>) -> Result<Ellipsoid> {
        project_body(p, self)
    }

    /// Largest centered ball inside a symmetric PSD ellipsoid.
    pub fn inscribed_ball(&self) -> Result<Ball> {
        inscribed_ball(self)
    }
}

fn is_symmetric_psd(shape: &DMatrix<f64>) -> bool {
    if !shape.is_square() {
        return false;
    }
    let n = shape.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (shape[(i, j)] - shape[(j, i)]).abs() > PSD_TOL {
                return false;
            }
        }
    }
    if n == 0 {
        return true;
    }
    min_eigenvalue(shape) >= -PSD_TOL
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn min_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(sym)).eigenvalues.min()
}

/// Square root of a symmetric PSD matrix; negative rounding noise in the
/// spectrum is clamped to zero. Returns the root and its numerical rank.
pub fn psd_sqrt(sym: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let eig = SymmetricEigen::new(symmetrize(sym));
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cutoff = top * 1e-12 * sym.nrows() as f64;
    let rank = eig.eigenvalues.iter().filter(|&&v| v > cutoff).count();
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    (symmetrize(&root), rank)
}

pub fn make_ellipsoid(center: DVector<f64>, shape: DMatrix<f64>) -> Result<Ellipsoid> {
    Ellipsoid::new(center, shape)
}

pub fn support(body: &Ellipsoid, direction: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    body.support(direction)
}

pub fn project_body(p: &DMatrix<f64>, body: &Ellipsoid) -> Result<Ellipsoid> {
    if p.ncols() != body.dim() {
        return Err(Error::DimensionMismatch(format!(
            "projection has {} columns, body lives in R^{}",
            p.ncols(),
            body.dim()
        )));
    }
    Ellipsoid::new(p * &body.center, p * &body.shape)
}

pub fn inscribed_ball(body: &Ellipsoid) -> Result<Ball> {
    if !body.symmetric_psd {
        return Err(Error::NotSymmetricPsd);
    }
    let radius = if body.dim() == 0 {
        0.0
    } else {
        min_eigenvalue(&body.shape).max(0.0)
    };
    Ball::new(body.center.clone(), radius)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BallRepr", into = "BallRepr")]
pub struct Ball {
    center: DVector<f64>,
    radius: f64,
}

#[derive(Serialize, Deserialize)]
struct BallRepr {
    center: Vec<f64>,
    radius: f64,
}

impl TryFrom<BallRepr> for Ball {
    type Error = Error;

    fn try_from(r: BallRepr) -> Result<Self> {
        Ball::new(DVector::from_vec(r.center), r.radius)
    }
}

impl From<Ball> for BallRepr {
    fn from(b: Ball) -> Self {
        BallRepr {
            center: b.center.iter().copied().collect(),
            radius: b.radius,
        }
    }
}

impl Ball {
    pub fn new(center: DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(invalid(format!("ball radius must be >= 0, got {radius}")));
        }
        if center.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("center"));
        }
        Ok(Ball { center, radius })
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn to_ellipsoid(&self) -> Ellipsoid {
        let n = self.dim();
        Ellipsoid {
            center: self.center.clone(),
            shape: DMatrix::identity(n, n) * self.radius,
            symmetric_psd: true,
        }
    }
}

/// `{z : <z, axis> >= |z| cos(half_angle)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConeRepr", into = "ConeRepr")]
pub struct CircularCone {
    axis: DVector<f64>,
    half_angle: f64,
}

#[derive(Serialize, Deserialize)]
struct ConeRepr {
    axis: Vec<f64>,
    half_angle: f64,
}

impl TryFrom<ConeRepr> for CircularCone {
    type Error = Error;

    fn try_from(r: ConeRepr) -> Result<Self> {
        CircularCone::new(DVector::from_vec(r.axis), r.half_angle)
    }
}

impl From<CircularCone> for ConeRepr {
    fn from(c: CircularCone) -> Self {
        ConeRepr {
            axis: c.axis.iter().copied().collect(),
            half_angle: c.half_angle,
        }
    }
}

impl CircularCone {
    pub fn new(axis: DVector<f64>, half_angle: f64) -> Result<Self> {
        if (axis.norm() - 1.0).abs() > UNIT_TOL {
            return Err(invalid("cone axis must be a unit vector"));
        }
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&half_angle) {
            return Err(invalid(format!(
                "cone half-angle must lie in [0, pi/2], got {half_angle}"
            )));
        }
        Ok(CircularCone { axis, half_angle })
    }

    /// Cone around the first standard basis vector of `R^n`.
    pub fn around_first_axis(n: usize, half_angle: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("cone dimension must be positive"));
        }
        CircularCone::new(DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 }), half_angle)
    }

    pub fn axis(&self) -> &DVector<f64> {
        &self.axis
    }

    pub fn half_angle(&self) -> f64 {
        self.half_angle
    }

    pub fn dim(&self) -> usize {
        self.axis.len()
    }

    pub fn contains(&self, z: &DVector<f64>, tol: f64) -> bool {
        z.dot(&self.axis) >= z.norm() * self.half_angle.cos() - tol
    }
}

/// Difference cone of two strictly separated balls: axis along `c1 - c2`,
/// `sin(half_angle) = (r1 + r2) / |c1 - c2|`.
pub fn difference_cone(ball1: &Ball, ball2: &Ball) -> Result<CircularCone> {
    if ball1.dim() != ball2.dim() {
        return Err(Error::DimensionMismatch(format!(
            "balls live in R^{} and R^{}",
            ball1.dim(),
            ball2.dim()
        )));
    }
    let diff = &ball1.center - &ball2.center;
    let distance = diff.norm();
    let radii = ball1.radius + ball2.radius;
    if radii >= distance {
        return Err(Error::BallsNotSeparated { radii, distance });
    }
    let axis = diff / distance;
    let half_angle = (radii / distance).asin();
    CircularCone::new(axis, half_angle)
}

/// Seeded `M x N` matrix of iid standard normals, drawn row-major.
/// Serialized as `{M, N, seed}`; entries are regenerated on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProjectionRepr", into = "ProjectionRepr")]
pub struct GaussianProjection {
    rows: usize,
    cols: usize,
    seed: u64,
    matrix: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct ProjectionRepr {
    #[serde(rename = "M")]
    rows: usize,
    #[serde(rename = "N")]
    cols: usize,
    seed: u64,
}

impl TryFrom<ProjectionRepr> for GaussianProjection {
    type Error = Error;

    fn try_from(r: ProjectionRepr) -> Result<Self> {
        GaussianProjection::new(r.rows, r.cols, r.seed)
    }
}

impl From<GaussianProjection> for ProjectionRepr {
    fn from(p: GaussianProjection) -> Self {
        ProjectionRepr {
            rows: p.rows,
            cols: p.cols,
            seed: p.seed,
        }
    }
}

impl GaussianProjection {
    pub fn new(rows: usize, cols: usize, seed: u64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid("projection dimensions must be positive"));
        }
        if rows > cols {
            return Err(invalid(format!(
                "projection rank M = {rows} exceeds ambient dimension N = {cols}"
            )));
        }
        let mut rng = rng::stream(seed);
        let entries: Vec<f64> = (0..rows * cols)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(GaussianProjection {
            rows,
            cols,
            seed,
            matrix: DMatrix::from_row_slice(rows, cols, &entries),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, body: &Ellipsoid) -> Result<Ellipsoid> {
        project_body(&self.matrix, body)
    }
}

/// Result of fitting `{c + r A0 x}` to samples.
#[derive(Debug, Clone)]
pub struct EllipsoidFit {
    pub ellipsoid: Ellipsoid,
    /// Numerical rank of the empirical inertia matrix.
    pub rank: usize,
    /// True when the inertia is singular and the fitted body is flat.
    pub rank_deficient: bool,
}

/// Centroid plus `radius_scale` times the square root of the empirical
/// inertia matrix (population normalization). `radius_scale` defaults to
/// `sqrt(N)`.
pub fn fit_enclosing_ellipsoid(
    samples: &[DVector<f64>],
    radius_scale: Option<f64>,
) -> Result<EllipsoidFit> {
    if samples.len() < 2 {
        return Err(invalid("need at least 2 samples to fit an ellipsoid"));
    }
    let n = samples[0].len();
    if samples.iter().any(|s| s.len() != n) {
        return Err(Error::DimensionMismatch("samples have differing lengths".into()));
    }
    let scale = radius_scale.unwrap_or((n as f64).sqrt());
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(invalid(format!("radius scale must be positive, got {scale}")));
    }
    let p = samples.len() as f64;
    let mean = samples.iter().fold(DVector::zeros(n), |acc, s| acc + s) / p;
    let mut inertia = DMatrix::zeros(n, n);
    for s in samples {
        let d = s - &mean;
        inertia.syger(1.0 / p, &d, &d, 1.0);
    }
    let (root, rank) = psd_sqrt(&inertia);
    let ellipsoid = Ellipsoid {
        center: mean,
        shape: root * scale,
        symmetric_psd: true,
    };
    Ok(EllipsoidFit {
        ellipsoid,
        rank,
        rank_deficient: rank < n,
    })
}

/// Uniform draw from the ball of radius `r` around `c`: Gaussian direction
/// times `U^(1/N)`.
pub fn sample_uniform_ball<R: Rng + ?Sized>(rng: &mut R, c: &DVector<f64>, r: f64) -> DVector<f64> {
    let n = c.len();
    let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = g.norm();
    let u: f64 = rng.random();
    let radius = r * u.powf(1.0 / n as f64);
    if norm == 0.0 {
        return c.clone();
    }
    c + g * (radius / norm)
}

pub fn standard_normal_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}
