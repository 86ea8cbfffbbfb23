//! Gaussian-width quantities for difference cones.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::bodies::{standard_normal_vector, CircularCone, Ellipsoid};
use crate::error::{invalid, Error, Result};
use crate::exec::{mean_and_stderr, Exec};
use crate::rng::{self, tag};

/// `1 / sqrt(2 pi)`.
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WidthKind {
    /// Squared width of a circular cone from the `N sin^2(a) + cos(2a)` curve.
    CircularCurveSq,
    /// Closed-form two-ellipsoid upper bound on the width.
    EllipsoidTheorem,
    /// Monte Carlo estimate (with standard error).
    MonteCarlo,
    /// Exact width, available for degenerate pairs (two points: a single ray).
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthBound {
    pub kind: WidthKind,
    pub value: f64,
    pub std_error: Option<f64>,
    pub valid: bool,
    pub reason: Option<String>,
}

impl WidthBound {
    fn valid(kind: WidthKind, value: f64) -> Self {
        WidthBound {
            kind,
            value,
            std_error: None,
            valid: true,
            reason: None,
        }
    }

    fn invalid(kind: WidthKind, reason: String) -> Self {
        WidthBound {
            kind,
            value: f64::INFINITY,
            std_error: None,
            valid: false,
            reason: Some(reason),
        }
    }
}

/// `E|g|` for `g ~ N(0, I_M)`: `sqrt(2) Gamma((M+1)/2) / Gamma(M/2)`.
pub fn lambda_m(m: usize) -> Result<f64> {
    if m == 0 {
        return Err(invalid("lambda_M needs M >= 1"));
    }
    let m = m as f64;
    Ok(2f64.sqrt() * (ln_gamma((m + 1.0) / 2.0) - ln_gamma(m / 2.0)).exp())
}

/// Phase-transition curve `N sin^2(alpha) + cos(2 alpha)` for the squared
/// width of a circular cone. Accurate to O(1); at `alpha = 0` it reads 1
/// while a ray has width 0.
pub fn circular_width_sq(n: usize, alpha: f64) -> Result<WidthBound> {
    if n == 0 {
        return Err(invalid("ambient dimension must be positive"));
    }
    if !(0.0..=PI / 2.0).contains(&alpha) {
        return Err(invalid(format!("cone angle must lie in [0, pi/2], got {alpha}")));
    }
    let s = alpha.sin();
    Ok(WidthBound::valid(
        WidthKind::CircularCurveSq,
        n as f64 * s * s + (2.0 * alpha).cos(),
    ))
}

/// Scalars of a pair of symmetric PSD ellipsoids that enter the width bound.
#[derive(Debug, Clone)]
pub struct PairGeometry {
    /// `|c2 - c1|`.
    pub zeta: f64,
    /// `(c1 - c2) / |c1 - c2|`.
    pub axis: DVector<f64>,
    pub fro1: f64,
    pub fro2: f64,
    /// `|A1 e|`.
    pub ae1: f64,
    /// `|A2 e|`.
    pub ae2: f64,
    a1: DMatrix<f64>,
    a2: DMatrix<f64>,
}

impl PairGeometry {
    pub fn new(e1: &Ellipsoid, e2: &Ellipsoid) -> Result<Self> {
        if e1.dim() != e2.dim() {
            return Err(Error::DimensionMismatch(format!(
                "ellipsoids live in R^{} and R^{}",
                e1.dim(),
                e2.dim()
            )));
        }
        if !e1.is_symmetric_psd() || !e2.is_symmetric_psd() {
            return Err(Error::NotSymmetricPsd);
        }
        let diff = e1.center() - e2.center();
        let zeta = diff.norm();
        if zeta == 0.0 {
            return Err(invalid("ellipsoid centers coincide"));
        }
        let axis = diff / zeta;
        let a1 = e1.shape().clone();
        let a2 = e2.shape().clone();
        Ok(PairGeometry {
            zeta,
            fro1: a1.norm(),
            fro2: a2.norm(),
            ae1: (&a1 * &axis).norm(),
            ae2: (&a2 * &axis).norm(),
            axis,
            a1,
            a2,
        })
    }

    /// `zeta - (|A1 e| + |A2 e|)`; the bound needs it positive.
    pub fn slack(&self) -> f64 {
        self.zeta - (self.ae1 + self.ae2)
    }

    pub fn hypothesis_holds(&self) -> bool {
        self.slack() > 0.0
    }

    pub fn dim(&self) -> usize {
        self.axis.len()
    }
}

/// Closed-form upper bound on the width of the two-ellipsoid difference cone:
/// `(|A1|_F + |A2|_F) / (zeta - |A1 e| - |A2 e|) + 1/sqrt(2 pi)`.
pub fn width_bound_ellipsoids(e1: &Ellipsoid, e2: &Ellipsoid) -> Result<WidthBound> {
    Ok(width_bound_from_geometry(&PairGeometry::new(e1, e2)?))
}

pub fn width_bound_from_geometry(geom: &PairGeometry) -> WidthBound {
    if !geom.hypothesis_holds() {
        return WidthBound::invalid(
            WidthKind::EllipsoidTheorem,
            format!(
                "zeta = {} <= |A1 e| + |A2 e| = {}: ellipsoids too close along the center axis",
                geom.zeta,
                geom.ae1 + geom.ae2
            ),
        );
    }
    WidthBound::valid(
        WidthKind::EllipsoidTheorem,
        (geom.fro1 + geom.fro2) / geom.slack() + INV_SQRT_2PI,
    )
}

/// Smallest `alpha` for which `alpha e + g2` is a separating normal:
/// `(|A1 g2| + |A2 g2|) / (zeta - |A1 e| - |A2 e|)`.
pub fn alpha_star(geom: &PairGeometry, g2: &DVector<f64>) -> Result<f64> {
    if g2.len() != geom.dim() {
        return Err(Error::DimensionMismatch(format!(
            "g2 has length {}, geometry lives in R^{}",
            g2.len(),
            geom.dim()
        )));
    }
    let slack = geom.slack();
    if !(slack > 0.0) {
        return Err(Error::HypothesisViolated(format!(
            "alpha* undefined: zeta - |A1 e| - |A2 e| = {slack} <= 0"
        )));
    }
    if g2.dot(&geom.axis).abs() > 1e-9 * (1.0 + g2.norm()) {
        return Err(invalid("g2 must be orthogonal to the center axis"));
    }
    Ok(((&geom.a1 * g2).norm() + (&geom.a2 * g2).norm()) / slack)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `E (a - g)_+ = a Phi(a) + phi(a)` for standard normal `g`.
pub fn positive_part_expectation(a: f64) -> Result<f64> {
    if a.is_nan() {
        return Err(Error::NonFinite("positive_part_expectation argument"));
    }
    if a == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    if a == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    Ok(a * normal_cdf(a) + normal_pdf(a))
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < 2 {
        return Err(invalid(format!("need at least 2 Monte Carlo trials, got {trials}")));
    }
    Ok(())
}

fn monte_carlo(values: &[f64]) -> WidthBound {
    let (mean, se) = mean_and_stderr(values);
    WidthBound {
        kind: WidthKind::MonteCarlo,
        value: mean,
        std_error: Some(se),
        valid: true,
        reason: None,
    }
}

/// Monte Carlo evaluation of `E_{g2} E_{g1} (alpha*(g2) - g1)_+`, sampling only
/// the component orthogonal to the axis; the inner expectation is closed form.
pub fn mc_width_pseudoprojection(
    e1: &Ellipsoid,
    e2: &Ellipsoid,
    trials: usize,
    seed: u64,
    exec: Exec,
) -> Result<WidthBound> {
    check_trials(trials)?;
    let geom = PairGeometry::new(e1, e2)?;
    if !geom.hypothesis_holds() {
        let mut out = width_bound_from_geometry(&geom);
        out.kind = WidthKind::MonteCarlo;
        return Ok(out);
    }
    let n = geom.dim();
    let values = exec.map(trials, |t| {
        let mut rng = rng::substream(seed, &[tag::WIDTH_MC, t as u64]);
        let g = standard_normal_vector(&mut rng, n);
        let g2 = &g - &geom.axis * g.dot(&geom.axis);
        let a = alpha_star(&geom, &g2).expect("hypothesis checked above");
        positive_part_expectation(a).expect("finite alpha*")
    });
    Ok(monte_carlo(&values))
}

/// `sup <z, g>` over unit `z` in the cone: `|g| cos(max(0, theta_g - alpha))`.
pub fn circular_sup(cone: &CircularCone, g: &DVector<f64>) -> f64 {
    let norm = g.norm();
    if norm == 0.0 {
        return 0.0;
    }
    let theta = (g.dot(cone.axis()) / norm).clamp(-1.0, 1.0).acos();
    norm * (theta - cone.half_angle()).max(0.0).cos()
}

/// Monte Carlo width of `Circ(alpha)` intersected with the unit sphere.
pub fn mc_width_circular(cone: &CircularCone, trials: usize, seed: u64, exec: Exec) -> Result<WidthBound> {
    check_trials(trials)?;
    let n = cone.dim();
    let values = exec.map(trials, |t| {
        let mut rng = rng::substream(seed, &[tag::WIDTH_MC, t as u64]);
        circular_sup(cone, &standard_normal_vector(&mut rng, n))
    });
    Ok(monte_carlo(&values))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapNormEstimate {
    pub estimate: f64,
    pub std_error: f64,
    /// `sqrt(2/pi) |A|_F`.
    pub lower: f64,
    /// `|A|_F`.
    pub upper: f64,
}

/// Monte Carlo `E|A g|` alongside the Jensen bounds
/// `sqrt(2/pi) |A|_F <= E|A g| <= |A|_F`.
pub fn mc_expected_map_norm(a: &DMatrix<f64>, trials: usize, seed: u64, exec: Exec) -> Result<MapNormEstimate> {
    check_trials(trials)?;
    let cols = a.ncols();
    let values = exec.map(trials, |t| {
        let mut rng = rng::substream(seed, &[tag::MAP_NORM, t as u64]);
        (a * standard_normal_vector(&mut rng, cols)).norm()
    });
    let (estimate, std_error) = mean_and_stderr(&values);
    let fro = a.norm();
    Ok(MapNormEstimate {
        estimate,
        std_error,
        lower: (2.0 / PI).sqrt() * fro,
        upper: fro,
    })
}
