//! Escape-through-the-mesh probabilities and required projection ranks.

use serde::{Deserialize, Serialize};

use crate::bodies::{difference_cone, Ball, Ellipsoid};
use crate::error::{invalid, Error, Result};
use crate::widths::{circular_width_sq, lambda_m, width_bound_ellipsoids, WidthBound, WidthKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeParams {
    pub m: usize,
    pub n: usize,
    pub eta: f64,
}

impl EscapeParams {
    pub fn new(m: usize, n: usize, eta: f64) -> Result<Self> {
        if m == 0 || m > n {
            return Err(invalid(format!("need 1 <= M <= N, got M = {m}, N = {n}")));
        }
        check_eta(eta)?;
        Ok(EscapeParams { m, n, eta })
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(invalid(format!("failure probability must lie in (0, 1), got {eta}")));
    }
    Ok(())
}

fn check_width(w: f64) -> Result<()> {
    if !(w >= 0.0) || !w.is_finite() {
        return Err(invalid(format!("width must be finite and >= 0, got {w}")));
    }
    Ok(())
}

/// `1 - exp(-(lambda_M - w)^2 / 2)` when `w < lambda_M`, else 0.
pub fn escape_probability_lower(m: usize, w: f64) -> Result<f64> {
    check_width(w)?;
    let lam = lambda_m(m)?;
    if w >= lam {
        return Ok(0.0);
    }
    let gap = lam - w;
    Ok(-(-0.5 * gap * gap).exp_m1())
}

/// Smallest integer `M > (w + sqrt(2 ln(1/eta)))^2 + 1`.
pub fn required_dim_gordon(w: f64, eta: f64) -> Result<usize> {
    check_width(w)?;
    check_eta(eta)?;
    let t = w + (-2.0 * eta.ln()).sqrt();
    Ok((t * t + 1.0).floor() as usize + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AkfBounds {
    /// `ceil(w^2 + sqrt(16 N ln(4/eta)) + 1)`: success with prob >= 1 - eta.
    pub m_success: usize,
    /// `floor(w^2 - sqrt(16 N ln(4/eta)))` clamped at 0: failure with prob >= 1 - eta.
    pub m_failure: usize,
}

/// Two-sided phase-transition ranks. The failure side is often vacuous (0)
/// at small `N`.
pub fn akf_bounds(w: f64, n: usize, eta: f64) -> Result<AkfBounds> {
    check_width(w)?;
    if !(eta > 0.0 && eta < 4.0) {
        return Err(invalid(format!("eta must lie in (0, 4), got {eta}")));
    }
    let margin = (16.0 * n as f64 * (4.0 / eta).ln()).sqrt();
    let w2 = w * w;
    Ok(AkfBounds {
        m_success: (w2 + margin + 1.0).ceil() as usize,
        m_failure: (w2 - margin).floor().max(0.0) as usize,
    })
}

/// Rank keeping two balls apart with probability `>= 1 - eta`: the circular
/// difference cone's curve width fed through [`required_dim_gordon`].
pub fn required_dim_two_balls(n: usize, ball1: &Ball, ball2: &Ball, eta: f64) -> Result<usize> {
    if ball1.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "balls live in R^{}, expected R^{n}",
            ball1.dim()
        )));
    }
    let cone = difference_cone(ball1, ball2)?;
    let w_sq = circular_width_sq(n, cone.half_angle())?.value;
    required_dim_gordon(w_sq.max(0.0).sqrt(), eta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPlan {
    pub i: usize,
    pub j: usize,
    pub width: WidthBound,
    pub eta: f64,
    /// `None` when the width bound does not apply to this pair.
    pub m_required: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiClassPlan {
    pub k: usize,
    pub p: f64,
    pub per_pair: Vec<PairPlan>,
    /// Max of the per-pair requirements over feasible pairs.
    pub m: usize,
    pub feasible: bool,
    pub infeasible_pairs: Vec<(usize, usize)>,
}

impl MultiClassPlan {
    /// Column-aligned text table, one row per pair.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:>4} {:>4} {:>12} {:>12} {:>8}\n",
            "i", "j", "width", "eta", "M"
        );
        for pp in &self.per_pair {
            let width = if pp.width.valid {
                format!("{:.6}", pp.width.value)
            } else {
                "invalid".to_string()
            };
            let m = pp.m_required.map_or("-".to_string(), |m| m.to_string());
            out.push_str(&format!(
                "{:>4} {:>4} {:>12} {:>12.6e} {:>8}\n",
                pp.i, pp.j, width, pp.eta, m
            ));
        }
        out.push_str(&format!(
            "K = {}, p = {}, M = {}{}\n",
            self.k,
            self.p,
            self.m,
            if self.feasible { "" } else { " (infeasible by bound)" }
        ));
        out
    }
}

fn is_point(e: &Ellipsoid) -> bool {
    e.shape().iter().all(|&v| v == 0.0)
}

/// Union-bound plan for keeping `K` ellipsoids pairwise separated with
/// probability `>= 1 - p`, using the uniform split `eta_ij = p / C(K, 2)`.
///
/// Pairs of points use their exact width 0 (the difference cone is a ray);
/// all other pairs use the closed-form ellipsoid bound.
pub fn plan_multiclass(ellipsoids: &[Ellipsoid], p: f64) -> Result<MultiClassPlan> {
    let k = ellipsoids.len();
    if k < 2 {
        return Err(invalid("need at least two classes"));
    }
    check_eta(p)?;
    let pairs = k * (k - 1) / 2;
    let eta = p / pairs as f64;
    let mut per_pair = Vec::with_capacity(pairs);
    let mut infeasible_pairs = Vec::new();
    let mut m = 0;
    for i in 0..k {
        for j in (i + 1)..k {
            let (a, b) = (&ellipsoids[i], &ellipsoids[j]);
            let width = if is_point(a) && is_point(b) && a.center() != b.center() {
                WidthBound {
                    kind: WidthKind::Exact,
                    value: 0.0,
                    std_error: None,
                    valid: true,
                    reason: None,
                }
            } else {
                match width_bound_ellipsoids(a, b) {
                    Ok(w) => w,
                    Err(e) => WidthBound {
                        kind: WidthKind::EllipsoidTheorem,
                        value: f64::INFINITY,
                        std_error: None,
                        valid: false,
                        reason: Some(e.to_string()),
                    },
                }
            };
            let m_required = if width.valid {
                Some(required_dim_gordon(width.value, eta)?)
            } else {
                infeasible_pairs.push((i, j));
                None
            };
            if let Some(mr) = m_required {
                m = m.max(mr);
            }
            per_pair.push(PairPlan {
                i,
                j,
                width,
                eta,
                m_required,
            });
        }
    }
    Ok(MultiClassPlan {
        k,
        p,
        feasible: infeasible_pairs.is_empty(),
        per_pair,
        m,
        infeasible_pairs,
    })
}
