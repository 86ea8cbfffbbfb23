//! Empirical inertia, principal subspaces, and the ball-inertia toy models.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::bodies::sample_uniform_ball;
use crate::classify::Dataset;
use crate::error::{invalid, Error, Result};
use crate::rng::{self, tag};

#[derive(Debug, Clone, PartialEq)]
pub struct InertiaModel {
    pub mean: DVector<f64>,
    /// `(1/p) sum (x - mean)(x - mean)^T`.
    pub sigma: DMatrix<f64>,
    pub count: usize,
}

pub fn inertia(data: &[DVector<f64>]) -> Result<InertiaModel> {
    let first = data.first().ok_or_else(|| invalid("inertia of an empty sample"))?;
    let n = first.len();
    if let Some(bad) = data.iter().find(|x| x.len() != n) {
        return Err(Error::DimensionMismatch(format!("sample of length {} among length {n}", bad.len())));
    }
    let rows = DMatrix::from_fn(data.len(), n, |i, j| data[i][j]);
    inertia_of_rows(&rows)
}

/// Inertia of the rows of a `p x N` matrix.
pub fn inertia_of_rows(x: &DMatrix<f64>) -> Result<InertiaModel> {
    let p = x.nrows();
    if p == 0 {
        return Err(invalid("inertia of an empty sample"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("samples"));
    }
    let mean: DVector<f64> = x.row_sum().transpose() / p as f64;
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let sigma = centered.transpose() * &centered / p as f64;
    Ok(InertiaModel {
        mean,
        sigma: (&sigma + sigma.transpose()) * 0.5,
        count: p,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalSubspace {
    /// `N x M`, orthonormal columns.
    pub basis: DMatrix<f64>,
    /// Eigenvalues of the kept components, descending.
    pub eigenvalues: Vec<f64>,
    /// Full spectrum, descending.
    pub spectrum: Vec<f64>,
}

/// Top-`M` eigenvectors, each signed so its first nonzero coordinate is
/// positive.
pub fn principal_subspace(model: &InertiaModel, m: usize) -> Result<PrincipalSubspace> {
    let n = model.sigma.nrows();
    if m == 0 || m > n {
        return Err(invalid(format!("M = {m} outside 1..={n}")));
    }
    let eig = SymmetricEigen::new(model.sigma.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut basis = DMatrix::zeros(n, m);
    for (k, &idx) in order.iter().take(m).enumerate() {
        let mut v = eig.eigenvectors.column(idx).into_owned();
        let scale = v.amax();
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * scale) {
            if *first < 0.0 {
                v.neg_mut();
            }
        }
        basis.set_column(k, &v);
    }
    let spectrum: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    Ok(PrincipalSubspace {
        basis,
        eigenvalues: spectrum[..m].to_vec(),
        spectrum,
    })
}

/// Volume of the unit ball in `R^N`.
pub fn unit_ball_volume(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    (h * std::f64::consts::PI.ln() - ln_gamma(h + 1.0)).exp()
}

/// Eigenvalues of `W = integral over c + rB of x x^T dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallInertia {
    pub lambda_axis: f64,
    pub lambda_perp: f64,
    /// `C` in `integral over B of y y^T dy = C I`.
    pub constant: f64,
}

pub fn ball_inertia_analytic(c: &DVector<f64>, r: f64, n: usize) -> Result<BallInertia> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(invalid(format!("radius must be positive, got {r}")));
    }
    if n == 0 || c.len() != n {
        return Err(Error::DimensionMismatch(format!("center of length {} for N = {n}", c.len())));
    }
    let vol = unit_ball_volume(n);
    let constant = vol / (n as f64 + 2.0);
    let lambda_perp = constant * r.powi(n as i32 + 2);
    Ok(BallInertia {
        lambda_axis: r.powi(n as i32) * c.norm_squared() * vol + lambda_perp,
        lambda_perp,
        constant,
    })
}

/// Round-robin over `centers`: sample `k` is uniform in the ball around
/// `centers[k % K]` and labelled `k % K`.
fn sample_balls(centers: &[DVector<f64>], r: f64, samples: usize, seed: u64, names: Vec<String>) -> Result<Dataset> {
    let n = centers[0].len();
    let k = centers.len();
    let mut x = DMatrix::zeros(samples, n);
    let mut labels = Vec::with_capacity(samples);
    for s in 0..samples {
        let class = s % k;
        let mut rng = rng::substream(seed, &[tag::BALL_SAMPLES, s as u64]);
        let point = sample_uniform_ball(&mut rng, &centers[class], r);
        x.set_row(s, &point.transpose());
        labels.push(class);
    }
    Dataset::new(x, labels, names)
}

/// Uniform samples from `c + rB` (label `+`) and `-c + rB` (label `-`).
pub fn toy_two_balls(n: usize, c: &DVector<f64>, r: f64, samples: usize, seed: u64) -> Result<Dataset> {
    if c.len() != n || n == 0 {
        return Err(Error::DimensionMismatch(format!("center of length {} for N = {n}", c.len())));
    }
    if !(r > 0.0) {
        return Err(invalid("radius must be positive"));
    }
    if c.norm() <= r {
        return Err(Error::BallsNotSeparated {
            radii: 2.0 * r,
            distance: 2.0 * c.norm(),
        });
    }
    sample_balls(&[c.clone(), -c], r, samples, seed, vec!["+".into(), "-".into()])
}

/// Uniform samples from the `2N` balls `+-e_n + rB`; class `2n` is `+e_n`,
/// class `2n+1` is `-e_n`.
pub fn toy_cross_polytope_balls(n: usize, r: f64, samples: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(invalid("dimension must be positive"));
    }
    if !(r > 0.0 && r < std::f64::consts::FRAC_1_SQRT_2) {
        return Err(invalid(format!("radius must lie in (0, 1/sqrt 2), got {r}")));
    }
    let mut centers = Vec::with_capacity(2 * n);
    let mut names = Vec::with_capacity(2 * n);
    for axis in 0..n {
        for sign in [1.0, -1.0] {
            centers.push(DVector::from_fn(n, |i, _| if i == axis { sign } else { 0.0 }));
            names.push(format!("e{axis}{}", if sign > 0.0 { '+' } else { '-' }));
        }
    }
    sample_balls(&centers, r, samples, seed, names)
}
