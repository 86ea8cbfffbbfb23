//! Monte Carlo phase-transition sweeps.
//!
//! Two harnesses share one grid type: the circular-cone sweep (exact
//! null-space test) and the random-ellipsoid sweep (certified separation
//! oracle on projected Wishart ellipsoids). Every trial draws from its own
//! stream keyed by `(seed, kind, i, j, trial)`, so a grid is identical for any
//! worker count.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bodies::{CircularCone, Ellipsoid, GaussianProjection};
use crate::error::{invalid, Error, Result};
use crate::exec::Exec;
use crate::rng::{self, tag, StreamRng};
use crate::separation::{decide_disjoint_with, nullspace_test, SeparationState, SolverOptions};

pub const CSV_HEADER: &str = "param,M,trials,successes,indeterminate";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Both shapes iid Wishart `X X^T` with `N` degrees of freedom.
    General,
    /// Shapes annihilate the center axis and are Wishart on its complement.
    Hyperplane,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "general" => Ok(Variant::General),
            "hyperplane" => Ok(Variant::Hyperplane),
            other => Err(invalid(format!("unknown variant `{other}` (general|hyperplane)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "variant")]
pub enum ExperimentKind {
    ConePhase,
    EllipsoidPhase(Variant),
}

/// Success counts indexed by `[param][M]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub kind: ExperimentKind,
    pub n: usize,
    pub seed: u64,
    /// Cone angles (radians) or center distances.
    pub params: Vec<f64>,
    pub ms: Vec<usize>,
    pub trials: usize,
    pub successes: Vec<Vec<usize>>,
    /// Oracle could not certify either way; counted as failures.
    pub indeterminate: Vec<Vec<usize>>,
    /// Trials whose unprojected bodies were certified disjoint (ellipsoid
    /// sweeps with `check_unprojected`).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub unprojected_disjoint: Option<Vec<Vec<usize>>>,
}

impl PhaseGrid {
    pub fn ratio(&self, i: usize, j: usize) -> f64 {
        self.successes[i][j] as f64 / self.trials as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 * self.params.len() * self.ms.len());
        out.push_str(CSV_HEADER);
        out.push('\n');
        for (i, param) in self.params.iter().enumerate() {
            for (j, m) in self.ms.iter().enumerate() {
                out.push_str(&format!(
                    "{:.6},{},{},{},{}\n",
                    param, m, self.trials, self.successes[i][j], self.indeterminate[i][j]
                ));
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    /// Metadata written next to the CSV. `extra` carries caller context
    /// (resolved CLI configuration, for instance).
    pub fn meta(&self, extra: serde_json::Value) -> serde_json::Value {
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let indeterminate_total: usize = self.indeterminate.iter().flatten().sum();
        serde_json::json!({
            "schema_version": crate::SCHEMA_VERSION,
            "crate_version": env!("CARGO_PKG_VERSION"),
            "experiment": self.kind,
            "N": self.n,
            "seed": self.seed,
            "trials": self.trials,
            "params": self.params,
            "Ms": self.ms,
            "indeterminate_total": indeterminate_total,
            "unprojected_disjoint": self.unprojected_disjoint,
            "timestamp": timestamp,
            "config": extra,
        })
    }

    pub fn write_meta(&self, path: &Path, extra: serde_json::Value) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(f, &self.meta(extra))?;
        Ok(())
    }
}

/// `grid.csv` -> `grid.meta.json`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "grid".into());
    csv_path.with_file_name(format!("{stem}.meta.json"))
}

/// Parse `lo:step:hi` (inclusive) or a comma list. Each number may be
/// written with a `pi` factor: `pi/8`, `3pi/8`, `0.5pi`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    if spec.contains(',') {
        return spec.split(',').map(parse_scalar).collect();
    }
    let parts: Vec<&str> = spec.split(':').collect();
    let (lo, step, hi) = match parts.as_slice() {
        [single] => {
            let v = parse_scalar(single)?;
            return Ok(vec![v]);
        }
        [lo, step, hi] => (parse_scalar(lo)?, parse_scalar(step)?, parse_scalar(hi)?),
        _ => return Err(invalid(format!("grid `{spec}` must look like lo:step:hi"))),
    };
    if !(step > 0.0) || hi < lo {
        return Err(invalid(format!("grid `{spec}` needs step > 0 and hi >= lo")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| lo + step * k as f64).collect())
}

fn parse_scalar(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || invalid(format!("cannot parse `{s}` as a number"));
    if let Some(idx) = s.find("pi") {
        let (coef, rest) = s.split_at(idx);
        let rest = &rest[2..];
        let coef = match coef.trim_end_matches('*') {
            "" => 1.0,
            "-" => -1.0,
            c => c.parse::<f64>().map_err(|_| bad())?,
        };
        let denom = match rest.strip_prefix('/') {
            Some(d) => d.parse::<f64>().map_err(|_| bad())?,
            None if rest.is_empty() => 1.0,
            None => return Err(bad()),
        };
        Ok(coef * std::f64::consts::PI / denom)
    } else {
        s.parse::<f64>().map_err(|_| bad())
    }
}

/// Integer grid from `lo:step:hi`.
pub fn parse_int_grid(spec: &str) -> Result<Vec<usize>> {
    parse_grid(spec)?
        .into_iter()
        .map(|v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(invalid(format!("grid `{spec}` must contain nonnegative integers")))
            }
        })
        .collect()
}

fn validate_ms(ms: &[usize], n: usize) -> Result<()> {
    if ms.is_empty() {
        return Err(invalid("M grid is empty"));
    }
    if let Some(&bad) = ms.iter().find(|&&m| m == 0 || m > n) {
        return Err(invalid(format!("M = {bad} outside 1..={n}")));
    }
    Ok(())
}

struct Tally {
    successes: Vec<Vec<usize>>,
    indeterminate: Vec<Vec<usize>>,
    unprojected: Vec<Vec<usize>>,
}

#[derive(Clone, Copy)]
struct TrialOutcome {
    success: bool,
    indeterminate: bool,
    unprojected_disjoint: bool,
}

fn sweep(
    rows: usize,
    cols: usize,
    trials: usize,
    exec: Exec,
    trial: impl Fn(usize, usize, usize) -> TrialOutcome + Sync + Send,
) -> Tally {
    let per_row = cols * trials;
    let outcomes = exec.map(rows * per_row, |idx| {
        let i = idx / per_row;
        let j = (idx % per_row) / trials;
        trial(i, j, idx % trials)
    });
    let mut tally = Tally {
        successes: vec![vec![0; cols]; rows],
        indeterminate: vec![vec![0; cols]; rows],
        unprojected: vec![vec![0; cols]; rows],
    };
    for (idx, o) in outcomes.iter().enumerate() {
        let i = idx / per_row;
        let j = (idx % per_row) / trials;
        tally.successes[i][j] += o.success as usize;
        tally.indeterminate[i][j] += o.indeterminate as usize;
        tally.unprojected[i][j] += o.unprojected_disjoint as usize;
    }
    tally
}

/// Proportion of Gaussian `M x N` null spaces avoiding `Circ(alpha)`, per
/// `(alpha, M)` cell.
pub fn run_cone_phase(
    n: usize,
    alphas: &[f64],
    ms: &[usize],
    trials: usize,
    seed: u64,
    exec: Exec,
) -> Result<PhaseGrid> {
    if alphas.is_empty() {
        return Err(invalid("alpha grid is empty"));
    }
    if trials == 0 {
        return Err(invalid("need at least one trial per cell"));
    }
    validate_ms(ms, n)?;
    let cones = alphas
        .iter()
        .map(|&a| CircularCone::around_first_axis(n, a))
        .collect::<Result<Vec<_>>>()?;
    let tally = sweep(alphas.len(), ms.len(), trials, exec, |i, j, t| {
        let s = rng::derive_seed(seed, &[tag::CONE_PHASE, i as u64, j as u64, t as u64]);
        let p = GaussianProjection::new(ms[j], n, s).expect("validated dimensions");
        let avoids = nullspace_test(p.matrix(), &cones[i]).expect("validated dimensions").avoids;
        TrialOutcome {
            success: avoids,
            indeterminate: false,
            unprojected_disjoint: false,
        }
    });
    Ok(PhaseGrid {
        kind: ExperimentKind::ConePhase,
        n,
        seed,
        params: alphas.to_vec(),
        ms: ms.to_vec(),
        trials,
        successes: tally.successes,
        indeterminate: tally.indeterminate,
        unprojected_disjoint: None,
    })
}

/// Orthonormal basis (`N x (N-1)`) of the complement of a unit vector, from
/// the Householder reflector that swaps `axis` with `-sign(a0) e1`. For
/// `axis = e1` the basis is exactly `e2..eN`.
pub fn complement_basis(axis: &DVector<f64>) -> DMatrix<f64> {
    let n = axis.len();
    let sign = if axis[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut v = axis.clone();
    v[0] += sign;
    let vv = v.norm_squared();
    let mut h = DMatrix::<f64>::identity(n, n);
    h.ger(-2.0 / vv, &v, &v, 1.0);
    // The reflector maps axis to -sign e1; column 0 spans the axis direction.
    let mut basis = h.columns(1, n - 1).into_owned();
    if axis.iter().skip(1).all(|&x| x == 0.0) {
        // Exact for coordinate axes: wipe rounding in row 0.
        basis.row_mut(0).fill(0.0);
    }
    basis
}

fn wishart(rng: &mut StreamRng, dim: usize) -> DMatrix<f64> {
    let x = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    &x * x.transpose()
}

/// Wishart shape `X X^T` (`X` is `N x N` standard normal). With an axis, the
/// shape is an `(N-1)`-dimensional Wishart living on the axis complement,
/// so `A axis = 0`.
pub fn wishart_shape(rng: &mut StreamRng, n: usize, constrained_axis: Option<&DVector<f64>>) -> Result<DMatrix<f64>> {
    match constrained_axis {
        None => {
            if n == 0 {
                return Err(invalid("dimension must be positive"));
            }
            Ok(wishart(rng, n))
        }
        Some(axis) => {
            if n < 2 {
                return Err(invalid("constrained Wishart shapes need N >= 2"));
            }
            if axis.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "axis has length {}, expected {n}",
                    axis.len()
                )));
            }
            if (axis.norm() - 1.0).abs() > crate::bodies::UNIT_TOL {
                return Err(invalid("constraint axis must be a unit vector"));
            }
            let u = complement_basis(axis);
            let w = wishart(rng, n - 1);
            let a = &u * w * u.transpose();
            Ok((&a + a.transpose()) * 0.5)
        }
    }
}

pub fn sample_wishart_shape(n: usize, seed: u64, constrained_axis: Option<&DVector<f64>>) -> Result<DMatrix<f64>> {
    wishart_shape(&mut rng::stream(seed), n, constrained_axis)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidPhaseOptions {
    pub variant: Variant,
    pub tol: f64,
    /// Iteration budget per projected dimension (`max_iter = factor * M`).
    pub iterations_per_dim: usize,
    /// Also run the oracle on each unprojected pair (extra cost).
    pub check_unprojected: bool,
}

impl Default for EllipsoidPhaseOptions {
    fn default() -> Self {
        EllipsoidPhaseOptions {
            variant: Variant::General,
            tol: crate::separation::DEFAULT_TOL,
            iterations_per_dim: crate::separation::ITERATIONS_PER_DIM,
            check_unprojected: false,
        }
    }
}

/// The pair of bodies used by one ellipsoid-sweep trial: centers at
/// `+-(zeta/2) e1`, shapes from the variant's distribution.
pub fn draw_ellipsoid_pair(rng: &mut StreamRng, n: usize, zeta: f64, variant: Variant) -> Result<(Ellipsoid, Ellipsoid)> {
    let e1 = DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 });
    let axis = match variant {
        Variant::General => None,
        Variant::Hyperplane => Some(&e1),
    };
    let a1 = wishart_shape(rng, n, axis)?;
    let a2 = wishart_shape(rng, n, axis)?;
    Ok((
        Ellipsoid::new(&e1 * (zeta / 2.0), a1)?,
        Ellipsoid::new(&e1 * (-zeta / 2.0), a2)?,
    ))
}

/// Seed of the shape stream for trial `(i, j, t)` of an ellipsoid sweep.
pub fn ellipsoid_trial_seeds(seed: u64, i: usize, j: usize, t: usize) -> (u64, u64) {
    let base = [tag::ELLIPSOID_PHASE, i as u64, j as u64, t as u64];
    let shapes = rng::derive_seed(seed, &[base[0], base[1], base[2], base[3], tag::SHAPES]);
    let proj = rng::derive_seed(seed, &[base[0], base[1], base[2], base[3], tag::PROJECTION]);
    (shapes, proj)
}

/// Proportion of trials whose projected Wishart ellipsoids are certified
/// disjoint, per `(zeta, M)` cell.
pub fn run_ellipsoid_phase(
    n: usize,
    zetas: &[f64],
    ms: &[usize],
    trials: usize,
    seed: u64,
    opts: EllipsoidPhaseOptions,
    exec: Exec,
) -> Result<PhaseGrid> {
    if zetas.is_empty() {
        return Err(invalid("zeta grid is empty"));
    }
    if let Some(z) = zetas.iter().find(|z| !(**z >= 0.0) || !z.is_finite()) {
        return Err(invalid(format!("zeta must be finite and >= 0, got {z}")));
    }
    if trials == 0 {
        return Err(invalid("need at least one trial per cell"));
    }
    if opts.variant == Variant::Hyperplane && n < 2 {
        return Err(invalid("hyperplane variant needs N >= 2"));
    }
    validate_ms(ms, n)?;
    let tally = sweep(zetas.len(), ms.len(), trials, exec, |i, j, t| {
        let (shape_seed, proj_seed) = ellipsoid_trial_seeds(seed, i, j, t);
        let mut srng = rng::stream(shape_seed);
        let (a, b) = draw_ellipsoid_pair(&mut srng, n, zetas[i], opts.variant).expect("validated");
        let p = GaussianProjection::new(ms[j], n, proj_seed).expect("validated dimensions");
        let pa = p.apply(&a).expect("dimensions agree");
        let pb = p.apply(&b).expect("dimensions agree");
        let solver = SolverOptions {
            tol: opts.tol,
            max_iter: opts.iterations_per_dim * ms[j],
        };
        let verdict = decide_disjoint_with(&pa, &pb, solver).expect("dimensions agree");
        let unprojected_disjoint = opts.check_unprojected && {
            let solver = SolverOptions {
                tol: opts.tol,
                max_iter: opts.iterations_per_dim * n,
            };
            decide_disjoint_with(&a, &b, solver).expect("dimensions agree").is_disjoint()
        };
        TrialOutcome {
            success: verdict.state == SeparationState::Disjoint,
            indeterminate: verdict.state == SeparationState::Indeterminate,
            unprojected_disjoint,
        }
    });
    Ok(PhaseGrid {
        kind: ExperimentKind::EllipsoidPhase(opts.variant),
        n,
        seed,
        params: zetas.to_vec(),
        ms: ms.to_vec(),
        trials,
        successes: tally.successes,
        indeterminate: tally.indeterminate,
        unprojected_disjoint: opts.check_unprojected.then_some(tally.unprojected),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingStatus {
    /// Crossing located between two grid ranks.
    Interior,
    /// Already at or above the level at the smallest rank.
    AtGridMinimum,
    /// Never reaches the level inside the grid.
    NotReached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEstimate {
    pub param: f64,
    pub level: f64,
    /// Interpolated rank where the smoothed success ratio reaches `level`.
    pub m_half: Option<f64>,
    pub status: CrossingStatus,
    /// Ranks where the smoothed ratio reaches 0.05 and 0.95.
    pub band: (Option<f64>, Option<f64>),
}

/// Weighted pool-adjacent-violators: non-decreasing fit to `y`.
pub fn isotonic_non_decreasing(y: &[f64], w: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(y.len());
    for (&yi, &wi) in y.iter().zip(w) {
        blocks.push((yi, wi, 1));
        while blocks.len() >= 2 {
            let (m2, w2, c2) = blocks[blocks.len() - 1];
            let (m1, w1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            let wt = w1 + w2;
            blocks.push(((m1 * w1 + m2 * w2) / wt, wt, c1 + c2));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, c)| std::iter::repeat_n(m, c))
        .collect()
}

fn crossing(ms: &[f64], ratios: &[f64], level: f64) -> (Option<f64>, CrossingStatus) {
    match ratios.iter().position(|&r| r >= level) {
        None => (None, CrossingStatus::NotReached),
        Some(0) => (Some(ms[0]), CrossingStatus::AtGridMinimum),
        Some(k) => {
            let (m0, m1) = (ms[k - 1], ms[k]);
            let (r0, r1) = (ratios[k - 1], ratios[k]);
            (Some(m0 + (level - r0) / (r1 - r0) * (m1 - m0)), CrossingStatus::Interior)
        }
    }
}

/// Per parameter row: isotonic-smoothed success ratio across `M`, then the
/// linearly interpolated rank where it reaches `level`.
pub fn estimate_transition(grid: &PhaseGrid, level: f64) -> Result<Vec<TransitionEstimate>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!("level must lie in (0, 1), got {level}")));
    }
    let mut order: Vec<usize> = (0..grid.ms.len()).collect();
    order.sort_by_key(|&j| grid.ms[j]);
    let ms: Vec<f64> = order.iter().map(|&j| grid.ms[j] as f64).collect();
    let weights = vec![grid.trials as f64; ms.len()];
    Ok(grid
        .params
        .iter()
        .enumerate()
        .map(|(i, &param)| {
            let raw: Vec<f64> = order.iter().map(|&j| grid.ratio(i, j)).collect();
            let smooth = isotonic_non_decreasing(&raw, &weights);
            let (m_half, status) = crossing(&ms, &smooth, level);
            let band = (crossing(&ms, &smooth, 0.05).0, crossing(&ms, &smooth, 0.95).0);
            TransitionEstimate {
                param,
                level,
                m_half,
                status,
                band,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("1:1:4").unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        let g = parse_grid("pi/8:pi/8:3pi/8").unwrap();
        assert_eq!(g.len(), 3);
        assert!((g[2] - 3.0 * PI / 8.0).abs() < 1e-15);
        assert_eq!(parse_grid("0.5pi").unwrap(), vec![PI / 2.0]);
        assert_eq!(parse_int_grid("2:2:10").unwrap(), vec![2, 4, 6, 8, 10]);
        assert_eq!(parse_int_grid("3,5,40").unwrap(), vec![3, 5, 40]);
        assert_eq!(parse_grid("pi/4, 1").unwrap(), vec![PI / 4.0, 1.0]);
        assert!(parse_grid("1:0:4").is_err());
        assert!(parse_grid("a:b").is_err());
        assert!(parse_int_grid("0.5:1:2").is_err());
    }

    #[test]
    fn isotonic_fit() {
        let y = [0.0, 0.3, 0.2, 0.5, 0.4, 1.0];
        let fit = isotonic_non_decreasing(&y, &[1.0; 6]);
        assert!(fit.windows(2).all(|w| w[0] <= w[1]));
        assert!((fit[1] - 0.25).abs() < 1e-15 && (fit[3] - 0.45).abs() < 1e-15);
    }

    fn synthetic(rows: Vec<Vec<usize>>, ms: Vec<usize>) -> PhaseGrid {
        PhaseGrid {
            kind: ExperimentKind::ConePhase,
            n: 40,
            seed: 0,
            params: (0..rows.len()).map(|i| i as f64).collect(),
            indeterminate: rows.iter().map(|r| vec![0; r.len()]).collect(),
            successes: rows,
            ms,
            trials: 10,
            unprojected_disjoint: None,
        }
    }

    #[test]
    fn transition_fixtures() {
        let ms: Vec<usize> = (1..=30).collect();
        let step: Vec<usize> = ms.iter().map(|&m| if m >= 17 { 10 } else { 0 }).collect();
        let grid = synthetic(vec![step, vec![10; 30], vec![0; 30]], ms);
        let est = estimate_transition(&grid, 0.5).unwrap();
        assert!((est[0].m_half.unwrap() - 16.5).abs() <= 0.5);
        assert_eq!(est[0].status, CrossingStatus::Interior);
        let (lo, hi) = est[0].band;
        assert!(lo.unwrap() <= est[0].m_half.unwrap() && est[0].m_half.unwrap() <= hi.unwrap());
        assert_eq!(est[1].status, CrossingStatus::AtGridMinimum);
        assert_eq!(est[1].m_half, Some(1.0));
        assert_eq!(est[2].status, CrossingStatus::NotReached);
        assert_eq!(est[2].m_half, None);
        assert!(estimate_transition(&grid, 1.0).is_err());
    }

    #[test]
    fn cone_phase_limits() {
        let n = 20;
        let ms: Vec<usize> = (1..=n).collect();
        let grid = run_cone_phase(n, &[0.01, PI / 2.0], &ms, 20, 5, Exec::default()).unwrap();
        for (j, &m) in ms.iter().enumerate() {
            assert!(grid.ratio(0, j) >= 0.95);
            let expect = if m == n { 1.0 } else { 0.0 };
            assert_eq!(grid.ratio(1, j), expect, "M = {m}");
        }
        assert!(run_cone_phase(n, &[0.1], &[0], 1, 0, Exec::default()).is_err());
        assert!(run_cone_phase(n, &[0.1], &[21], 1, 0, Exec::default()).is_err());
        assert!(run_cone_phase(n, &[], &[2], 1, 0, Exec::default()).is_err());
    }

    #[test]
    fn cone_phase_is_deterministic_across_modes() {
        let ms = [2, 5, 8];
        let a = run_cone_phase(10, &[0.3, 0.7], &ms, 15, 77, Exec::Sequential).unwrap();
        let b = run_cone_phase(10, &[0.3, 0.7], &ms, 15, 77, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.to_csv().starts_with("param,M,trials,successes,indeterminate\n0.300000,2,15,"));
    }

    #[test]
    fn wishart_shapes() {
        let mut rng = rng::stream(1);
        for _ in 0..100 {
            let a = wishart_shape(&mut rng, 6, None).unwrap();
            assert!(crate::bodies::min_eigenvalue(&a) >= -1e-9);
            assert_eq!(a, a.transpose());
        }
        let e1 = DVector::from_fn(5, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let a = wishart_shape(&mut rng, 5, Some(&e1)).unwrap();
        assert_eq!((&a * &e1).norm(), 0.0);
        let axis = DVector::from_vec(vec![0.6, 0.0, -0.8, 0.0]);
        let a = wishart_shape(&mut rng, 4, Some(&axis)).unwrap();
        assert!((&a * &axis).norm() < 1e-12 * a.norm());
        assert!(wishart_shape(&mut rng, 1, Some(&DVector::from_vec(vec![1.0]))).is_err());
    }

    #[test]
    fn wishart_trace_mean() {
        // E tr(X X^T) = E |X|_F^2 = N^2.
        let n = 20;
        let mut rng = rng::stream(2);
        let mean: f64 = (0..1000)
            .map(|_| wishart_shape(&mut rng, n, None).unwrap().trace())
            .sum::<f64>()
            / 1000.0;
        assert!((mean / (n * n) as f64 - 1.0).abs() < 0.05);
    }

    #[test]
    fn ellipsoid_phase_limits() {
        let n = 8;
        // E tr(A) = N^2, so 10 sqrt(N^2) is far beyond the body sizes.
        let far = 10.0 * 64.0 * 8.0;
        let opts = EllipsoidPhaseOptions {
            check_unprojected: true,
            ..Default::default()
        };
        let grid = run_ellipsoid_phase(n, &[0.0, far], &[n], 20, 3, opts, Exec::default()).unwrap();
        assert_eq!(grid.successes[0][0], 0);
        assert!(grid.ratio(1, 0) >= 0.95);
        let unproj = grid.unprojected_disjoint.as_ref().unwrap();
        assert_eq!(unproj[0][0], 0);
        assert_eq!(unproj[1][0], 20);
    }

    #[test]
    fn meta_path_is_sibling() {
        assert_eq!(meta_path(Path::new("out/grid.csv")), Path::new("out/grid.meta.json"));
    }
}
