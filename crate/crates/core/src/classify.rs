//! Compressive classification: CSV ingestion, train/test split, multinomial
//! logistic regression, and identity / random-projection / PCA comparisons.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::bodies::GaussianProjection;
use crate::error::{invalid, Error, Result};
use crate::pca;
use crate::rng::{self, tag};

/// Row-per-sample feature matrix with contiguous labels `0..K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: DMatrix<f64>,
    pub labels: Vec<usize>,
    /// Original label text for each class index.
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if class_names.len() < 2 {
            return Err(invalid("a dataset needs at least two classes"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(invalid(format!("label {bad} outside 0..{}", class_names.len())));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        Ok(Dataset {
            features,
            labels,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn sample(&self, i: usize) -> DVector<f64> {
        self.features.row(i).transpose()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }

    /// Replace every sample `x` by `P x`.
    pub fn transformed(&self, p: &DMatrix<f64>) -> Result<Dataset> {
        if p.ncols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "map has {} columns, data has {} features",
                p.ncols(),
                self.dim()
            )));
        }
        Ok(Dataset {
            features: &self.features * p.transpose(),
            labels: self.labels.clone(),
            class_names: self.class_names.clone(),
        })
    }

    /// Samples of each class as column vectors.
    pub fn class_samples(&self) -> Vec<Vec<DVector<f64>>> {
        let mut out = vec![Vec::new(); self.n_classes()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(self.sample(i));
        }
        out
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    parse_dataset(std::fs::File::open(path)?)
}

/// CSV with header `label,f0,...,f{N-1}`. Labels are arbitrary strings,
/// remapped to `0..K` in numeric order when every label is numeric and in
/// lexicographic order otherwise.
pub fn parse_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(Error::Parse { line: 1, msg: "empty file".into() }),
        Some(h) => h?,
    };
    if header.get(0) != Some("label") || header.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            msg: "header must be `label,f0,f1,...`".into(),
        });
    }
    let n = header.len() - 1;
    let mut raw_labels = Vec::new();
    let mut values = Vec::new();
    for (k, rec) in records.enumerate() {
        let line = k + 2;
        let rec = rec?;
        if rec.len() != n + 1 {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, found {}", n + 1, rec.len()),
            });
        }
        raw_labels.push(rec[0].to_string());
        for (col, cell) in rec.iter().skip(1).enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("non-numeric value `{cell}` in column f{col}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    msg: format!("non-finite value in column f{col}"),
                });
            }
            values.push(v);
        }
    }
    if raw_labels.is_empty() {
        return Err(Error::Parse { line: 2, msg: "no data rows".into() });
    }
    let distinct: BTreeSet<&str> = raw_labels.iter().map(String::as_str).collect();
    let mut names: Vec<String> = distinct.into_iter().map(String::from).collect();
    let numeric: Option<Vec<f64>> = names.iter().map(|s| s.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut paired: Vec<(f64, String)> = nums.into_iter().zip(names).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0));
        names = paired.into_iter().map(|(_, s)| s).collect();
    }
    let labels = raw_labels
        .iter()
        .map(|l| names.iter().position(|n| n == l).expect("collected above"))
        .collect();
    let features = DMatrix::from_row_slice(raw_labels.len(), n, &values);
    Dataset::new(features, labels, names).map_err(|e| match e {
        Error::InvalidParameter(msg) => Error::Parse { line: 2, msg },
        other => other,
    })
}

/// Shortest round-trip float formatting, so load(save(d)) == d exactly.
pub fn write_dataset<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["label".to_string()];
    header.extend((0..data.dim()).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut row = Vec::with_capacity(data.dim() + 1);
        row.push(data.class_names[data.labels[i]].clone());
        row.extend(data.features.row(i).iter().map(|v| format!("{v}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(data: &Dataset, path: &Path) -> Result<()> {
    write_dataset(data, std::fs::File::create(path)?)
}

/// Random training subset of size `round(ratio * p)`; every class must be
/// represented in it.
pub fn split(data: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(invalid(format!("ratio must lie in (0, 1), got {ratio}")));
    }
    let p = data.len();
    let n_train = (ratio * p as f64).round() as usize;
    if n_train == 0 || n_train == p {
        return Err(invalid(format!(
            "ratio {ratio} on {p} samples leaves an empty training or test set"
        )));
    }
    let mut idx: Vec<usize> = (0..p).collect();
    idx.shuffle(&mut rng::substream(seed, &[tag::SPLIT]));
    let (train_idx, test_idx) = idx.split_at_mut(n_train);
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let mut seen = vec![false; data.n_classes()];
    for &i in train_idx.iter() {
        seen[data.labels[i]] = true;
    }
    let present_overall: BTreeSet<usize> = data.labels.iter().copied().collect();
    if let Some(missing) = present_overall.iter().find(|&&k| !seen[k]) {
        return Err(invalid(format!(
            "class `{}` absent from the training split; use a larger ratio or another seed",
            data.class_names[*missing]
        )));
    }
    Ok((data.subset(train_idx), data.subset(test_idx)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlrOptions {
    pub l2: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for MlrOptions {
    fn default() -> Self {
        MlrOptions {
            l2: 1e-4,
            max_iters: 5000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &DMatrix<f64>) -> Self {
        let p = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let m = col.sum() / p;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / p;
            let sd = var.sqrt();
            mean.push(m);
            scale.push(if sd > 1e-12 * (1.0 + m.abs()) { sd } else { 1.0 });
        }
        Standardizer { mean, scale }
    }

    /// Standardized features with a trailing column of ones.
    fn design(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let (p, n) = x.shape();
        DMatrix::from_fn(p, n + 1, |i, j| {
            if j == n {
                1.0
            } else {
                (x[(i, j)] - self.mean[j]) / self.scale[j]
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlrModel {
    /// `K x (N+1)`, last column is the bias.
    pub weights: DMatrix<f64>,
    pub standardizer: Standardizer,
    pub loss_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl MlrModel {
    pub fn scores(&self, features: &DMatrix<f64>) -> DMatrix<f64> {
        self.standardizer.design(features) * self.weights.transpose()
    }

    pub fn predict(&self, features: &DMatrix<f64>) -> Vec<usize> {
        let s = self.scores(features);
        s.row_iter()
            .map(|row| {
                let mut best = 0;
                for k in 1..row.len() {
                    if row[k] > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    pub fn error_rate(&self, data: &Dataset) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let wrong = self
            .predict(&data.features)
            .iter()
            .zip(&data.labels)
            .filter(|(a, b)| a != b)
            .count();
        wrong as f64 / data.len() as f64
    }
}

struct Objective<'a> {
    x: &'a DMatrix<f64>,
    labels: &'a [usize],
    l2: f64,
}

impl Objective<'_> {
    fn penalty(&self, w: &DMatrix<f64>) -> f64 {
        let n = w.ncols() - 1;
        0.5 * self.l2 * w.columns(0, n).norm_squared()
    }

    fn loss(&self, w: &DMatrix<f64>) -> f64 {
        let scores = self.x * w.transpose();
        let mut total = 0.0;
        for (i, row) in scores.row_iter().enumerate() {
            let max = row.max();
            let lse = max + row.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
            total += lse - row[self.labels[i]];
        }
        total / self.x.nrows() as f64 + self.penalty(w)
    }

    fn gradient(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let mut probs = self.x * w.transpose();
        for (i, mut row) in probs.row_iter_mut().enumerate() {
            let max = row.max();
            row.iter_mut().for_each(|s| *s = (*s - max).exp());
            let z = row.sum();
            row /= z;
            row[self.labels[i]] -= 1.0;
        }
        let mut g = probs.transpose() * self.x / self.x.nrows() as f64;
        let n = w.ncols() - 1;
        let mut reg = g.columns_mut(0, n);
        reg += w.columns(0, n) * self.l2;
        g
    }
}

/// Softmax cross-entropy with `(l2/2) |W|_F^2` (bias excluded), minimized by
/// full-batch gradient descent with Armijo backtracking on standardized
/// features.
pub fn train_mlr(train: &Dataset, opts: MlrOptions) -> Result<MlrModel> {
    if train.is_empty() {
        return Err(invalid("training set is empty"));
    }
    if !(opts.l2 >= 0.0) || !(opts.tol >= 0.0) {
        return Err(invalid("l2 and tol must be nonnegative"));
    }
    let present: BTreeSet<usize> = train.labels.iter().copied().collect();
    if present.len() < 2 {
        return Err(invalid("training data contains a single class"));
    }
    let standardizer = Standardizer::fit(&train.features);
    let x = standardizer.design(&train.features);
    let obj = Objective {
        x: &x,
        labels: &train.labels,
        l2: opts.l2,
    };
    let mut w = DMatrix::zeros(train.n_classes(), x.ncols());
    let mut loss = obj.loss(&w);
    let mut trace = vec![loss];
    let mut step = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        let g = obj.gradient(&w);
        let gg = g.norm_squared();
        if gg.sqrt() <= opts.tol {
            converged = true;
            break;
        }
        iterations += 1;
        step *= 2.0;
        let accepted = loop {
            let candidate = &w - &g * step;
            let cand_loss = obj.loss(&candidate);
            if cand_loss <= loss - 1e-4 * step * gg {
                break Some((candidate, cand_loss));
            }
            step *= 0.5;
            if step < 1e-20 {
                break None;
            }
        };
        match accepted {
            Some((next, next_loss)) => {
                w = next;
                loss = next_loss;
                trace.push(loss);
            }
            None => break,
        }
    }
    Ok(MlrModel {
        weights: w,
        standardizer,
        loss_trace: trace,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum Method {
    Identity,
    RandomProjection { m: usize },
    Pca { m: usize },
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || invalid(format!("method `{s}` must be identity, rp:M or pca:M"));
        if s == "identity" {
            return Ok(Method::Identity);
        }
        let (kind, m) = s.split_once(':').ok_or_else(bad)?;
        let m: usize = m.parse().map_err(|_| bad())?;
        if m == 0 {
            return Err(bad());
        }
        match kind {
            "rp" => Ok(Method::RandomProjection { m }),
            "pca" => Ok(Method::Pca { m }),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Identity => write!(f, "identity"),
            Method::RandomProjection { m } => write!(f, "rp:{m}"),
            Method::Pca { m } => write!(f, "pca:{m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub method: Method,
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: u64,
    pub error_rate: f64,
    pub train_seconds: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub const REPORT_HEADER: &str = "method,M,seed,error,train_seconds";

pub fn reports_to_csv(reports: &[PipelineReport]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in reports {
        let name = match r.method {
            Method::Identity => "identity",
            Method::RandomProjection { .. } => "rp",
            Method::Pca { .. } => "pca",
        };
        out.push_str(&format!("{name},{},{},{:.6},{:.6}\n", r.m, r.seed, r.error_rate, r.train_seconds));
    }
    out
}

/// One shared split, then each method: reduce features, train, score on the
/// held-out part. Random projections use `GaussianProjection(M, N, seed)`;
/// PCA is fitted on the training split only. `train_seconds` covers fitting
/// the reduction (PCA) and the classifier.
pub fn run_pipeline(
    data: &Dataset,
    ratio: f64,
    methods: &[Method],
    seed: u64,
    opts: MlrOptions,
) -> Result<Vec<PipelineReport>> {
    if methods.is_empty() {
        return Err(invalid("no methods requested"));
    }
    let n = data.dim();
    for m in methods {
        if let Method::RandomProjection { m } | Method::Pca { m } = *m {
            if m > n {
                return Err(invalid(format!("M = {m} exceeds the feature dimension {n}")));
            }
        }
    }
    let (train, test) = split(data, ratio, seed)?;
    methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let (train_m, test_m, m) = match method {
                Method::Identity => (train.clone(), test.clone(), n),
                Method::RandomProjection { m } => {
                    let p = GaussianProjection::new(m, n, seed)?;
                    (train.transformed(p.matrix())?, test.transformed(p.matrix())?, m)
                }
                Method::Pca { m } => {
                    let model = pca::inertia_of_rows(&train.features)?;
                    let sub = pca::principal_subspace(&model, m)?;
                    let pt = sub.basis.transpose();
                    (train.transformed(&pt)?, test.transformed(&pt)?, m)
                }
            };
            let start = match method {
                Method::Pca { .. } => start,
                _ => Instant::now(),
            };
            let model = train_mlr(&train_m, opts)?;
            let train_seconds = start.elapsed().as_secs_f64();
            Ok(PipelineReport {
                method,
                m,
                seed,
                error_rate: model.error_rate(&test_m),
                train_seconds,
                iterations: model.iterations,
                converged: model.converged,
            })
        })
        .collect()
}
