//! Scores, resampling schemes and leaf-size tuning.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::forest::{fit_forest_unchecked, ForestHyperparams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    R2,
    Mse,
}

impl MetricKind {
    /// `true` when `a` is a strictly better score than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            MetricKind::R2 => a > b,
            MetricKind::Mse => a < b,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::R2 => "r2",
            MetricKind::Mse => "mse",
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r2" => Ok(MetricKind::R2),
            "mse" => Ok(MetricKind::Mse),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub kind: MetricKind,
    pub value: f64,
}

fn check_lengths(y_true: &[f64], y_pred: &[f64]) -> Result<()> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Data(format!(
            "{} truths against {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::UndefinedMetric("no rows to score".into()));
    }
    Ok(())
}

/// Coefficient of determination, `1 - SS_res / SS_tot`.
pub fn r2(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_lengths(y_true, y_pred)?;
    let n = y_true.len() as f64;
    let mean = y_true.iter().sum::<f64>() / n;
    let ss_tot: f64 = y_true.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedMetric(
            "R^2 is undefined for a constant target".into(),
        ));
    }
    let ss_res: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(t, p)| (t - p).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_lengths(y_true, y_pred)?;
    Ok(y_true
        .iter()
        .zip(y_pred)
        .map(|(t, p)| (t - p).powi(2))
        .sum::<f64>()
        / y_true.len() as f64)
}

pub fn score(kind: MetricKind, y_true: &[f64], y_pred: &[f64]) -> Result<Metric> {
    let value = match kind {
        MetricKind::R2 => r2(y_true, y_pred)?,
        MetricKind::Mse => mse(y_true, y_pred)?,
    };
    Ok(Metric { kind, value })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CvScheme {
    Kfold { k: usize },
    /// Three contiguous blocks along the first feature; train on the middle.
    Blocking,
}

impl Default for CvScheme {
    fn default() -> Self {
        CvScheme::Kfold { k: 5 }
    }
}

/// One resampling round: fit on `train`, score on `validate`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validate: Vec<usize>,
}

/// Shuffles `0..n` once and deals it into `k` folds whose sizes differ by
/// at most one.
pub fn kfold_folds(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::Data(format!(
            "{n} rows cannot fill {k} folds of at least one row"
        )));
    }
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        folds.push(rows[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

pub fn kfold_splits(n: usize, k: usize, seed: u64) -> Result<Vec<Split>> {
    let folds = kfold_folds(n, k, seed)?;
    Ok((0..k)
        .map(|i| Split {
            train: folds
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .flat_map(|(_, f)| f.iter().copied())
                .collect(),
            validate: folds[i].clone(),
        })
        .collect())
}

/// `order` lists row indices sorted by the blocking feature. The middle
/// third trains, the two outer thirds validate.
pub fn blocking_split(order: &[usize]) -> Result<Split> {
    let n = order.len();
    if n < 3 {
        return Err(Error::Data(format!(
            "blocking cross-validation needs at least 3 rows, got {n}"
        )));
    }
    let lo = (n as f64 / 3.0).round() as usize;
    let hi = (2.0 * n as f64 / 3.0).round() as usize;
    Ok(Split {
        train: order[lo..hi].to_vec(),
        validate: order[..lo].iter().chain(&order[hi..]).copied().collect(),
    })
}

/// Rows ordered by feature 0, ties by index.
pub fn order_by_feature(x: &FeatureMatrix, feature: usize) -> Vec<usize> {
    let col = x.column(feature);
    let mut order: Vec<usize> = (0..x.n_rows()).collect();
    order.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
    order
}

fn forest_split_score(
    x: &FeatureMatrix,
    targets: &[f64],
    hp: &ForestHyperparams,
    split: &Split,
    metric: MetricKind,
) -> Result<f64> {
    let x_train = x.select_rows(&split.train);
    let t_train: Vec<f64> = split.train.iter().map(|&r| targets[r]).collect();
    let model = fit_forest_unchecked(&x_train, &t_train, hp);
    let preds: Vec<f64> = model
        .predict_matrix(&x.select_rows(&split.validate))?
        .into_iter()
        .map(|p| p.mean)
        .collect();
    let truth: Vec<f64> = split.validate.iter().map(|&r| targets[r]).collect();
    Ok(score(metric, &truth, &preds)?.value)
}

fn check_cv_inputs(x: &FeatureMatrix, targets: &[f64], hp: &ForestHyperparams) -> Result<()> {
    hp.validate()?;
    if targets.len() != x.n_rows() {
        return Err(Error::Data(format!(
            "{} targets for {} rows",
            targets.len(),
            x.n_rows()
        )));
    }
    Ok(())
}

/// Mean fold score of a forest under shuffled k-fold cross-validation.
///
/// A `min_samples_leaf` larger than a training fold yields single-leaf
/// trees rather than an error.
pub fn kfold_cv(
    x: &FeatureMatrix,
    targets: &[f64],
    hp: &ForestHyperparams,
    k: usize,
    metric: MetricKind,
    seed: u64,
) -> Result<f64> {
    check_cv_inputs(x, targets, hp)?;
    let splits = kfold_splits(x.n_rows(), k, seed)?;
    let mut total = 0.0;
    for split in &splits {
        total += forest_split_score(x, targets, hp, split, metric)?;
    }
    Ok(total / k as f64)
}

/// Blocking cross-validation along feature 0: no shuffling, one round.
pub fn blocking_cv(
    x: &FeatureMatrix,
    targets: &[f64],
    hp: &ForestHyperparams,
    metric: MetricKind,
) -> Result<f64> {
    check_cv_inputs(x, targets, hp)?;
    let split = blocking_split(&order_by_feature(x, 0))?;
    forest_split_score(x, targets, hp, &split, metric)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub best_min_samples_leaf: usize,
    pub cv_score: f64,
    pub objective: MetricKind,
    /// Every candidate that could be scored, in candidate order.
    pub score_table: Vec<(usize, f64)>,
}

impl TuningResult {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| crate::report::csv_err(path, e))?;
        w.write_record(["min_samples_leaf", self.objective.name()])
            .map_err(|e| crate::report::csv_err(path, e))?;
        for (c, s) in &self.score_table {
            w.write_record([c.to_string(), s.to_string()])
                .map_err(|e| crate::report::csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// All sizes up to `n` for small data, otherwise about 40 geometrically
/// spaced sizes between 1 and `n`.
pub fn default_candidates(n: usize) -> Vec<usize> {
    if n <= 200 {
        return (1..=n.max(1)).collect();
    }
    let steps = 39;
    let mut out: Vec<usize> = (0..=steps)
        .map(|i| (n as f64).powf(i as f64 / steps as f64).round() as usize)
        .collect();
    out.dedup();
    out
}

/// Scores every candidate with `evaluate` and keeps the best. Candidates
/// whose evaluation fails are dropped; ties go to the larger leaf size.
pub fn tune_with<F>(candidates: &[usize], objective: MetricKind, evaluate: F) -> Result<TuningResult>
where
    F: Fn(usize) -> Result<f64> + Sync,
{
    if candidates.is_empty() {
        return Err(Error::Tuning("no candidate leaf sizes".into()));
    }
    let scored: Vec<(usize, Result<f64>)> = candidates
        .par_iter()
        .map(|&c| (c, evaluate(c)))
        .collect();
    let mut table = Vec::new();
    let mut last_err = None;
    for (c, s) in scored {
        match s {
            Ok(v) if v.is_finite() => table.push((c, v)),
            Ok(v) => last_err = Some(format!("candidate {c} scored {v}")),
            Err(e) => last_err = Some(format!("candidate {c}: {e}")),
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for &(c, s) in &table {
        best = match best {
            None => Some((c, s)),
            Some((bc, bs)) if objective.better(s, bs) || (s == bs && c > bc) => Some((c, s)),
            keep => keep,
        };
    }
    let (best_min_samples_leaf, cv_score) = best.ok_or_else(|| {
        Error::Tuning(format!(
            "every candidate failed; last error: {}",
            last_err.unwrap_or_default()
        ))
    })?;
    Ok(TuningResult {
        best_min_samples_leaf,
        cv_score,
        objective,
        score_table: table,
    })
}

/// Tunes the forest leaf size on `(x, targets)`. `base` supplies the tree
/// count and forest seed; `seed` drives the k-fold shuffle.
pub fn tune_min_samples_leaf(
    x: &FeatureMatrix,
    targets: &[f64],
    scheme: CvScheme,
    candidates: &[usize],
    objective: MetricKind,
    base: &ForestHyperparams,
    seed: u64,
) -> Result<TuningResult> {
    if let Some(&c) = candidates.iter().find(|&&c| c == 0 || c > x.n_rows()) {
        return Err(Error::Config(format!(
            "candidate leaf size {c} outside 1..={}",
            x.n_rows()
        )));
    }
    tune_with(candidates, objective, |msl| {
        let hp = base.with_min_samples_leaf(msl);
        match scheme {
            CvScheme::Kfold { k } => kfold_cv(x, targets, &hp, k, objective, seed),
            CvScheme::Blocking => blocking_cv(x, targets, &hp, objective),
        }
    })
}
