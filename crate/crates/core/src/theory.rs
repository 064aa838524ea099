//! Averaging lengthscale of a forest fit to a noisy straight line.
//!
//! With leaf size `n`, `k`-fold cross-validation and targets spaced by
//! `delta_y` along a line, bias from averaging over a leaf competes with
//! the noise `sigma` left in the leaf mean. The optimum satisfies
//! `eq2_lhs(n, k, delta_y) = sigma^2`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{generate, GeneratorConfig};
use crate::error::{Error, Result};
use crate::forest::ForestHyperparams;
use crate::validation::{tune_min_samples_leaf, CvScheme, MetricKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthscaleParams {
    pub n: usize,
    pub k: usize,
    pub delta_y: f64,
    pub sigma: f64,
}

impl LengthscaleParams {
    pub fn new(n: usize, k: usize, delta_y: f64, sigma: f64) -> Self {
        Self { n, k, delta_y, sigma }
    }

    pub fn validate(&self) -> Result<()> {
        check_k(self.k)?;
        if self.n == 0 {
            return Err(Error::Config("leaf size n must be at least 1".into()));
        }
        if !(self.delta_y >= 0.0 && self.delta_y.is_finite()) {
            return Err(Error::Config(format!("delta_y must be finite and >= 0, got {}", self.delta_y)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be finite and >= 0, got {}", self.sigma)));
        }
        Ok(())
    }

    /// The approximations assume many more rows per leaf than folds.
    pub fn in_valid_regime(&self) -> bool {
        self.n >= 3 * self.k
    }
}

fn check_k(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    Ok(())
}

/// Root-mean-square error from averaging the trend over a leaf.
pub fn underfit_error(p: &LengthscaleParams) -> Result<f64> {
    p.validate()?;
    let (n, k, dy2) = (p.n as f64, p.k as f64, p.delta_y * p.delta_y);
    Ok((n * n * dy2 / 12.0 + n * k * k * dy2 / (12.0 * (k - 1.0))).sqrt())
}

/// Noise left in a leaf mean over the `n (k-1)/k` rows a fold trains on.
pub fn noise_error(p: &LengthscaleParams) -> Result<f64> {
    p.validate()?;
    let (n, k) = (p.n as f64, p.k as f64);
    Ok(p.sigma / (n * (k - 1.0) / k).sqrt())
}

/// Left-hand side of the optimality condition `eq2_lhs(n) = sigma^2`.
pub fn eq2_lhs(n: usize, k: usize, delta_y: f64) -> Result<f64> {
    check_k(k)?;
    let (n, k, dy2) = (n as f64, k as f64, delta_y * delta_y);
    let km1 = (k - 1.0) * (k - 1.0);
    Ok(n.powi(3) * k * k * dy2 / (6.0 * km1) + n * n * k.powi(3) * dy2 / (12.0 * km1))
}

/// Total squared error whose stationarity condition is
/// `eq2_lhs(n, k, delta_y) = sigma^2`.
pub fn total_squared_error(n: usize, k: usize, delta_y: f64, sigma: f64) -> Result<f64> {
    check_k(k)?;
    if n == 0 {
        return Err(Error::Config("leaf size n must be at least 1".into()));
    }
    let (n, k, dy2) = (n as f64, k as f64, delta_y * delta_y);
    let km1 = (k - 1.0) * (k - 1.0);
    Ok(k * k * dy2 * n * n / (12.0 * km1) + k.powi(3) * dy2 * n / (12.0 * km1) + sigma * sigma / n)
}

/// Smallest integer `n >= 1` minimising [`total_squared_error`]. The error
/// is convex in `n`, so the scan stops at the first increase.
pub fn optimal_n(k: usize, delta_y: f64, sigma: f64) -> Result<usize> {
    check_k(k)?;
    if !(delta_y > 0.0 && delta_y.is_finite()) {
        return Err(Error::Config(format!("delta_y must be finite and > 0, got {delta_y}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    let mut best = (1, total_squared_error(1, k, delta_y, sigma)?);
    let mut n = 2;
    loop {
        let e = total_squared_error(n, k, delta_y, sigma)?;
        if e >= best.1 {
            return Ok(best.0);
        }
        best = (n, e);
        n += 1;
    }
}

/// Continuous root of `eq2_lhs(n) = sigma^2` by bisection.
pub fn eq2_root(k: usize, delta_y: f64, sigma: f64) -> Result<f64> {
    check_k(k)?;
    if !(delta_y > 0.0) {
        return Err(Error::Config(format!("delta_y must be > 0, got {delta_y}")));
    }
    let target = sigma * sigma;
    let f = |n: f64| -> f64 {
        let (k, dy2) = (k as f64, delta_y * delta_y);
        let km1 = (k - 1.0) * (k - 1.0);
        n.powi(3) * k * k * dy2 / (6.0 * km1) + n * n * k.powi(3) * dy2 / (12.0 * km1) - target
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Ordinary least squares line with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
}

impl LineFit {
    pub fn fit(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Data(format!("{} x values but {} y values", x.len(), y.len())));
        }
        let n = x.len();
        if n < 3 {
            return Err(Error::Data(format!("need at least 3 points for a line fit, got {n}")));
        }
        let nf = n as f64;
        let mx = x.iter().sum::<f64>() / nf;
        let my = y.iter().sum::<f64>() / nf;
        let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
        if sxx == 0.0 {
            return Err(Error::Data("x values are all equal".into()));
        }
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        let s2 = rss / (nf - 2.0);
        Ok(Self {
            slope,
            intercept,
            slope_se: (s2 / sxx).sqrt(),
            intercept_se: (s2 * (1.0 / nf + mx * mx / sxx)).sqrt(),
        })
    }

    /// Whether the slope is within one standard error of `target`.
    pub fn slope_consistent_with(&self, target: f64) -> bool {
        (self.slope - target).abs() <= self.slope_se
    }

    pub fn intercept_consistent_with(&self, target: f64) -> bool {
        (self.intercept - target).abs() <= self.intercept_se
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthscaleConfig {
    pub sigmas: Vec<f64>,
    pub n_points: usize,
    pub folds: usize,
    pub n_trees: usize,
    pub candidates: Vec<usize>,
    pub seed: u64,
}

impl Default for LengthscaleConfig {
    fn default() -> Self {
        Self {
            sigmas: vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            n_points: 1000,
            folds: 5,
            n_trees: crate::forest::DEFAULT_N_TREES,
            candidates: (1..=120).collect(),
            seed: 0,
        }
    }
}

impl LengthscaleConfig {
    /// Trend increment between neighbouring rows of the unit-slope line.
    pub fn delta_y(&self) -> f64 {
        let g = GeneratorConfig::linear(self.n_points, 1.0, 0);
        (g.x_max - g.x_min) / (self.n_points as f64 - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthscaleRow {
    pub sigma: f64,
    pub n_opt: usize,
    pub lhs: f64,
    pub ratio_sq: f64,
    pub cv_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthscaleTable {
    pub delta_y: f64,
    pub rows: Vec<LengthscaleRow>,
    pub fit: LineFit,
}

impl LengthscaleTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let err = |e| crate::report::csv_err(path, e);
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["sigma", "n_opt", "lhs", "ratio_sq"]).map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.sigma.to_string(),
                r.n_opt.to_string(),
                r.lhs.to_string(),
                r.ratio_sq.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// For each noise level: generate the noisy line, tune the leaf size by
/// k-fold MSE, and record `eq2_lhs(n_opt)` against `(sigma / delta_y)^2`.
/// Row `i` uses data seed `seed + i`.
pub fn lengthscale_experiment(config: &LengthscaleConfig) -> Result<LengthscaleTable> {
    check_k(config.folds)?;
    if config.sigmas.len() < 3 {
        return Err(Error::Config("need at least 3 noise levels to fit a line".into()));
    }
    let delta_y = config.delta_y();
    let base = ForestHyperparams::new(config.n_trees, 1, config.seed);
    let mut rows = Vec::with_capacity(config.sigmas.len());
    for (i, &sigma) in config.sigmas.iter().enumerate() {
        let data = generate(&GeneratorConfig::linear(
            config.n_points,
            sigma,
            config.seed.wrapping_add(i as u64),
        ))?;
        let tuned = tune_min_samples_leaf(
            &data.x,
            data.y()?,
            CvScheme::Kfold { k: config.folds },
            &config.candidates,
            MetricKind::Mse,
            &base,
            config.seed,
        )?;
        let n_opt = tuned.best_min_samples_leaf;
        rows.push(LengthscaleRow {
            sigma,
            n_opt,
            lhs: eq2_lhs(n_opt, config.folds, 1.0)?,
            ratio_sq: (sigma / delta_y).powi(2),
            cv_mse: tuned.cv_score,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.ratio_sq).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.lhs).collect();
    let fit = LineFit::fit(&xs, &ys)?;
    Ok(LengthscaleTable { delta_y, rows, fit })
}
