//! Scripted end-to-end protocols: generate or load data, tune on the
//! training region, fit, and score the extrapolation against held-out truth.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{generate, Dataset, GeneratorConfig, NoiseDistribution, TargetKind};
use crate::error::{Error, Result};
use crate::forest::{fit_forest, ForestHyperparams, DEFAULT_N_TREES};
use crate::multilayer::{
    fit_multilayer, tune_multilayer_leaf, tune_theta_scored, FeatureFlags, MultilayerConfig,
    MultilayerModel, RotationAngle,
};
use crate::report::{median, svg_line_plot, write_svg, Comparison, ExperimentReport, Series, Table};
use crate::theory::{lengthscale_experiment, LengthscaleConfig};
use crate::validation::{default_candidates, r2, CvScheme, MetricKind};

pub const DEFAULT_POINTS_PER_PERIOD: usize = 500;
pub const DEFAULT_SEED_COUNT: u64 = 20;

/// Prediction departing from its boundary value by more than this ends the
/// plateau at the start of the validation region.
pub const PLATEAU_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub seeds: Vec<u64>,
    pub points_per_period: usize,
    pub n_trees: usize,
    /// Leaf sizes to search; `None` picks them from the training size.
    pub candidates: Option<Vec<usize>>,
    pub oob: bool,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            seeds: (0..DEFAULT_SEED_COUNT).collect(),
            points_per_period: DEFAULT_POINTS_PER_PERIOD,
            n_trees: DEFAULT_N_TREES,
            candidates: None,
            oob: false,
        }
    }
}

impl ExperimentSettings {
    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Self {
        self.seeds = seeds;
        self
    }

    fn record(&self, report: &mut ExperimentReport) {
        report
            .setting("points_per_period", self.points_per_period)
            .setting("n_trees", self.n_trees)
            .setting("cv", "blocking on the training region")
            .setting("layer1_outputs", if self.oob { "out-of-bag" } else { "in-sample" });
        if let Some(c) = &self.candidates {
            report.setting("candidates", format!("{c:?}"));
        }
    }

    fn candidates(&self, n_train: usize) -> Vec<usize> {
        self.candidates
            .clone()
            .unwrap_or_else(|| default_candidates(n_train))
            .into_iter()
            .filter(|&c| c >= 1 && c <= n_train)
            .collect()
    }
}

/// How a pipeline variant is tuned and fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub flags: FeatureFlags,
    pub tune_theta: bool,
}

impl Variant {
    pub const fn plain(flags: FeatureFlags) -> Self {
        Self {
            flags,
            tune_theta: false,
        }
    }

    pub const fn rotated() -> Self {
        Self {
            flags: FeatureFlags::X_Y_SIGMA,
            tune_theta: true,
        }
    }
}

/// A tuned, fitted variant scored on the masked rows.
#[derive(Debug, Clone)]
pub struct VariantOutcome {
    pub variant: Variant,
    pub min_samples_leaf: usize,
    pub theta: Option<f64>,
    pub r2: f64,
    pub mse: f64,
    pub model: MultilayerModel,
    /// Predictions on every row of the dataset.
    pub z_pred: Vec<f64>,
    pub z_std: Vec<f64>,
}

impl VariantOutcome {
    pub fn importance_of_sigma(&self) -> Option<f64> {
        self.model.importance_of_sigma().ok()
    }

    pub fn importance_of_y(&self) -> Option<f64> {
        self.model.importance_of_y().ok()
    }
}

/// Tunes the shared leaf size by blocking CV on the observed-`z` rows,
/// then the rotation angle at that size when asked, fits on everything and
/// scores on the masked rows.
pub fn run_variant(
    data: &Dataset,
    variant: Variant,
    settings: &ExperimentSettings,
    seed: u64,
    fixed_leaf: Option<usize>,
) -> Result<VariantOutcome> {
    let train_rows = data.observed_z_rows();
    let z = data.z()?;
    let valid_rows: Vec<usize> = data
        .masked_z_rows()
        .into_iter()
        .filter(|&r| z[r].is_finite())
        .collect();
    if valid_rows.is_empty() {
        return Err(Error::Data("no masked rows with a true value to validate on".into()));
    }
    let base = ForestHyperparams::new(settings.n_trees, 1, seed);
    let mut config = MultilayerConfig::new(variant.flags).with_oob(settings.oob);
    let min_samples_leaf = match fixed_leaf {
        Some(m) => m,
        None => {
            let candidates = settings.candidates(train_rows.len());
            tune_multilayer_leaf(
                data,
                &config,
                CvScheme::Blocking,
                &candidates,
                MetricKind::R2,
                &base,
                seed,
            )?
            .best_min_samples_leaf
        }
    };
    let hp = base.with_min_samples_leaf(min_samples_leaf);
    let mut theta = None;
    if variant.tune_theta {
        let (t, _) = tune_theta_scored(
            data,
            variant.flags,
            &hp,
            &RotationAngle::default_grid(),
            settings.oob,
        )?;
        config = config.with_theta(t);
        theta = Some(t.degrees());
    }
    let model = fit_multilayer(data, &config, &hp)?;
    let preds = model.predict_matrix(&data.x)?;
    let truth: Vec<f64> = valid_rows.iter().map(|&r| z[r]).collect();
    let pv: Vec<f64> = valid_rows.iter().map(|&r| preds[r].mean).collect();
    let mse = truth.iter().zip(&pv).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / truth.len() as f64;
    Ok(VariantOutcome {
        variant,
        min_samples_leaf,
        theta,
        r2: r2(&truth, &pv)?,
        mse,
        model,
        z_pred: preds.iter().map(|p| p.mean).collect(),
        z_std: preds.iter().map(|p| p.std).collect(),
    })
}

/// Minimum prediction over the masked rows.
pub fn min_prediction(data: &Dataset, z_pred: &[f64]) -> f64 {
    data.masked_z_rows()
        .iter()
        .map(|&r| z_pred[r])
        .fold(f64::INFINITY, f64::min)
}

/// Largest masked-row `x` (first feature) reached before the prediction
/// first moves more than [`PLATEAU_TOLERANCE`] away from its value at the
/// first masked row, walking away from the training region.
pub fn plateau_extent(data: &Dataset, z_pred: &[f64]) -> f64 {
    let mut rows = data.masked_z_rows();
    rows.sort_by(|&a, &b| data.x.get(a, 0).total_cmp(&data.x.get(b, 0)));
    let Some(&first) = rows.first() else {
        return f64::NAN;
    };
    let start = z_pred[first];
    let mut extent = data.x.get(first, 0);
    for &r in &rows {
        if (z_pred[r] - start).abs() > PLATEAU_TOLERANCE {
            break;
        }
        extent = data.x.get(r, 0);
    }
    extent
}

fn periodic(kind: TargetKind, periods: f64, b: f64, noise: NoiseDistribution, ppp: usize, seed: u64) -> Result<Dataset> {
    generate(
        &GeneratorConfig::periodic(kind, periods, ppp, seed)
            .with_b(b)
            .with_noise(noise),
    )
}

/// One seed of a "with versus without" extrapolation comparison.
#[derive(Debug, Clone)]
pub struct ExtrapolationPair {
    pub with: VariantOutcome,
    pub without: VariantOutcome,
    pub min_z: f64,
    pub plateau_extent: f64,
}

fn compare(data: &Dataset, with: Variant, without: Variant, settings: &ExperimentSettings, seed: u64) -> Result<ExtrapolationPair> {
    let w = run_variant(data, with, settings, seed, None)?;
    let wo = run_variant(data, without, settings, seed, None)?;
    Ok(ExtrapolationPair {
        min_z: min_prediction(data, &w.z_pred),
        plateau_extent: plateau_extent(data, &w.z_pred),
        with: w,
        without: wo,
    })
}

fn per_seed<T: Send>(seeds: &[u64], f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    seeds.par_iter().map(|&s| f(s)).collect()
}

fn curve_table(data: &Dataset, c: &ExtrapolationPair) -> Table {
    let mut t = Table::new(["x", "y", "z_true", "z_observed", "z_with", "z_with_std", "z_without", "z_without_std"]);
    let y = data.y.as_deref();
    let z = data.z.as_deref().expect("z present");
    for r in 0..data.n_rows() {
        t.push(vec![
            data.x.get(r, 0),
            y.map_or(f64::NAN, |y| y[r]),
            z[r],
            if data.z_mask[r] { 1.0 } else { 0.0 },
            c.with.z_pred[r],
            c.with.z_std[r],
            c.without.z_pred[r],
            c.without.z_std[r],
        ]);
    }
    t
}

fn write_curve(out: Option<&Path>, name: &str, data: &Dataset, c: &ExtrapolationPair) -> Result<()> {
    let Some(dir) = out else { return Ok(()) };
    let t = curve_table(data, c);
    t.write_csv(&dir.join(format!("{name}_predictions.csv")))?;
    let x = t.column("x").unwrap();
    let (zt, zw, zo) = (
        t.column("z_true").unwrap(),
        t.column("z_with").unwrap(),
        t.column("z_without").unwrap(),
    );
    let svg = svg_line_plot(
        name,
        "x",
        "z",
        &[
            Series { label: "with", x: &x, y: &zw },
            Series { label: "without", x: &x, y: &zo },
            Series { label: "truth", x: &x, y: &zt },
        ],
    );
    write_svg(&dir.join(format!("{name}_predictions.svg")), &svg)
}

fn write_seed_table(out: Option<&Path>, name: &str, seeds: &[u64], rows: &[ExtrapolationPair]) -> Result<()> {
    let Some(dir) = out else { return Ok(()) };
    let mut t = Table::new([
        "seed",
        "min_samples_leaf_with",
        "min_samples_leaf_without",
        "r2_with",
        "r2_without",
        "importance_y",
        "importance_sigma",
        "min_z",
        "plateau_extent",
    ]);
    for (s, c) in seeds.iter().zip(rows) {
        t.push(vec![
            *s as f64,
            c.with.min_samples_leaf as f64,
            c.without.min_samples_leaf as f64,
            c.with.r2,
            c.without.r2,
            c.with.importance_of_y().unwrap_or(f64::NAN),
            c.with.importance_of_sigma().unwrap_or(f64::NAN),
            c.min_z,
            c.plateau_extent,
        ]);
    }
    t.write_csv(&dir.join(format!("{name}_seeds.csv")))
}

fn summarize(report: &mut ExperimentReport, rows: &[ExtrapolationPair]) {
    let col = |f: &dyn Fn(&ExtrapolationPair) -> f64| median(&rows.iter().map(f).collect::<Vec<_>>());
    report
        .metric("r2_with", col(&|c| c.with.r2))
        .metric("r2_without", col(&|c| c.without.r2))
        .metric("min_samples_leaf_with", col(&|c| c.with.min_samples_leaf as f64))
        .metric("min_samples_leaf_without", col(&|c| c.without.min_samples_leaf as f64))
        .metric("min_z", col(&|c| c.min_z))
        .metric("plateau_extent", col(&|c| c.plateau_extent));
    if rows.iter().all(|c| c.with.importance_of_y().is_some()) {
        report.metric("importance_y", col(&|c| c.with.importance_of_y().unwrap()));
    }
    if rows.iter().all(|c| c.with.importance_of_sigma().is_some()) {
        report.metric("importance_sigma", col(&|c| c.with.importance_of_sigma().unwrap()));
    }
}

fn timed(report: &mut ExperimentReport, start: Instant) {
    report.runtime_seconds = start.elapsed().as_secs_f64();
}

fn ensure_dir(out: Option<&Path>) -> Result<()> {
    if let Some(d) = out {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    Ok(())
}

/// Ensemble spread of a forest on pure noise as the tree count grows.
pub fn fig4(settings: &ExperimentSettings, out: Option<&Path>) -> Result<ExperimentReport> {
    let start = Instant::now();
    ensure_dir(out)?;
    let (n, sigma, max_trees, at) = (100, 1.0, 500, DEFAULT_N_TREES);
    let curves = per_seed(&settings.seeds, |seed| {
        let data = generate(&GeneratorConfig::white_noise(n, sigma, seed))?;
        let hp = ForestHyperparams::new(max_trees, n, seed);
        let forest = fit_forest(&data.x, data.y()?, &hp)?;
        let members = forest.tree_predictions(&[0.5])?;
        // With one leaf per tree every query sees the same member values.
        Ok((1..=max_trees)
            .map(|t| crate::forest::PredictionWithUncertainty::from_members(&members[..t]).std)
            .collect::<Vec<f64>>())
    })?;
    let mut report = ExperimentReport::new("fig4", settings.seeds.clone());
    report
        .setting("n_points", n)
        .setting("sigma", sigma)
        .setting("min_samples_leaf", n);
    let at_125: Vec<f64> = curves.iter().map(|c| c[at - 1]).collect();
    let in_band = at_125.iter().filter(|&&s| (0.093..=0.107).contains(&s)).count();
    let (lo, hi) = at_125
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    report
        .metric("std_125_median", median(&at_125))
        .metric("std_125_min", lo)
        .metric("std_125_max", hi)
        .metric("seeds_in_band", in_band as f64)
        .metric("seed_count", at_125.len() as f64)
        .check("seeds_in_band", Comparison::AtLeast, (0.8 * at_125.len() as f64).ceil());
    if let Some(dir) = out {
        let mut t = Table::new(["n_trees", "std_median", "std_min", "std_max"]);
        for k in 0..max_trees {
            let v: Vec<f64> = curves.iter().map(|c| c[k]).collect();
            let (a, b) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            t.push(vec![(k + 1) as f64, median(&v), a, b]);
        }
        t.write_csv(&dir.join("fig4_std_vs_trees.csv"))?;
        let x = t.column("n_trees").unwrap();
        let m = t.column("std_median").unwrap();
        write_svg(
            &dir.join("fig4_std_vs_trees.svg"),
            &svg_line_plot("ensemble std vs trees", "trees", "std", &[Series { label: "median", x: &x, y: &m }]),
        )?;
    }
    timed(&mut report, start);
    Ok(report)
}

/// Tuned leaf size against noise level on a straight line.
pub fn fig5(config: &LengthscaleConfig, out: Option<&Path>) -> Result<ExperimentReport> {
    let start = Instant::now();
    ensure_dir(out)?;
    let table = lengthscale_experiment(config)?;
    let mut report = ExperimentReport::new("fig5", vec![config.seed]);
    report
        .setting("n_points", config.n_points)
        .setting("folds", config.folds)
        .setting("sigmas", format!("{:?}", config.sigmas))
        .setting("delta_y", table.delta_y);
    report
        .metric("slope", table.fit.slope)
        .metric("slope_se", table.fit.slope_se)
        .metric("intercept", table.fit.intercept)
        .metric("intercept_se", table.fit.intercept_se)
        .metric("slope_deviation_in_se", (table.fit.slope - 1.0).abs() / table.fit.slope_se)
        .check("slope_deviation_in_se", Comparison::AtMost, 1.0);
    for r in &table.rows {
        report.metric(format!("n_opt_sigma_{}", r.sigma), r.n_opt as f64);
    }
    if let Some(dir) = out {
        table.write_csv(&dir.join("fig5_lengthscale.csv"))?;
        let x: Vec<f64> = table.rows.iter().map(|r| r.ratio_sq).collect();
        let y: Vec<f64> = table.rows.iter().map(|r| r.lhs).collect();
        let fit: Vec<f64> = x.iter().map(|v| table.fit.intercept + table.fit.slope * v).collect();
        write_svg(
            &dir.join("fig5_lengthscale.svg"),
            &svg_line_plot(
                "lengthscale law",
                "(sigma / delta_y)^2",
                "lhs(n_opt)",
                &[
                    Series { label: "measured", x: &x, y: &y },
                    Series { label: "fit", x: &x, y: &fit },
                    Series { label: "slope 1", x: &x, y: &x },
                ],
            ),
        )?;
    }
    timed(&mut report, start);
    Ok(report)
}

fn with_without(
    name: &str,
    kind: TargetKind,
    with: Variant,
    noise: NoiseDistribution,
    settings: &ExperimentSettings,
    out: Option<&Path>,
) -> Result<(ExperimentReport, Vec<ExtrapolationPair>)> {
    let start = Instant::now();
    ensure_dir(out)?;
    let rows = per_seed(&settings.seeds, |seed| {
        let data = periodic(kind, 1.0, 0.0, noise, settings.points_per_period, seed)?;
        compare(&data, with, Variant::plain(FeatureFlags::X), settings, seed)
    })?;
    let mut report = ExperimentReport::new(name, settings.seeds.clone());
    settings.record(&mut report);
    report.setting("training_periods", 1).setting("noise", noise.name());
    summarize(&mut report, &rows);
    if let (Some(&seed), Some(first)) = (settings.seeds.first(), rows.first()) {
        let data = periodic(kind, 1.0, 0.0, noise, settings.points_per_period, seed)?;
        write_curve(out, name, &data, first)?;
    }
    write_seed_table(out, name, &settings.seeds, &rows)?;
    timed(&mut report, start);
    Ok((report, rows))
}

/// `z` mediated by `y`: extrapolate with and without the `y` channel.
pub fn fig7(settings: &ExperimentSettings, out: Option<&Path>) -> Result<ExperimentReport> {
    let (mut report, _) = with_without(
        "fig7",
        TargetKind::Cos2Mediated,
        Variant::plain(FeatureFlags::X_Y),
        NoiseDistribution::Gaussian,
        settings,
        out,
    )?;
    report
        .check("r2_with", Comparison::AtLeast, 0.99)
        .check("r2_without", Comparison::Below, 0.0)
        .check("importance_y", Comparison::AtLeast, 0.95);
    Ok(report)
}

/// `z` carried only by the spread of `y`.
pub fn fig8(settings: &ExperimentSettings, noise: NoiseDistribution, out: Option<&Path>) -> Result<ExperimentReport> {
    let (mut report, _) = with_without(
        "fig8",
        TargetKind::Cos2SigmaEncoded,
        Variant::plain(FeatureFlags::X_SIGMA),
        noise,
        settings,
        out,
    )?;
    report
        .check("r2_with", Comparison::AtLeast, 0.80)
        .check("importance_sigma", Comparison::AtLeast, 0.85)
        .check("r2_without", Comparison::AtMost, 0.3);
    Ok(report)
}

pub const FIG9_PERIODS: [f64; 5] = [0.5, 1.0, 2.0, 3.0, 4.0];

/// Sigma-encoded extrapolation as the training range grows.
pub fn fig9(settings: &ExperimentSettings, periods: &[f64], out: Option<&Path>) -> Result<ExperimentReport> {
    let start = Instant::now();
    ensure_dir(out)?;
    let mut report = ExperimentReport::new("fig9", settings.seeds.clone());
    settings.record(&mut report);
    report.setting("periods", format!("{periods:?}"));
    let mut table = Table::new(["periods", "r2_with", "importance_sigma", "min_z", "plateau_extent", "min_samples_leaf"]);
    for &p in periods {
        let rows = per_seed(&settings.seeds, |seed| {
            let data = periodic(TargetKind::Cos2SigmaEncoded, p, 0.0, NoiseDistribution::Gaussian, settings.points_per_period, seed)?;
            let v = run_variant(&data, Variant::plain(FeatureFlags::X_SIGMA), settings, seed, None)?;
            Ok((
                v.r2,
                v.importance_of_sigma().unwrap_or(f64::NAN),
                min_prediction(&data, &v.z_pred),
                plateau_extent(&data, &v.z_pred),
                v.min_samples_leaf as f64,
            ))
        })?;
        let med = |f: fn(&(f64, f64, f64, f64, f64)) -> f64| median(&rows.iter().map(f).collect::<Vec<_>>());
        let row = vec![p, med(|r| r.0), med(|r| r.1), med(|r| r.2), med(|r| r.3), med(|r| r.4)];
        report
            .metric(format!("r2_periods_{p}"), row[1])
            .metric(format!("importance_sigma_periods_{p}"), row[2])
            .metric(format!("min_z_periods_{p}"), row[3])
            .metric(format!("plateau_extent_periods_{p}"), row[4]);
        table.push(row);
    }
    let whole: Vec<&Vec<f64>> = table.rows.iter().filter(|r| r[0] >= 1.0).collect();
    let drops = whole.windows(2).filter(|w| w[1][1] < w[0][1]).count();
    report.metric("r2_decreases_over_whole_periods", drops as f64);
    report.check("r2_decreases_over_whole_periods", Comparison::AtMost, 0.0);
    if periods.contains(&0.5) {
        report
            .check("importance_sigma_periods_0.5", Comparison::AtMost, 0.1)
            .check("r2_periods_0.5", Comparison::Below, 0.0);
    }
    if let Some(dir) = out {
        table.write_csv(&dir.join("fig9_periods.csv"))?;
        let x = table.column("periods").unwrap();
        let (a, b) = (table.column("r2_with").unwrap(), table.column("importance_sigma").unwrap());
        write_svg(
            &dir.join("fig9_periods.svg"),
            &svg_line_plot(
                "training periods",
                "periods",
                "value",
                &[Series { label: "r2", x: &x, y: &a }, Series { label: "importance sigma", x: &x, y: &b }],
            ),
        )?;
    }
    timed(&mut report, start);
    Ok(report)
}

pub const FIG10_B: [f64; 5] = [0.1, 0.3, 0.7, 1.0, 1.5];

#[derive(Debug, Clone, Copy)]
struct RotationRow {
    rotated: f64,
    unrotated: f64,
    y_only: f64,
    sigma_only: f64,
    theta: f64,
}

fn rotation_seed(b: f64, settings: &ExperimentSettings, seed: u64) -> Result<RotationRow> {
    let data = periodic(TargetKind::Cos2Combined, 1.0, b, NoiseDistribution::Gaussian, settings.points_per_period, seed)?;
    let unrotated = run_variant(&data, Variant::plain(FeatureFlags::X_Y_SIGMA), settings, seed, None)?;
    let rotated = run_variant(&data, Variant::rotated(), settings, seed, Some(unrotated.min_samples_leaf))?;
    let y_only = run_variant(&data, Variant::plain(FeatureFlags::X_Y), settings, seed, None)?;
    let sigma_only = run_variant(&data, Variant::plain(FeatureFlags::X_SIGMA), settings, seed, None)?;
    Ok(RotationRow {
        rotated: rotated.r2,
        unrotated: unrotated.r2,
        y_only: y_only.r2,
        sigma_only: sigma_only.r2,
        theta: rotated.theta.unwrap_or(0.0),
    })
}

/// Rotation in the standardised `(y, sigma_y)` plane across noise levels `b`.
pub fn fig10(settings: &ExperimentSettings, bs: &[f64], out: Option<&Path>) -> Result<ExperimentReport> {
    let start = Instant::now();
    ensure_dir(out)?;
    let mut report = ExperimentReport::new("fig10", settings.seeds.clone());
    settings.record(&mut report);
    report
        .setting("b", format!("{bs:?}"))
        .setting("theta_grid_degrees", "0..=90 step 5")
        .setting("tuning_order", "leaf size at theta 0, then theta");
    let mut table = Table::new(["b", "r2_rotated", "r2_unrotated", "r2_y_only", "r2_sigma_only", "theta_opt"]);
    let mut worst_gap = f64::INFINITY;
    for &b in bs {
        let rows = per_seed(&settings.seeds, |seed| rotation_seed(b, settings, seed))?;
        let med = |f: fn(&RotationRow) -> f64| median(&rows.iter().map(f).collect::<Vec<_>>());
        let row = vec![
            b,
            med(|r| r.rotated),
            med(|r| r.unrotated),
            med(|r| r.y_only),
            med(|r| r.sigma_only),
            med(|r| r.theta),
        ];
        worst_gap = worst_gap.min(row[1] - row[2]);
        report
            .metric(format!("r2_rotated_b_{b}"), row[1])
            .metric(format!("r2_unrotated_b_{b}"), row[2])
            .metric(format!("r2_y_only_b_{b}"), row[3])
            .metric(format!("r2_sigma_only_b_{b}"), row[4])
            .metric(format!("theta_opt_b_{b}"), row[5]);
        table.push(row);
    }
    report.metric("min_rotation_gain", worst_gap);
    report.check("min_rotation_gain", Comparison::AtLeast, -0.02);
    for &b in bs {
        let key = format!("theta_opt_b_{b}");
        if b >= 1.0 {
            report.check(&key, Comparison::AtMost, 0.0);
        } else if (b - 0.3).abs() < 1e-9 {
            report.check(&key, Comparison::AtLeast, 30.0).check(&key, Comparison::AtMost, 60.0);
        }
    }
    if let Some(dir) = out {
        table.write_csv(&dir.join("fig10_rotation.csv"))?;
        let x = table.column("b").unwrap();
        let cols: Vec<(&str, Vec<f64>)> = ["r2_rotated", "r2_unrotated", "r2_y_only", "r2_sigma_only"]
            .iter()
            .map(|c| (*c, table.column(c).unwrap()))
            .collect();
        let series: Vec<Series> = cols.iter().map(|(l, y)| Series { label: l, x: &x, y }).collect();
        write_svg(&dir.join("fig10_rotation.svg"), &svg_line_plot("rotation sweep", "b", "r2", &series))?;
    }
    timed(&mut report, start);
    Ok(report)
}

/// Median `r2_with` of the sigma-encoded experiment under each noise law,
/// and the largest departure from the Gaussian value.
pub fn noise_swap(settings: &ExperimentSettings) -> Result<ExperimentReport> {
    let start = Instant::now();
    let mut report = ExperimentReport::new("noise_swap", settings.seeds.clone());
    settings.record(&mut report);
    let mut medians = BTreeMap::new();
    for noise in NoiseDistribution::ALL {
        let r = fig8(settings, noise, None)?;
        let v = r.metrics["r2_with"];
        report.metric(format!("r2_with_{}", noise.name()), v);
        medians.insert(noise.name(), v);
    }
    let base = medians["gaussian"];
    let worst = medians.values().map(|v| (v - base).abs()).fold(0.0, f64::max);
    report.metric("max_r2_change", worst);
    report.check("max_r2_change", Comparison::Below, 0.1);
    timed(&mut report, start);
    Ok(report)
}
