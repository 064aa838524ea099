//! Two-layer regressor that feeds a forest's prediction and its spread into
//! a second forest.
//!
//! Layer 1 learns `x -> y` on every row (the intermediate target is observed
//! everywhere) and emits `(y_hat, sigma_y)`. Layer 2 learns `z` on the rows
//! where `z` is observed, from any combination of `x`, `y_hat` and
//! `sigma_y`. The `y_hat`/`sigma_y` pair can be standardised and rotated in
//! its own plane so that layer 2 sees a blend of the two channels.
//!
//! Both layers always share one set of forest hyperparameters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureMatrix};
use crate::error::{Error, Result};
use crate::forest::{fit_forest_unchecked, ForestHyperparams, ForestModel, PredictionWithUncertainty};
use crate::validation::{self, blocking_split, kfold_splits, CvScheme, MetricKind, Split, TuningResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureFlags {
    pub use_x: bool,
    pub use_y: bool,
    pub use_sigma_y: bool,
}

impl FeatureFlags {
    pub const X: Self = Self::new(true, false, false);
    pub const X_Y: Self = Self::new(true, true, false);
    pub const X_SIGMA: Self = Self::new(true, false, true);
    pub const X_Y_SIGMA: Self = Self::new(true, true, true);

    pub const fn new(use_x: bool, use_y: bool, use_sigma_y: bool) -> Self {
        Self {
            use_x,
            use_y,
            use_sigma_y,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.use_x || self.use_y || self.use_sigma_y) {
            return Err(Error::Config("at least one second-layer input must be enabled".into()));
        }
        Ok(())
    }

    /// Whether the first layer has to be fit at all.
    pub fn needs_first_layer(&self) -> bool {
        self.use_y || self.use_sigma_y
    }
}

/// Mixing angle in degrees, within `[0, 90]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RotationAngle(f64);

impl RotationAngle {
    pub const ZERO: Self = Self(0.0);

    pub fn new(degrees: f64) -> Result<Self> {
        if !(0.0..=90.0).contains(&degrees) {
            return Err(Error::Config(format!(
                "rotation angle must lie in [0, 90] degrees, got {degrees}"
            )));
        }
        Ok(Self(degrees))
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    /// 0 to 90 degrees in 5 degree steps.
    pub fn default_grid() -> Vec<RotationAngle> {
        (0..=18).map(|i| Self(f64::from(i) * 5.0)).collect()
    }
}

impl TryFrom<f64> for RotationAngle {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<RotationAngle> for f64 {
    fn from(a: RotationAngle) -> f64 {
        a.0
    }
}

/// Rotates `(y, sigma)` counter-clockwise by `theta`.
pub fn rotate(y: f64, sigma: f64, theta: RotationAngle) -> (f64, f64) {
    if theta.0 == 0.0 {
        return (y, sigma);
    }
    let (sin, cos) = theta.0.to_radians().sin_cos();
    (cos * y - sin * sigma, sin * y + cos * sigma)
}

/// Centres and scales the two first-layer outputs. A channel with zero
/// spread is only centred.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean_y: f64,
    pub std_y: f64,
    pub mean_sigma: f64,
    pub std_sigma: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Standardizer {
    pub fn fit(outputs: &[PredictionWithUncertainty]) -> Self {
        let ys: Vec<f64> = outputs.iter().map(|p| p.mean).collect();
        let ss: Vec<f64> = outputs.iter().map(|p| p.std).collect();
        let (mean_y, std_y) = mean_std(&ys);
        let (mean_sigma, std_sigma) = mean_std(&ss);
        Self {
            mean_y,
            std_y,
            mean_sigma,
            std_sigma,
        }
    }

    pub fn apply(&self, y: f64, sigma: f64) -> (f64, f64) {
        let scale = |v: f64, m: f64, s: f64| if s > 0.0 { (v - m) / s } else { v - m };
        (
            scale(y, self.mean_y, self.std_y),
            scale(sigma, self.mean_sigma, self.std_sigma),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultilayerConfig {
    pub flags: FeatureFlags,
    /// Standardise `(y_hat, sigma_y)` before layer 2. Implied by `theta`.
    pub standardize: bool,
    pub theta: Option<RotationAngle>,
    /// Train layer 2 on out-of-bag layer-1 outputs instead of in-sample ones.
    pub oob: bool,
}

impl MultilayerConfig {
    pub fn new(flags: FeatureFlags) -> Self {
        Self {
            flags,
            standardize: false,
            theta: None,
            oob: false,
        }
    }

    pub fn standardized(mut self) -> Self {
        self.standardize = true;
        self
    }

    pub fn with_theta(mut self, theta: RotationAngle) -> Self {
        self.theta = Some(theta);
        self.standardize = true;
        self
    }

    pub fn with_oob(mut self, oob: bool) -> Self {
        self.oob = oob;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.flags.validate()?;
        if self.theta.is_some() && !(self.flags.use_y && self.flags.use_sigma_y) {
            return Err(Error::Config(
                "a rotation angle needs both the y and sigma_y channels".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultilayerModel {
    pub(crate) layer1: Option<ForestModel>,
    pub(crate) layer2: ForestModel,
    pub(crate) config: MultilayerConfig,
    pub(crate) standardizer: Option<Standardizer>,
    pub(crate) hyperparams: ForestHyperparams,
    pub(crate) feature_names: Vec<String>,
}

impl MultilayerModel {
    pub fn layer1(&self) -> Option<&ForestModel> {
        self.layer1.as_ref()
    }

    pub fn layer2(&self) -> &ForestModel {
        &self.layer2
    }

    pub fn config(&self) -> &MultilayerConfig {
        &self.config
    }

    pub fn flags(&self) -> FeatureFlags {
        self.config.flags
    }

    pub fn theta(&self) -> Option<RotationAngle> {
        self.config.theta
    }

    pub fn standardizer(&self) -> Option<&Standardizer> {
        self.standardizer.as_ref()
    }

    pub fn hyperparams(&self) -> &ForestHyperparams {
        &self.hyperparams
    }

    /// Names of the input features `x`.
    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_input_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Names of the second-layer inputs, in column order.
    pub fn layer2_channels(&self) -> Vec<String> {
        let mut names = Vec::new();
        let flags = self.config.flags;
        if flags.use_x {
            names.extend(self.feature_names.iter().cloned());
        }
        let rotated = self.config.theta.is_some_and(|t| t.degrees() != 0.0);
        if flags.use_y {
            names.push(if rotated { "y_rotated" } else { "y" }.to_string());
        }
        if flags.use_sigma_y {
            names.push(if rotated { "sigma_y_rotated" } else { "sigma_y" }.to_string());
        }
        names
    }

    /// Layer-2 importances paired with their channel names.
    pub fn layer2_importances(&self) -> Vec<(String, f64)> {
        self.layer2_channels()
            .into_iter()
            .zip(self.layer2.feature_importances().iter().copied())
            .collect()
    }

    fn channel_index(&self, name_prefix: &str) -> Option<usize> {
        self.layer2_channels()
            .iter()
            .position(|c| c == name_prefix || c == &format!("{name_prefix}_rotated"))
    }

    /// Layer-2 importance of the `sigma_y` channel. With a non-zero rotation
    /// this is the rotated channel that starts out as `sigma_y` at zero angle.
    pub fn importance_of_sigma(&self) -> Result<f64> {
        if !self.config.flags.use_sigma_y {
            return Err(Error::Query("model was fit without the sigma_y channel".into()));
        }
        let idx = self.channel_index("sigma_y").expect("sigma_y channel present");
        Ok(self.layer2.feature_importances()[idx])
    }

    /// Layer-2 importance of the `y` channel (rotated when `theta != 0`).
    pub fn importance_of_y(&self) -> Result<f64> {
        if !self.config.flags.use_y {
            return Err(Error::Query("model was fit without the y channel".into()));
        }
        let idx = self.channel_index("y").expect("y channel present");
        Ok(self.layer2.feature_importances()[idx])
    }

    /// First-layer `(y_hat, sigma_y)` for every row of `x`.
    pub fn layer1_outputs(&self, x: &FeatureMatrix) -> Result<Vec<PredictionWithUncertainty>> {
        self.check_inputs(x.n_features())?;
        match &self.layer1 {
            Some(l1) => l1.predict_matrix(x),
            None => Err(Error::Query("model has no first layer".into())),
        }
    }

    fn check_inputs(&self, n: usize) -> Result<()> {
        if n != self.n_input_features() {
            return Err(Error::Query(format!(
                "query has {n} features, model expects {}",
                self.n_input_features()
            )));
        }
        Ok(())
    }

    pub fn predict(&self, x_query: &[f64]) -> Result<PredictionWithUncertainty> {
        let x = FeatureMatrix::from_rows(&[x_query.to_vec()])
            .map_err(|_| Error::Query("empty query".into()))?;
        Ok(self.predict_matrix(&x)?[0])
    }

    pub fn predict_matrix(&self, x: &FeatureMatrix) -> Result<Vec<PredictionWithUncertainty>> {
        self.check_inputs(x.n_features())?;
        let outputs = match &self.layer1 {
            Some(l1) => Some(l1.predict_matrix(x)?),
            None => None,
        };
        let features = assemble_layer2(
            x,
            outputs.as_deref(),
            &self.config,
            self.standardizer.as_ref(),
        );
        self.layer2.predict_matrix(&features)
    }
}

/// Builds layer-2 inputs: `x` columns, then `y`, then `sigma_y`.
fn assemble_layer2(
    x: &FeatureMatrix,
    outputs: Option<&[PredictionWithUncertainty]>,
    config: &MultilayerConfig,
    standardizer: Option<&Standardizer>,
) -> FeatureMatrix {
    let flags = config.flags;
    let mut columns: Vec<Vec<f64>> = Vec::new();
    if flags.use_x {
        columns.extend(x.columns().iter().cloned());
    }
    if let Some(outputs) = outputs {
        let theta = config.theta.unwrap_or(RotationAngle::ZERO);
        let (ys, ss): (Vec<f64>, Vec<f64>) = outputs
            .iter()
            .map(|p| {
                let (y, s) = match standardizer {
                    Some(st) => st.apply(p.mean, p.std),
                    None => (p.mean, p.std),
                };
                rotate(y, s, theta)
            })
            .unzip();
        if flags.use_y {
            columns.push(ys);
        }
        if flags.use_sigma_y {
            columns.push(ss);
        }
    }
    FeatureMatrix::from_columns(columns).expect("at least one layer-2 channel")
}

/// Fits both layers. Rows with `z_mask == false` still train layer 1.
pub fn fit_multilayer(
    train: &Dataset,
    config: &MultilayerConfig,
    hp: &ForestHyperparams,
) -> Result<MultilayerModel> {
    train.validate()?;
    hp.validate()?;
    config.validate()?;
    if config.flags.needs_first_layer() {
        train.y()?;
        if train.n_rows() < hp.min_samples_leaf {
            return Err(Error::Fit(format!(
                "{} rows is fewer than min_samples_leaf = {}",
                train.n_rows(),
                hp.min_samples_leaf
            )));
        }
    }
    train.z()?;
    let observed = train.observed_z_rows().len();
    if observed < hp.min_samples_leaf || observed == 0 {
        return Err(Error::Fit(format!(
            "{observed} rows with observed z; need at least min_samples_leaf = {}",
            hp.min_samples_leaf.max(1)
        )));
    }
    Ok(fit_multilayer_unchecked(train, config, hp))
}

/// Callers guarantee a validated config, `y` when needed, `z` and at least
/// one observed `z` row.
pub(crate) fn fit_multilayer_unchecked(
    train: &Dataset,
    config: &MultilayerConfig,
    hp: &ForestHyperparams,
) -> MultilayerModel {
    let (layer1, outputs) = if config.flags.needs_first_layer() {
        let y = train.y.as_deref().expect("y checked by caller");
        let l1 = fit_forest_unchecked(&train.x, y, hp);
        let outputs = if config.oob {
            l1.predict_out_of_bag(&train.x)
        } else {
            l1.predict_matrix(&train.x)
        }
        .expect("layer-1 dimensions match training data");
        (Some(l1), Some(outputs))
    } else {
        (None, None)
    };
    let standardizer = match (&outputs, config.standardize || config.theta.is_some()) {
        (Some(o), true) => Some(Standardizer::fit(o)),
        _ => None,
    };
    let observed = train.observed_z_rows();
    let all_features = assemble_layer2(&train.x, outputs.as_deref(), config, standardizer.as_ref());
    let features = all_features.select_rows(&observed);
    let z = train.z.as_deref().expect("z checked by caller");
    let targets: Vec<f64> = observed.iter().map(|&r| z[r]).collect();
    let layer2 = fit_forest_unchecked(&features, &targets, hp);
    MultilayerModel {
        layer1,
        layer2,
        config: *config,
        standardizer,
        hyperparams: *hp,
        feature_names: train.feature_names.clone(),
    }
}

pub fn predict_multilayer(model: &MultilayerModel, x_query: &[f64]) -> Result<PredictionWithUncertainty> {
    model.predict(x_query)
}

fn check_pipeline_inputs(dataset: &Dataset, config: &MultilayerConfig, hp: &ForestHyperparams) -> Result<()> {
    dataset.validate()?;
    hp.validate()?;
    config.validate()?;
    dataset.z()?;
    if config.flags.needs_first_layer() {
        dataset.y()?;
    }
    Ok(())
}

/// Scores one resampling round. `training` holds only observed-`z` rows;
/// `split` indexes into it. Layer 1 still sees every row of `training`.
fn pipeline_split_score(
    training: &Dataset,
    split: &Split,
    config: &MultilayerConfig,
    hp: &ForestHyperparams,
    metric: MetricKind,
) -> Result<f64> {
    let mut fold = training.clone();
    for &r in &split.validate {
        fold.z_mask[r] = false;
    }
    let model = fit_multilayer_unchecked(&fold, config, hp);
    let preds: Vec<f64> = model
        .predict_matrix(&training.x.select_rows(&split.validate))?
        .into_iter()
        .map(|p| p.mean)
        .collect();
    let z = training.z()?;
    let truth: Vec<f64> = split.validate.iter().map(|&r| z[r]).collect();
    Ok(validation::score(metric, &truth, &preds)?.value)
}

/// Cross-validates the whole pipeline on the observed-`z` rows of `dataset`.
/// Blocking splits along the first feature; k-fold shuffles with `seed`.
pub fn cv_multilayer(
    dataset: &Dataset,
    config: &MultilayerConfig,
    hp: &ForestHyperparams,
    scheme: CvScheme,
    metric: MetricKind,
    seed: u64,
) -> Result<f64> {
    check_pipeline_inputs(dataset, config, hp)?;
    let training = dataset.select_rows(&dataset.observed_z_rows());
    let splits = match scheme {
        CvScheme::Blocking => vec![blocking_split(&training.order_by_first_feature())?],
        CvScheme::Kfold { k } => kfold_splits(training.n_rows(), k, seed)?,
    };
    let mut total = 0.0;
    for split in &splits {
        total += pipeline_split_score(&training, split, config, hp, metric)?;
    }
    Ok(total / splits.len() as f64)
}

/// Blocking cross-validated R^2 of the pipeline.
pub fn blocking_cv_multilayer(
    dataset: &Dataset,
    config: &MultilayerConfig,
    hp: &ForestHyperparams,
) -> Result<f64> {
    cv_multilayer(dataset, config, hp, CvScheme::Blocking, MetricKind::R2, 0)
}

/// Tunes the shared leaf size of both layers by pipeline cross-validation.
pub fn tune_multilayer_leaf(
    dataset: &Dataset,
    config: &MultilayerConfig,
    scheme: CvScheme,
    candidates: &[usize],
    objective: MetricKind,
    base: &ForestHyperparams,
    seed: u64,
) -> Result<TuningResult> {
    check_pipeline_inputs(dataset, config, base)?;
    let n = dataset.observed_z_rows().len();
    if let Some(&c) = candidates.iter().find(|&&c| c == 0 || c > n) {
        return Err(Error::Config(format!(
            "candidate leaf size {c} outside 1..={n}"
        )));
    }
    validation::tune_with(candidates, objective, |msl| {
        cv_multilayer(
            dataset,
            config,
            &base.with_min_samples_leaf(msl),
            scheme,
            objective,
            seed,
        )
    })
}

/// Angle with the best blocking-CV R^2 for the `{x?, y, sigma_y}` pipeline;
/// ties go to the smaller angle. Returns the full score table as well.
pub fn tune_theta_scored(
    train: &Dataset,
    flags: FeatureFlags,
    hp: &ForestHyperparams,
    grid: &[RotationAngle],
    oob: bool,
) -> Result<(RotationAngle, Vec<(RotationAngle, f64)>)> {
    if grid.is_empty() {
        return Err(Error::Config("empty rotation grid".into()));
    }
    if !(flags.use_y && flags.use_sigma_y) {
        return Err(Error::Config(
            "rotation tuning needs both the y and sigma_y channels".into(),
        ));
    }
    let scores: Vec<(RotationAngle, f64)> = grid
        .par_iter()
        .map(|&theta| {
            let config = MultilayerConfig::new(flags).with_theta(theta).with_oob(oob);
            blocking_cv_multilayer(train, &config, hp).map(|s| (theta, s))
        })
        .collect::<Result<_>>()?;
    let mut best = scores[0];
    for &(theta, s) in &scores[1..] {
        if s > best.1 || (s == best.1 && theta < best.0) {
            best = (theta, s);
        }
    }
    Ok((best.0, scores))
}

pub fn tune_theta(
    train: &Dataset,
    flags: FeatureFlags,
    hp: &ForestHyperparams,
    grid: &[RotationAngle],
) -> Result<RotationAngle> {
    tune_theta_scored(train, flags, hp, grid, false).map(|(t, _)| t)
}
