//! Tabular data model, synthetic generators and CSV interchange.
//!
//! A [`Dataset`] carries a feature matrix `x`, an optional intermediate
//! target `y` that is observed everywhere, and an optional final target `z`
//! whose availability is described row by row by `z_mask`. Masked `z` cells
//! may still hold the true value (synthetic data keeps it for scoring) or
//! `NaN` (ingested data with blank cells).

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::csv_err as csv_error;

/// Dense feature matrix stored column by column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    n_rows: usize,
    columns: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = columns.first() else {
            return Err(Error::Data("feature matrix needs at least one column".into()));
        };
        let n_rows = first.len();
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(Error::Data("feature columns differ in length".into()));
        }
        Ok(Self { n_rows, columns })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if n_cols == 0 {
            return Err(Error::Data("feature matrix needs at least one column".into()));
        }
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Data("ragged feature rows".into()));
        }
        let columns = (0..n_cols)
            .map(|j| rows.iter().map(|r| r[j]).collect())
            .collect();
        Ok(Self {
            n_rows: rows.len(),
            columns,
        })
    }

    pub fn single(column: Vec<f64>) -> Self {
        Self {
            n_rows: column.len(),
            columns: vec![column],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[row]).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            n_rows: rows.len(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
        }
    }

    /// Appends `column` as the last feature.
    pub fn push_column(&mut self, column: Vec<f64>) -> Result<()> {
        if column.len() != self.n_rows {
            return Err(Error::Data(format!(
                "new column has {} rows, matrix has {}",
                column.len(),
                self.n_rows
            )));
        }
        self.columns.push(column);
        Ok(())
    }
}

/// Feature matrix plus intermediate and final targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub x: FeatureMatrix,
    pub y: Option<Vec<f64>>,
    pub z: Option<Vec<f64>>,
    /// `true` where `z` is observed. Same length as `z` whenever `z` is set.
    pub z_mask: Vec<bool>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.x.n_rows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_rows();
        if n == 0 {
            return Err(Error::Data("dataset has no rows".into()));
        }
        if self.feature_names.len() != self.x.n_features() {
            return Err(Error::Data(format!(
                "{} feature names for {} feature columns",
                self.feature_names.len(),
                self.x.n_features()
            )));
        }
        for (j, col) in self.x.columns().iter().enumerate() {
            if let Some(r) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "non-finite value in feature `{}` at row {r}",
                    self.feature_names[j]
                )));
            }
        }
        if let Some(y) = &self.y {
            if y.len() != n {
                return Err(Error::Data(format!("y has {} rows, x has {n}", y.len())));
            }
            if let Some(r) = y.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!("non-finite y at row {r}")));
            }
        }
        match &self.z {
            Some(z) => {
                if z.len() != n || self.z_mask.len() != n {
                    return Err(Error::Data(format!(
                        "z/z_mask lengths {}/{} do not match {n} rows",
                        z.len(),
                        self.z_mask.len()
                    )));
                }
                if let Some(r) = (0..n).find(|&r| self.z_mask[r] && !z[r].is_finite()) {
                    return Err(Error::Data(format!("non-finite unmasked z at row {r}")));
                }
            }
            None if !self.z_mask.is_empty() => {
                return Err(Error::Data("z_mask given without z".into()));
            }
            None => {}
        }
        Ok(())
    }

    pub fn y(&self) -> Result<&[f64]> {
        self.y
            .as_deref()
            .ok_or_else(|| Error::Data("dataset has no y column".into()))
    }

    pub fn z(&self) -> Result<&[f64]> {
        self.z
            .as_deref()
            .ok_or_else(|| Error::Data("dataset has no z column".into()))
    }

    /// Indices of rows whose `z` is observed.
    pub fn observed_z_rows(&self) -> Vec<usize> {
        (0..self.z_mask.len()).filter(|&r| self.z_mask[r]).collect()
    }

    /// Indices of rows whose `z` is masked.
    pub fn masked_z_rows(&self) -> Vec<usize> {
        (0..self.z_mask.len()).filter(|&r| !self.z_mask[r]).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let pick = |v: &Vec<f64>| rows.iter().map(|&r| v[r]).collect::<Vec<_>>();
        Dataset {
            feature_names: self.feature_names.clone(),
            x: self.x.select_rows(rows),
            y: self.y.as_ref().map(pick),
            z: self.z.as_ref().map(pick),
            z_mask: if self.z.is_some() {
                rows.iter().map(|&r| self.z_mask[r]).collect()
            } else {
                Vec::new()
            },
        }
    }

    /// Row indices ordered by the first feature (stable for ties).
    pub fn order_by_first_feature(&self) -> Vec<usize> {
        let x0 = self.x.column(0);
        let mut idx: Vec<usize> = (0..self.n_rows()).collect();
        idx.sort_by(|&a, &b| x0[a].total_cmp(&x0[b]));
        idx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    Gaussian,
    Cauchy,
    Uniform,
    Exponential,
}

impl NoiseDistribution {
    pub const ALL: [NoiseDistribution; 4] = [
        NoiseDistribution::Gaussian,
        NoiseDistribution::Cauchy,
        NoiseDistribution::Uniform,
        NoiseDistribution::Exponential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseDistribution::Gaussian => "gaussian",
            NoiseDistribution::Cauchy => "cauchy",
            NoiseDistribution::Uniform => "uniform",
            NoiseDistribution::Exponential => "exponential",
        }
    }

    /// Zero-location, unit-scale draw. Uniform and exponential have unit
    /// standard deviation; Cauchy uses its scale parameter.
    fn standard_draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            NoiseDistribution::Gaussian => StandardNormal.sample(rng),
            NoiseDistribution::Cauchy => Cauchy::new(0.0, 1.0)
                .expect("unit Cauchy is valid")
                .sample(rng),
            NoiseDistribution::Uniform => {
                let half_width = 3f64.sqrt();
                rng.random_range(-half_width..half_width)
            }
            NoiseDistribution::Exponential => {
                let e: f64 = Exp1.sample(rng);
                e - 1.0
            }
        }
    }
}

impl std::str::FromStr for NoiseDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoiseDistribution::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown noise distribution `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub distribution: NoiseDistribution,
    pub location: f64,
    pub scale: f64,
}

impl NoiseSpec {
    pub fn new(distribution: NoiseDistribution, location: f64, scale: f64) -> Self {
        Self {
            distribution,
            location,
            scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale >= 0.0) || !self.scale.is_finite() {
            return Err(Error::Config(format!(
                "noise scale must be finite and >= 0, got {}",
                self.scale
            )));
        }
        if !self.location.is_finite() {
            return Err(Error::Config("noise location must be finite".into()));
        }
        Ok(())
    }
}

/// `n` i.i.d. draws from `spec`, reproducible for a given seed.
pub fn sample_noise(spec: &NoiseSpec, n: usize, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Config("sample count must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| spec.location + spec.scale * spec.distribution.standard_draw(&mut rng))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// `y ~ noise(0, sigma)`; no `z`.
    WhiteNoise,
    /// `y ~ x + noise(0, sigma)`; no `z`.
    LinearPlusNoise,
    /// `y = z = cos^2(pi x)`.
    Cos2Mediated,
    /// `y ~ noise(0, |z|)` with `z = cos^2(pi x)`.
    Cos2SigmaEncoded,
    /// `y ~ z + noise(0, b |z|)` with `z = cos^2(pi x)`.
    Cos2Combined,
}

impl TargetKind {
    pub fn has_z(self) -> bool {
        !matches!(self, TargetKind::WhiteNoise | TargetKind::LinearPlusNoise)
    }
}

impl std::str::FromStr for TargetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "white-noise" | "white_noise" => TargetKind::WhiteNoise,
            "linear" | "linear_plus_noise" | "linear-plus-noise" => TargetKind::LinearPlusNoise,
            "cos2-mediated" | "cos2_mediated" => TargetKind::Cos2Mediated,
            "cos2-sigma" | "cos2_sigma_encoded" | "cos2-sigma-encoded" => {
                TargetKind::Cos2SigmaEncoded
            }
            "cos2-combined" | "cos2_combined" => TargetKind::Cos2Combined,
            other => return Err(Error::Config(format!("unknown dataset kind `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_points: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub target_kind: TargetKind,
    /// Relative noise amplitude for [`TargetKind::Cos2Combined`].
    pub b: f64,
    /// Noise scale for the white-noise and linear kinds.
    pub sigma: f64,
    pub noise: NoiseDistribution,
    pub seed: u64,
}

impl GeneratorConfig {
    /// White noise on `0 <= x <= 1`.
    pub fn white_noise(n_points: usize, sigma: f64, seed: u64) -> Self {
        Self {
            n_points,
            x_min: 0.0,
            x_max: 1.0,
            target_kind: TargetKind::WhiteNoise,
            b: 0.0,
            sigma,
            noise: NoiseDistribution::Gaussian,
            seed,
        }
    }

    /// Unit-slope line with noise on `0 <= x <= 10`.
    pub fn linear(n_points: usize, sigma: f64, seed: u64) -> Self {
        Self {
            n_points,
            x_min: 0.0,
            x_max: 10.0,
            target_kind: TargetKind::LinearPlusNoise,
            b: 0.0,
            sigma,
            noise: NoiseDistribution::Gaussian,
            seed,
        }
    }

    /// `periods` of `cos^2(pi x)` with observed `z` on `-periods <= x <= 0`
    /// and masked `z` on `0 < x <= 0.5`, sampled at `points_per_period`
    /// evenly spaced points per unit of `x`.
    pub fn periodic(kind: TargetKind, periods: f64, points_per_period: usize, seed: u64) -> Self {
        let span = periods + 0.5;
        Self {
            n_points: (span * points_per_period as f64).round() as usize + 1,
            x_min: -periods,
            x_max: 0.5,
            target_kind: kind,
            b: 0.0,
            sigma: 1.0,
            noise: NoiseDistribution::Gaussian,
            seed,
        }
    }

    pub fn with_b(mut self, b: f64) -> Self {
        self.b = b;
        self
    }

    pub fn with_noise(mut self, noise: NoiseDistribution) -> Self {
        self.noise = noise;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points < 2 {
            return Err(Error::Config(format!(
                "n_points must be >= 2, got {}",
                self.n_points
            )));
        }
        if !(self.x_min < self.x_max) || !self.x_min.is_finite() || !self.x_max.is_finite() {
            return Err(Error::Config(format!(
                "need finite x_min < x_max, got [{}, {}]",
                self.x_min, self.x_max
            )));
        }
        if !(self.b >= 0.0) || !self.b.is_finite() {
            return Err(Error::Config(format!("b must be >= 0, got {}", self.b)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::Config(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Mean increment of the unit-slope trend between neighbouring points.
    pub fn grid_step(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }
}

/// `cos^2(pi x)`, written so that the zeros at half-integers are exact.
pub fn cos2(x: f64) -> f64 {
    0.5 * (1.0 + (2.0 * PI * x).cos())
}

/// Evenly spaced grid including both end points.
pub fn even_grid(x_min: f64, x_max: f64, n: usize) -> Vec<f64> {
    let last = (n - 1) as f64;
    (0..n)
        .map(|i| {
            let i = i as f64;
            (x_min * (last - i) + x_max * i) / last
        })
        .collect()
}

pub fn generate(config: &GeneratorConfig) -> Result<Dataset> {
    config.validate()?;
    let n = config.n_points;
    let x = even_grid(config.x_min, config.x_max, n);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut eps = || config.noise.standard_draw(&mut rng);

    let (y, z) = match config.target_kind {
        TargetKind::WhiteNoise => (x.iter().map(|_| config.sigma * eps()).collect(), None),
        TargetKind::LinearPlusNoise => (
            x.iter().map(|&xi| xi + config.sigma * eps()).collect(),
            None,
        ),
        TargetKind::Cos2Mediated => {
            let z: Vec<f64> = x.iter().map(|&xi| cos2(xi)).collect();
            (z.clone(), Some(z))
        }
        TargetKind::Cos2SigmaEncoded => {
            let z: Vec<f64> = x.iter().map(|&xi| cos2(xi)).collect();
            (z.iter().map(|zi| zi.abs() * eps()).collect(), Some(z))
        }
        TargetKind::Cos2Combined => {
            let z: Vec<f64> = x.iter().map(|&xi| cos2(xi)).collect();
            let y = z
                .iter()
                .map(|&zi| {
                    let e = eps();
                    if config.b == 0.0 {
                        zi
                    } else {
                        zi + config.b * zi.abs() * e
                    }
                })
                .collect();
            (y, Some(z))
        }
    };
    let z_mask = match &z {
        Some(_) => x.iter().map(|&xi| xi <= 0.0).collect(),
        None => Vec::new(),
    };
    let dataset = Dataset {
        feature_names: vec!["x".to_string()],
        x: FeatureMatrix::single(x),
        y: Some(y),
        z,
        z_mask,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Column names to read from a CSV header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub x: Vec<String>,
    pub y: Option<String>,
    pub z: Option<String>,
}

/// Optional 0/1 column that carries the `z` mask explicitly.
pub const Z_MASK_COLUMN: &str = "z_mask";

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            x: vec!["x".into()],
            y: Some("y".into()),
            z: Some("z".into()),
        }
    }
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("`{raw}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            column: column.to_string(),
            message: format!("`{raw}` is not finite"),
        });
    }
    Ok(v)
}

fn parse_flag(raw: &str, row: usize) -> Result<bool> {
    match raw.trim() {
        "1" | "true" | "True" | "TRUE" => Ok(true),
        "0" | "false" | "False" | "FALSE" => Ok(false),
        other => Err(Error::Parse {
            row,
            column: Z_MASK_COLUMN.to_string(),
            message: format!("`{other}` is not a mask flag"),
        }),
    }
}

/// Reads a dataset. Data rows are numbered from 1 in error messages.
///
/// An empty `z` cell marks the row as masked. When the file also has a
/// `z_mask` column it is honoured, so masked rows can keep their true value.
pub fn read_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from(file, path, schema)
}

/// Like [`read_csv`] for any reader; `path` only labels errors.
pub fn read_csv_from<R: std::io::Read>(source: R, path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not found in header")))
    };
    if schema.x.is_empty() {
        return Err(Error::Schema("schema names no feature columns".into()));
    }
    let x_idx = schema
        .x
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;
    let y_idx = schema.y.as_deref().map(find).transpose()?;
    let z_idx = schema.z.as_deref().map(find).transpose()?;
    let mask_idx = headers.iter().position(|h| h == Z_MASK_COLUMN);

    let mut x_cols = vec![Vec::new(); x_idx.len()];
    let mut y = Vec::new();
    let mut z = Vec::new();
    let mut z_mask = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| csv_error(path, e))?;
        let cell = |j: usize| record.get(j).unwrap_or("");
        for (col, (&j, name)) in x_cols.iter_mut().zip(x_idx.iter().zip(&schema.x)) {
            col.push(parse_cell(cell(j), row, name)?);
        }
        if let (Some(j), Some(name)) = (y_idx, schema.y.as_deref()) {
            y.push(parse_cell(cell(j), row, name)?);
        }
        if let (Some(j), Some(name)) = (z_idx, schema.z.as_deref()) {
            let raw = cell(j);
            let (value, present) = if raw.is_empty() {
                (f64::NAN, false)
            } else {
                (parse_cell(raw, row, name)?, true)
            };
            let flagged = match mask_idx {
                Some(m) => parse_flag(cell(m), row)?,
                None => true,
            };
            z.push(value);
            z_mask.push(present && flagged);
        }
    }
    if x_cols[0].is_empty() {
        return Err(Error::Data(format!("{} has no data rows", path.display())));
    }
    let dataset = Dataset {
        feature_names: schema.x.clone(),
        x: FeatureMatrix::from_columns(x_cols)?,
        y: y_idx.map(|_| y),
        z: z_idx.map(|_| z),
        z_mask,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Writes `x` columns, then `y`, `z` and `z_mask` when present.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    dataset.validate()?;
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header: Vec<String> = dataset.feature_names.clone();
    if dataset.y.is_some() {
        header.push("y".into());
    }
    if dataset.z.is_some() {
        header.push("z".into());
        header.push(Z_MASK_COLUMN.into());
    }
    writer.write_record(&header).map_err(|e| csv_error(path, e))?;
    let fmt = |v: f64| if v.is_finite() { v.to_string() } else { String::new() };
    for r in 0..dataset.n_rows() {
        let mut record: Vec<String> = (0..dataset.x.n_features())
            .map(|j| fmt(dataset.x.get(r, j)))
            .collect();
        if let Some(y) = &dataset.y {
            record.push(fmt(y[r]));
        }
        if let Some(z) = &dataset.z {
            record.push(fmt(z[r]));
            record.push(if dataset.z_mask[r] { "1" } else { "0" }.into());
        }
        writer.write_record(&record).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    fn std(v: &[f64]) -> f64 {
        let m = mean(v);
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    }

    #[test]
    fn white_noise_has_hundred_rows_and_centred_mean() {
        let d = generate(&GeneratorConfig::white_noise(100, 1.0, 3)).unwrap();
        assert_eq!(d.n_rows(), 100);
        assert!(d.z.is_none());
        assert!(mean(d.y.as_ref().unwrap()).abs() < 3.0 / 10.0);
    }

    #[test]
    fn cos2_mediated_values_at_period_edge() {
        let d = generate(&GeneratorConfig::periodic(TargetKind::Cos2Mediated, 1.0, 500, 0)).unwrap();
        assert_eq!(d.x.get(0, 0), -1.0);
        assert_eq!(d.y.as_ref().unwrap()[0], 1.0);
        assert_eq!(d.z.as_ref().unwrap()[0], 1.0);
        assert!(d.z_mask[0]);
        let last = d.n_rows() - 1;
        assert_eq!(d.x.get(last, 0), 0.5);
        assert!(!d.z_mask[last]);
    }

    #[test]
    fn sigma_encoded_draw_vanishes_where_z_is_zero() {
        let d = generate(&GeneratorConfig::periodic(TargetKind::Cos2SigmaEncoded, 1.0, 500, 9))
            .unwrap();
        let r = d.x.column(0).iter().position(|&x| x == -0.5).unwrap();
        assert_eq!(d.z.as_ref().unwrap()[r], 0.0);
        assert_eq!(d.y.as_ref().unwrap()[r], 0.0);
    }

    #[test]
    fn combined_with_zero_b_reproduces_z() {
        let d = generate(&GeneratorConfig::periodic(TargetKind::Cos2Combined, 2.0, 100, 1)).unwrap();
        assert_eq!(d.y, d.z);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = GeneratorConfig::periodic(TargetKind::Cos2Combined, 1.0, 200, 5).with_b(0.4);
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = GeneratorConfig { seed: 6, ..cfg };
        assert_ne!(generate(&cfg).unwrap().y, generate(&other).unwrap().y);
    }

    #[test]
    fn sigma_encoded_spread_tracks_z_at_extrema() {
        // Z is ~1 near the integers; collect many draws there.
        let cfg = GeneratorConfig::periodic(TargetKind::Cos2SigmaEncoded, 40.0, 8_000, 11);
        let d = generate(&cfg).unwrap();
        let (x, y, z) = (d.x.column(0), d.y.as_ref().unwrap(), d.z.as_ref().unwrap());
        let near: Vec<f64> = (0..d.n_rows())
            .filter(|&r| (x[r] - x[r].round()).abs() < 0.02)
            .map(|r| y[r])
            .collect();
        assert!(near.len() >= 10_000, "only {} samples", near.len());
        let expected = mean(
            &(0..d.n_rows())
                .filter(|&r| (x[r] - x[r].round()).abs() < 0.02)
                .map(|r| z[r] * z[r])
                .collect::<Vec<_>>(),
        )
        .sqrt();
        assert!((std(&near) - expected).abs() < 0.02, "{} vs {expected}", std(&near));
    }

    #[test]
    fn invalid_generator_configs_are_rejected() {
        let mut cfg = GeneratorConfig::white_noise(1, 1.0, 0);
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
        cfg.n_points = 10;
        cfg.x_max = cfg.x_min;
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn zero_scale_noise_is_location() {
        let spec = NoiseSpec::new(NoiseDistribution::Gaussian, 0.0, 0.0);
        assert_eq!(sample_noise(&spec, 5, 1).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn negative_scale_is_config_error() {
        let spec = NoiseSpec::new(NoiseDistribution::Uniform, 0.0, -1.0);
        assert!(matches!(sample_noise(&spec, 5, 1), Err(Error::Config(_))));
    }

    #[test]
    fn uniform_moments_match_scale() {
        let spec = NoiseSpec::new(NoiseDistribution::Uniform, 0.0, 1.0);
        let v = sample_noise(&spec, 100_000, 2).unwrap();
        // Width sqrt(12) gives unit standard deviation.
        assert!((std(&v) - 1.0).abs() < 0.02);
        let half = 3f64.sqrt();
        assert!(v.iter().all(|x| x.abs() <= half));
    }

    #[test]
    fn exponential_mean_and_std_match() {
        let spec = NoiseSpec::new(NoiseDistribution::Exponential, 1.0, 1.0);
        let v = sample_noise(&spec, 100_000, 4).unwrap();
        assert!((mean(&v) - 1.0).abs() < 0.02);
        assert!((std(&v) - 1.0).abs() < 0.02);
        assert!(v.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn cauchy_median_is_location() {
        let spec = NoiseSpec::new(NoiseDistribution::Cauchy, 2.0, 0.5);
        let mut v = sample_noise(&spec, 20_001, 8).unwrap();
        v.sort_by(f64::total_cmp);
        assert!((v[10_000] - 2.0).abs() < 0.03);
    }

    #[test]
    fn cos2_zeros_are_exact() {
        assert_eq!(cos2(-0.5), 0.0);
        assert_eq!(cos2(0.5), 0.0);
        assert_eq!(cos2(-1.0), 1.0);
        assert_eq!(cos2(0.0), 1.0);
    }
}
