//! Measured-data protocols and their bundled synthetic stand-ins.
//!
//! Input files have a header with `x`, `y` and `z`. Every row needs `x` and
//! `y`; `z` may be left empty. The protocol itself decides which `z` values
//! are visible for training (one side of a cutoff in `x`) and scores on the
//! rows beyond the cutoff that carry a `z` value.
//!
//! | protocol    | x           | y                  | z                     | trains on  |
//! |-------------|-------------|--------------------|-----------------------|------------|
//! | dielectric  | temperature | dielectric const.  | excess heat capacity  | x >= 455   |
//! | diffraction | angle (deg) | particle count     | ground-truth amplitude| x <= 15    |

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::dataset::{read_csv, read_csv_from, CsvSchema, Dataset, FeatureMatrix};
use crate::error::{Error, Result};
use crate::experiments::{run_variant, ExperimentSettings, Variant, VariantOutcome};
use crate::multilayer::FeatureFlags;
use crate::report::{median, svg_line_plot, write_svg, Comparison, ExperimentReport, Series, Table};

pub const DIELECTRIC_STANDIN: &str = include_str!("../fixtures/dielectric_standin.csv");
pub const DIFFRACTION_STANDIN: &str = include_str!("../fixtures/diffraction_standin.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RealExperiment {
    Dielectric,
    Diffraction,
}

impl RealExperiment {
    pub fn name(self) -> &'static str {
        match self {
            RealExperiment::Dielectric => "dielectric",
            RealExperiment::Diffraction => "diffraction",
        }
    }

    pub fn default_cutoff(self) -> f64 {
        match self {
            RealExperiment::Dielectric => 455.0,
            RealExperiment::Diffraction => 15.0,
        }
    }

    /// Whether `z` is visible above the cutoff (otherwise below or at it).
    pub fn trains_above(self) -> bool {
        matches!(self, RealExperiment::Dielectric)
    }

    pub fn in_training_region(self, x: f64, cutoff: f64) -> bool {
        if self.trains_above() {
            x >= cutoff
        } else {
            x <= cutoff
        }
    }

    /// Pipeline that exploits the spread of `y`.
    pub fn with_uncertainty(self) -> Variant {
        match self {
            RealExperiment::Dielectric => Variant::plain(FeatureFlags::X_SIGMA),
            RealExperiment::Diffraction => Variant::rotated(),
        }
    }

    pub fn without_uncertainty(self) -> Variant {
        Variant::plain(FeatureFlags::X_Y)
    }

    pub fn bundled_standin(self) -> &'static str {
        match self {
            RealExperiment::Dielectric => DIELECTRIC_STANDIN,
            RealExperiment::Diffraction => DIFFRACTION_STANDIN,
        }
    }

    /// Explanation shown when the measured data file is missing.
    pub fn data_hint(self) -> String {
        format!(
            "supply a CSV with header `x,y,z` ({}); leave `z` empty where it was not measured, \
             or run with the bundled synthetic stand-in instead",
            match self {
                RealExperiment::Dielectric =>
                    "x = temperature in K, y = dielectric constant, z = excess heat capacity",
                RealExperiment::Diffraction =>
                    "x = diffraction angle in degrees, y = particle count, z = ground-truth amplitude",
            }
        )
    }
}

impl FromStr for RealExperiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dielectric" => Ok(RealExperiment::Dielectric),
            "diffraction" => Ok(RealExperiment::Diffraction),
            other => Err(Error::Config(format!("unknown measured-data experiment `{other}`"))),
        }
    }
}

/// Where the data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource<'a> {
    File(&'a Path),
    Standin,
}

pub fn load(kind: RealExperiment, source: &DataSource<'_>) -> Result<Dataset> {
    let schema = CsvSchema::default();
    match source {
        DataSource::File(path) => {
            if !path.exists() {
                return Err(Error::MissingData {
                    path: path.to_path_buf(),
                    hint: kind.data_hint(),
                });
            }
            read_csv(path, &schema)
        }
        DataSource::Standin => read_csv_from(
            kind.bundled_standin().as_bytes(),
            Path::new(&format!("<bundled {} stand-in>", kind.name())),
            &schema,
        ),
    }
}

/// Shows `z` only inside the training region; the file's own mask is
/// replaced. Rows outside it keep their truth for scoring.
pub fn apply_protocol(mut data: Dataset, kind: RealExperiment, cutoff: f64) -> Result<Dataset> {
    let z = data.z()?.to_vec();
    data.y()?;
    for r in 0..data.n_rows() {
        data.z_mask[r] = z[r].is_finite() && kind.in_training_region(data.x.get(r, 0), cutoff);
    }
    let scored = (0..data.n_rows()).filter(|&r| !data.z_mask[r] && z[r].is_finite()).count();
    if data.observed_z_rows().is_empty() {
        return Err(Error::Data(format!("no `z` values inside the training region (cutoff {cutoff})")));
    }
    if scored == 0 {
        return Err(Error::Data(format!("no `z` values beyond the cutoff {cutoff} to validate on")));
    }
    Ok(data)
}

fn plot(out: &Path, kind: RealExperiment, data: &Dataset, with: &VariantOutcome, without: &VariantOutcome) -> Result<()> {
    let mut t = Table::new(["x", "y", "z_true", "z_observed", "z_with", "z_with_std", "z_without", "z_without_std"]);
    let (y, z) = (data.y()?, data.z()?);
    for r in 0..data.n_rows() {
        t.push(vec![
            data.x.get(r, 0),
            y[r],
            z[r],
            if data.z_mask[r] { 1.0 } else { 0.0 },
            with.z_pred[r],
            with.z_std[r],
            without.z_pred[r],
            without.z_std[r],
        ]);
    }
    let name = kind.name();
    t.write_csv(&out.join(format!("{name}_predictions.csv")))?;
    let x = t.column("x").unwrap();
    let (zt, zw, zo) = (t.column("z_true").unwrap(), t.column("z_with").unwrap(), t.column("z_without").unwrap());
    write_svg(
        &out.join(format!("{name}_predictions.svg")),
        &svg_line_plot(
            name,
            "x",
            "z",
            &[
                Series { label: "with uncertainty", x: &x, y: &zw },
                Series { label: "without", x: &x, y: &zo },
                Series { label: "truth", x: &x, y: &zt },
            ],
        ),
    )
}

/// Runs both pipelines for every forest seed and compares medians.
pub fn run(
    kind: RealExperiment,
    source: &DataSource<'_>,
    cutoff: Option<f64>,
    settings: &ExperimentSettings,
    out: Option<&Path>,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    if let Some(d) = out {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let cutoff = cutoff.unwrap_or(kind.default_cutoff());
    let scored = apply_protocol(load(kind, source)?, kind, cutoff)?;
    let runs: Vec<(VariantOutcome, VariantOutcome)> = settings
        .seeds
        .iter()
        .map(|&seed| {
            Ok((
                run_variant(&scored, kind.with_uncertainty(), settings, seed, None)?,
                run_variant(&scored, kind.without_uncertainty(), settings, seed, None)?,
            ))
        })
        .collect::<Result<_>>()?;
    let mut report = ExperimentReport::new(kind.name(), settings.seeds.clone());
    report
        .setting(
            "data",
            match source {
                DataSource::File(p) => p.display().to_string(),
                DataSource::Standin => "bundled synthetic stand-in".to_string(),
            },
        )
        .setting("cutoff", cutoff)
        .setting("trains_on", if kind.trains_above() { "x >= cutoff" } else { "x <= cutoff" })
        .setting("n_trees", settings.n_trees);
    let med = |f: &dyn Fn(&(VariantOutcome, VariantOutcome)) -> f64| median(&runs.iter().map(f).collect::<Vec<_>>());
    let (r2_with, r2_without) = (med(&|r| r.0.r2), med(&|r| r.1.r2));
    report
        .metric("r2_with", r2_with)
        .metric("r2_without", r2_without)
        .metric("r2_gain", r2_with - r2_without)
        .metric("mse_ratio", med(&|r| r.1.mse / r.0.mse))
        .metric("min_samples_leaf_with", med(&|r| r.0.min_samples_leaf as f64))
        .metric("min_samples_leaf_without", med(&|r| r.1.min_samples_leaf as f64));
    if let Some(v) = runs.first().and_then(|r| r.0.importance_of_sigma()) {
        report.metric("importance_sigma", if runs.len() == 1 { v } else { med(&|r| r.0.importance_of_sigma().unwrap()) });
    }
    if kind.with_uncertainty().tune_theta {
        report.metric("theta_opt", med(&|r| r.0.theta.unwrap_or(0.0)));
    }
    report.check("r2_gain", Comparison::Above, 0.0);
    if let (Some(dir), Some((w, wo))) = (out, runs.first()) {
        plot(dir, kind, &scored, w, wo)?;
    }
    report.runtime_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

fn gaussian(x: f64, centre: f64, width: f64) -> f64 {
    (-(x - centre).powi(2) / (2.0 * width * width)).exp()
}

/// Keeps the bundled text short.
fn round(v: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (v * f).round() / f
}

/// Two heat-capacity peaks at 440 K and 471 K; the dielectric constant
/// rises linearly and fluctuates in proportion to the heat capacity.
pub fn dielectric_standin(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t: Vec<f64> = (0..=400).map(|i| 400.0 + 0.25 * f64::from(i)).collect();
    let z: Vec<f64> = t
        .iter()
        .map(|&x| round(3.0 * gaussian(x, 440.0, 3.0) + 4.0 * gaussian(x, 471.0, 3.0), 9))
        .collect();
    let y: Vec<f64> = t
        .iter()
        .zip(&z)
        .map(|(&x, &c)| {
            let e: f64 = StandardNormal.sample(&mut rng);
            round(2000.0 + 5.0 * (x - 400.0) + 150.0 * c * e, 6)
        })
        .collect();
    standin(t, y, z)
}

/// Double-slit amplitude with peaks at -30, 0 and 30 degrees; the count is
/// Poisson with mean proportional to the amplitude.
pub fn diffraction_standin(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..=900).map(|i| round(-45.0 + 0.1 * f64::from(i), 1)).collect();
    let z: Vec<f64> = a
        .iter()
        .map(|&x| round((std::f64::consts::PI * x / 30.0).cos().powi(2) * gaussian(x, 0.0, 35.0), 9))
        .collect();
    let y: Vec<f64> = z
        .iter()
        .map(|&m| {
            let lambda = 40.0 * m;
            if lambda > 0.0 {
                Poisson::new(lambda).expect("positive rate").sample(&mut rng)
            } else {
                0.0
            }
        })
        .collect();
    standin(a, y, z)
}

fn standin(x: Vec<f64>, y: Vec<f64>, z: Vec<f64>) -> Dataset {
    let n = x.len();
    Dataset {
        feature_names: vec!["x".into()],
        x: FeatureMatrix::single(x),
        y: Some(y),
        z: Some(z),
        z_mask: vec![true; n],
    }
}

/// `x,y,z` text of a stand-in, as bundled.
pub fn standin_csv(data: &Dataset) -> String {
    let mut s = String::from("x,y,z\n");
    let (y, z) = (data.y.as_deref().unwrap(), data.z.as_deref().unwrap());
    for r in 0..data.n_rows() {
        let _ = writeln!(s, "{},{},{}", data.x.get(r, 0), y[r], z[r]);
    }
    s
}

pub const STANDIN_SEED: u64 = 7;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_fixtures_match_generators() {
        assert_eq!(standin_csv(&dielectric_standin(STANDIN_SEED)), DIELECTRIC_STANDIN);
        assert_eq!(standin_csv(&diffraction_standin(STANDIN_SEED)), DIFFRACTION_STANDIN);
    }

    #[test]
    fn protocol_masks_by_cutoff() {
        let d = load(RealExperiment::Dielectric, &DataSource::Standin).unwrap();
        let d = apply_protocol(d, RealExperiment::Dielectric, 455.0).unwrap();
        for r in 0..d.n_rows() {
            assert_eq!(d.z_mask[r], d.x.get(r, 0) >= 455.0);
        }
        let e = load(RealExperiment::Diffraction, &DataSource::Standin).unwrap();
        let e = apply_protocol(e, RealExperiment::Diffraction, 15.0).unwrap();
        assert!(e.observed_z_rows().iter().all(|&r| e.x.get(r, 0) <= 15.0));
    }

    #[test]
    fn missing_file_is_missing_data() {
        let err = load(RealExperiment::Diffraction, &DataSource::File(Path::new("/nonexistent/d.csv"))).unwrap_err();
        assert!(matches!(err, Error::MissingData { .. }));
    }

    #[test]
    fn cutoff_beyond_data_is_rejected() {
        let d = load(RealExperiment::Dielectric, &DataSource::Standin).unwrap();
        assert!(apply_protocol(d.clone(), RealExperiment::Dielectric, 1000.0).is_err());
        assert!(apply_protocol(d, RealExperiment::Dielectric, 0.0).is_err());
    }
}
