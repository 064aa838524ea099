//! Command-line front end: data generation, fit/predict/tune on CSV files,
//! and the scripted experiments.
//!
//! Exit status: 0 on success, 2 for configuration errors, 3 for data, fit
//! and I/O errors, 4 when external measured data is missing.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dataset::{generate, read_csv, write_csv, CsvSchema, Dataset, GeneratorConfig, NoiseDistribution, TargetKind};
use crate::error::{Error, Result};
use crate::experiments::{self, ExperimentSettings, DEFAULT_POINTS_PER_PERIOD, DEFAULT_SEED_COUNT};
use crate::forest::{fit_forest, ForestHyperparams, DEFAULT_N_TREES};
use crate::multilayer::{fit_multilayer, tune_multilayer_leaf, tune_theta_scored, FeatureFlags, MultilayerConfig, RotationAngle};
use crate::persist::{self, NamedForest, SavedModel};
use crate::realdata::{self, DataSource, RealExperiment};
use crate::report::{ExperimentReport, Table};
use crate::theory::LengthscaleConfig;
use crate::validation::{default_candidates, tune_min_samples_leaf, CvScheme, MetricKind, TuningResult};

/// Like `println!`, but a closed stdout (for example `| head`) is not fatal.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SIGMAFOREST_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "sigmaforest", version, about = "Random forests that feed their own uncertainty forward")]
pub struct Cli {
    /// Directory for outputs that are not given an explicit path.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = "sigmaforest-out")]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset as CSV.
    Generate(GenerateArgs),
    /// Fit a forest or a two-layer model and save it.
    Fit(FitArgs),
    /// Predict with a saved model.
    Predict(PredictArgs),
    /// Cross-validate leaf sizes and write the score table.
    Tune(TuneArgs),
    /// Run a scripted experiment and write its report and plot data.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// white-noise, linear, cos2-mediated, cos2-sigma or cos2-combined.
    #[arg(long)]
    pub kind: TargetKind,
    /// Number of rows. Defaults to 100 for white noise, 1000 for the line,
    /// and periods x points-per-period otherwise.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Training periods at x <= 0 for the periodic kinds.
    #[arg(long, default_value_t = 1.0)]
    pub periods: f64,
    #[arg(long, default_value_t = DEFAULT_POINTS_PER_PERIOD)]
    pub points_per_period: usize,
    /// Relative noise amplitude for cos2-combined.
    #[arg(long, default_value_t = 0.0)]
    pub b: f64,
    #[arg(long, default_value = "gaussian")]
    pub noise: NoiseDistribution,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    /// Plain forest from the feature columns to `y`.
    Y,
    /// Two-layer model for `z`.
    Z,
}

#[derive(Debug, Args)]
pub struct SchemaArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Feature column; repeat for several.
    #[arg(long = "x-col", default_value = "x")]
    pub x_col: Vec<String>,
    #[arg(long = "y-col", default_value = "y")]
    pub y_col: String,
    #[arg(long = "z-col", default_value = "z")]
    pub z_col: String,
    #[arg(long, value_enum, default_value = "z")]
    pub target: Target,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Drop the raw features from the second layer.
    #[arg(long)]
    pub no_x: bool,
    #[arg(long)]
    pub use_y: bool,
    #[arg(long)]
    pub use_sigma: bool,
    /// Train the second layer on out-of-bag first-layer outputs.
    #[arg(long)]
    pub oob: bool,
    #[arg(long)]
    pub standardize: bool,
    /// Rotation of the standardised (y, sigma_y) plane in degrees.
    #[arg(long, conflicts_with = "tune_theta")]
    pub theta: Option<f64>,
    /// Pick the rotation by blocking cross-validation over 0..=90 step 5.
    #[arg(long)]
    pub tune_theta: bool,
}

impl PipelineArgs {
    fn flags(&self) -> FeatureFlags {
        FeatureFlags::new(!self.no_x, self.use_y, self.use_sigma)
    }

    fn config(&self) -> Result<MultilayerConfig> {
        let mut c = MultilayerConfig::new(self.flags()).with_oob(self.oob);
        if self.standardize {
            c = c.standardized();
        }
        if let Some(t) = self.theta {
            c = c.with_theta(RotationAngle::new(t)?);
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct ForestArgs {
    #[arg(long, default_value_t = DEFAULT_N_TREES)]
    pub n_trees: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CvKind {
    Kfold,
    Blocking,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long, value_enum, default_value = "kfold")]
    pub cv: CvKind,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value = "r2")]
    pub metric: MetricKind,
    /// Comma-separated leaf sizes; defaults to a grid sized to the data.
    #[arg(long, value_delimiter = ',')]
    pub candidates: Option<Vec<usize>>,
}

impl CvArgs {
    fn scheme(&self) -> CvScheme {
        match self.cv {
            CvKind::Kfold => CvScheme::Kfold { k: self.folds },
            CvKind::Blocking => CvScheme::Blocking,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub schema: SchemaArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    /// Leaf size; ignored with --tune.
    #[arg(long, default_value_t = 1)]
    pub min_samples_leaf: usize,
    /// Choose the leaf size by cross-validation first.
    #[arg(long)]
    pub tune: bool,
    #[command(flatten)]
    pub cv: CvArgs,
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV holding the model's feature columns.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub schema: SchemaArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[command(flatten)]
    pub cv: CvArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentName {
    Fig4,
    Fig5,
    Fig7,
    Fig8,
    Fig9,
    Fig10,
    Dielectric,
    Diffraction,
}

impl ExperimentName {
    fn id(self) -> &'static str {
        match self {
            ExperimentName::Fig4 => "fig4",
            ExperimentName::Fig5 => "fig5",
            ExperimentName::Fig7 => "fig7",
            ExperimentName::Fig8 => "fig8",
            ExperimentName::Fig9 => "fig9",
            ExperimentName::Fig10 => "fig10",
            ExperimentName::Dielectric => "dielectric",
            ExperimentName::Diffraction => "diffraction",
        }
    }
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    pub name: ExperimentName,
    /// Number of master seeds, counting up from --first-seed.
    #[arg(long, default_value_t = DEFAULT_SEED_COUNT)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub first_seed: u64,
    #[arg(long, default_value_t = DEFAULT_POINTS_PER_PERIOD)]
    pub points_per_period: usize,
    #[arg(long, default_value_t = DEFAULT_N_TREES)]
    pub n_trees: usize,
    #[arg(long)]
    pub oob: bool,
    /// Noise law for fig8.
    #[arg(long, default_value = "gaussian")]
    pub noise: NoiseDistribution,
    /// Comma-separated noise amplitudes for fig10.
    #[arg(long, value_delimiter = ',')]
    pub b: Option<Vec<f64>>,
    /// Comma-separated training periods for fig9.
    #[arg(long, value_delimiter = ',')]
    pub periods: Option<Vec<f64>>,
    /// Comma-separated noise levels for fig5.
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,
    /// Measured data for dielectric or diffraction.
    #[arg(long, conflicts_with = "standin")]
    pub data: Option<PathBuf>,
    /// Use the bundled synthetic stand-in instead of measured data.
    #[arg(long)]
    pub standin: bool,
    /// Override the training cutoff in x for the measured-data protocols.
    #[arg(long)]
    pub cutoff: Option<f64>,
}

fn schema_for(args: &SchemaArgs, flags: FeatureFlags) -> CsvSchema {
    match args.target {
        Target::Y => CsvSchema {
            x: args.x_col.clone(),
            y: Some(args.y_col.clone()),
            z: None,
        },
        Target::Z => CsvSchema {
            x: args.x_col.clone(),
            y: flags.needs_first_layer().then(|| args.y_col.clone()),
            z: Some(args.z_col.clone()),
        },
    }
}

fn out_path(explicit: &Option<PathBuf>, out_dir: &Path, default_name: &str) -> Result<PathBuf> {
    let path = match explicit {
        Some(p) => p.clone(),
        None => out_dir.join(default_name),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(path)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a, &cli.out_dir),
        Command::Fit(a) => cmd_fit(&a, &cli.out_dir),
        Command::Predict(a) => cmd_predict(&a, &cli.out_dir),
        Command::Tune(a) => cmd_tune(&a, &cli.out_dir),
        Command::Experiment(a) => cmd_experiment(&a, &cli.out_dir),
    }
}

/// Parses `args` and runs; returns the process exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn cmd_generate(a: &GenerateArgs, out_dir: &Path) -> Result<()> {
    let mut config = match a.kind {
        TargetKind::WhiteNoise => GeneratorConfig::white_noise(a.n.unwrap_or(100), a.sigma, a.seed),
        TargetKind::LinearPlusNoise => GeneratorConfig::linear(a.n.unwrap_or(1000), a.sigma, a.seed),
        kind => {
            let mut c = GeneratorConfig::periodic(kind, a.periods, a.points_per_period, a.seed).with_b(a.b);
            if let Some(n) = a.n {
                c.n_points = n;
            }
            c
        }
    }
    .with_noise(a.noise);
    config.seed = a.seed;
    let data = generate(&config)?;
    let path = out_path(&a.out, out_dir, &format!("{}.csv", kind_file_name(a.kind)))?;
    write_csv(&data, &path)?;
    say!("wrote {} rows to {}", data.n_rows(), path.display());
    Ok(())
}

fn kind_file_name(kind: TargetKind) -> &'static str {
    match kind {
        TargetKind::WhiteNoise => "white-noise",
        TargetKind::LinearPlusNoise => "linear",
        TargetKind::Cos2Mediated => "cos2-mediated",
        TargetKind::Cos2SigmaEncoded => "cos2-sigma",
        TargetKind::Cos2Combined => "cos2-combined",
    }
}

fn tune_leaf(
    data: &Dataset,
    target: Target,
    config: &MultilayerConfig,
    cv: &CvArgs,
    base: &ForestHyperparams,
) -> Result<TuningResult> {
    match target {
        Target::Y => {
            let candidates = cv.candidates.clone().unwrap_or_else(|| default_candidates(data.n_rows()));
            tune_min_samples_leaf(&data.x, data.y()?, cv.scheme(), &candidates, cv.metric, base, base.seed)
        }
        Target::Z => {
            let n = data.observed_z_rows().len();
            let candidates = cv.candidates.clone().unwrap_or_else(|| default_candidates(n));
            tune_multilayer_leaf(data, config, cv.scheme(), &candidates, cv.metric, base, base.seed)
        }
    }
}

pub fn cmd_fit(a: &FitArgs, out_dir: &Path) -> Result<()> {
    let mut config = a.pipeline.config()?;
    let data = read_csv(&a.schema.data, &schema_for(&a.schema, config.flags))?;
    let mut hp = ForestHyperparams::new(a.forest.n_trees, a.min_samples_leaf, a.forest.seed);
    hp.validate()?;
    if a.tune {
        let t = tune_leaf(&data, a.schema.target, &config, &a.cv, &hp)?;
        say!("tuned min_samples_leaf = {} ({} {})", t.best_min_samples_leaf, t.objective.name(), t.cv_score);
        hp = hp.with_min_samples_leaf(t.best_min_samples_leaf);
    }
    let saved = match a.schema.target {
        Target::Y => SavedModel::Forest(NamedForest {
            feature_names: data.feature_names.clone(),
            forest: fit_forest(&data.x, data.y()?, &hp)?,
        }),
        Target::Z => {
            if a.pipeline.tune_theta {
                let (theta, _) = tune_theta_scored(&data, config.flags, &hp, &RotationAngle::default_grid(), config.oob)?;
                say!("tuned theta = {}", theta.degrees());
                config = config.with_theta(theta);
            }
            SavedModel::Multilayer(fit_multilayer(&data, &config, &hp)?)
        }
    };
    let path = out_path(&a.model, out_dir, "model.json")?;
    persist::save(&saved, &path)?;
    say!("saved model to {}", path.display());
    Ok(())
}

pub fn cmd_predict(a: &PredictArgs, out_dir: &Path) -> Result<()> {
    let model = persist::load(&a.model)?;
    let schema = CsvSchema {
        x: model.feature_names().to_vec(),
        y: None,
        z: None,
    };
    let data = read_csv(&a.data, &schema)?;
    let preds = match &model {
        SavedModel::Forest(f) => f.forest.predict_matrix(&data.x)?,
        SavedModel::Multilayer(m) => m.predict_matrix(&data.x)?,
    };
    let mut columns: Vec<String> = model.feature_names().to_vec();
    columns.extend(["z_pred".to_string(), "z_std".to_string()]);
    let mut table = Table::new(columns);
    for (r, p) in preds.iter().enumerate() {
        let mut row = data.x.row(r);
        row.extend([p.mean, p.std]);
        table.push(row);
    }
    let path = out_path(&a.out, out_dir, "predictions.csv")?;
    table.write_csv(&path)?;
    say!("wrote {} predictions to {}", preds.len(), path.display());
    Ok(())
}

pub fn cmd_tune(a: &TuneArgs, out_dir: &Path) -> Result<()> {
    let config = a.pipeline.config()?;
    let data = read_csv(&a.schema.data, &schema_for(&a.schema, config.flags))?;
    let base = ForestHyperparams::new(a.forest.n_trees, 1, a.forest.seed);
    base.validate()?;
    let t = tune_leaf(&data, a.schema.target, &config, &a.cv, &base)?;
    let path = out_path(&a.out, out_dir, "tuning.csv")?;
    t.write_csv(&path)?;
    say!(
        "best min_samples_leaf = {} ({} {})",
        t.best_min_samples_leaf,
        t.objective.name(),
        t.cv_score
    );
    say!("wrote score table to {}", path.display());
    Ok(())
}

pub fn cmd_experiment(a: &ExperimentArgs, out_dir: &Path) -> Result<()> {
    if a.seeds == 0 {
        return Err(Error::Config("need at least one seed".into()));
    }
    let settings = ExperimentSettings {
        seeds: (a.first_seed..a.first_seed + a.seeds).collect(),
        points_per_period: a.points_per_period,
        n_trees: a.n_trees,
        candidates: None,
        oob: a.oob,
    };
    let out = out_dir.join(a.name.id());
    let report = run_experiment(a, &settings, &out)?;
    let path = out.join("report.json");
    report.write_json(&path)?;
    print_report(&report);
    say!("wrote {}", path.display());
    Ok(())
}

fn run_experiment(a: &ExperimentArgs, settings: &ExperimentSettings, out: &Path) -> Result<ExperimentReport> {
    let out = Some(out);
    match a.name {
        ExperimentName::Fig4 => experiments::fig4(settings, out),
        ExperimentName::Fig5 => {
            let mut config = LengthscaleConfig {
                seed: a.first_seed,
                n_trees: a.n_trees,
                ..LengthscaleConfig::default()
            };
            if let Some(s) = &a.sigmas {
                config.sigmas = s.clone();
            }
            experiments::fig5(&config, out)
        }
        ExperimentName::Fig7 => experiments::fig7(settings, out),
        ExperimentName::Fig8 => experiments::fig8(settings, a.noise, out),
        ExperimentName::Fig9 => {
            let periods = a.periods.clone().unwrap_or_else(|| experiments::FIG9_PERIODS.to_vec());
            experiments::fig9(settings, &periods, out)
        }
        ExperimentName::Fig10 => {
            let bs = a.b.clone().unwrap_or_else(|| experiments::FIG10_B.to_vec());
            experiments::fig10(settings, &bs, out)
        }
        ExperimentName::Dielectric | ExperimentName::Diffraction => {
            let kind: RealExperiment = a.name.id().parse()?;
            let source = match (&a.data, a.standin) {
                (Some(p), _) => DataSource::File(p),
                (None, true) => DataSource::Standin,
                (None, false) => {
                    return Err(Error::MissingData {
                        path: PathBuf::from("<none given>"),
                        hint: format!("pass --data FILE or --standin; {}", kind.data_hint()),
                    })
                }
            };
            realdata::run(kind, &source, a.cutoff, settings, out)
        }
    }
}

fn print_report(report: &ExperimentReport) {
    say!("experiment {} ({} seeds, {:.1} s)", report.experiment, report.seeds.len(), report.runtime_seconds);
    for (k, v) in &report.metrics {
        say!("  {k} = {v}");
    }
    for c in &report.checks {
        say!("  {c}");
    }
}
