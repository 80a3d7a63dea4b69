//! Batch front end for the subsidence-claim pipeline.
//!
//! Subcommands wire the library modules into a file-based workflow:
//! `indices` standardizes gridded climate series into yearly extreme drought
//! indices, `build-panel` joins insurer and soil files into the canonical
//! town-year panel, `synth` generates a panel with known ground truth,
//! `fit`/`predict` train and apply a single model, `cv` runs leave-future-out
//! cross-validation over a model list, `map` flattens predictions to one
//! value per town, and `report` renders a cross-validation summary table.
//!
//! Every command writes a `manifest.json` provenance sidecar (inputs by
//! content hash, resolved parameters, seed) into its output directory.
//! Data outputs are byte-identical across reruns with the same inputs and
//! seed; floats are emitted with nine significant digits.
//!
//! Exit codes: 0 on success, 1 on runtime failure (a one-line JSON object
//! with `category` and `message` fields goes to stderr), 2 on usage errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use argile_core::climate::io::{read_climate_csv, write_extremes_csv};
use argile_core::climate::{compute_cell_extremes, ClimateError, ExtremeYearIndex};
use argile_core::cost::{
    fit_frequency, fit_severity, read_predictions, write_predictions, CostError, FrequencyModel,
    ModelSpec, PredictionRow, PredictionSet,
};
use argile_core::forest::{ForestError, ForestOptions};
use argile_core::glm::serialize::{glm_from_text, glm_to_text, model_kind};
use argile_core::glm::{
    fit_glm, total_cost_design, FamilyKind, FamilyRequest, FitOptions, GlmError, COVARIATES,
};
use argile_core::manifest::{ManifestError, RunManifest};
use argile_core::numfmt::sig9;
use argile_core::panel::io::{
    read_cat_history_csv, read_claims_csv, read_clay_csv, read_exposure_csv, read_geometry_csv,
    read_panel_csv, write_panel_csv,
};
use argile_core::panel::{aggregate_clay, aggregate_indices, build_panel, PanelError};
use argile_core::synthetic::{
    generate_panel, read_config_toml, write_synthetic_dir, GeneratorConfig, SyntheticError,
};
use argile_core::validation::{
    read_cv_json, temporal_folds, write_cv_csv, write_cv_json, CvReport, ReportOptions,
    ValidationError,
};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Climate(#[from] ClimateError),
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("io on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn category(&self) -> &'static str {
        match self {
            CliError::Climate(_) => "climate",
            CliError::Panel(_) => "panel",
            CliError::Glm(_) => "glm",
            CliError::Forest(_) => "forest",
            CliError::Cost(_) => "cost",
            CliError::Validation(_) => "validation",
            CliError::Synthetic(_) => "synthetic",
            CliError::Manifest(_) => "manifest",
            CliError::Io { .. } => "io",
            CliError::Usage(_) => "usage",
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io { path: path.display().to_string(), source }
}

#[derive(Parser)]
#[command(
    name = "argile",
    version,
    about = "Drought-index construction and subsidence claim frequency/cost modelling",
    long_about = "Pipeline commands for turning gridded climate series and insurer \
                  town-year files into standardized drought indices, fitted claim \
                  frequency/cost models, and cross-validated predictions. Exit codes: \
                  0 success, 1 runtime failure (JSON error on stderr), 2 usage error."
)]
struct Cli {
    /// Worker threads for parallel sections (0 = all available cores).
    /// Results do not depend on this value.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Standardize a gridded climate series into yearly extreme indices.
    Indices(IndicesArgs),
    /// Join exposure, claims, request, geometry, clay and index files into
    /// the canonical town-year panel.
    BuildPanel(BuildPanelArgs),
    /// Fit one model on a panel and serialize it.
    Fit(FitArgs),
    /// Apply a serialized model to a panel.
    Predict(PredictArgs),
    /// Leave-future-out cross-validation over a list of models.
    Cv(CvArgs),
    /// Generate a synthetic panel with a known generating model.
    Synth(SynthArgs),
    /// Flatten a prediction file to one value per town.
    Map(MapArgs),
    /// Render a cross-validation report as a text table.
    Report(ReportArgs),
}

#[derive(Args)]
struct IndicesArgs {
    /// Monthly climate CSV: cell_id,year,month,precipitation,soil_water,soil_temperature.
    #[arg(long)]
    climate: PathBuf,
    /// First year of the standardization reference period.
    #[arg(long, default_value_t = 1961)]
    reference_start: i32,
    /// Last year of the standardization reference period.
    #[arg(long, default_value_t = 2000)]
    reference_end: i32,
    /// Output directory (receives extremes.csv and manifest.json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildPanelArgs {
    /// Exposure CSV: town_id,year,exposure,sums_insured.
    #[arg(long)]
    exposure: PathBuf,
    /// Claims CSV: town_id,year,claims,cost.
    #[arg(long)]
    claims: PathBuf,
    /// Catastrophe-request CSV: town_id,first_request_year.
    #[arg(long)]
    requests: PathBuf,
    /// Town geometry CSV: town_id,cell_id,weight.
    #[arg(long)]
    geometry: PathBuf,
    /// Cell clay CSV: cell_id,clay.
    #[arg(long)]
    clay: PathBuf,
    /// Cell extreme-index CSV (from `indices` or `synth`).
    #[arg(long)]
    extremes: PathBuf,
    /// Output directory (receives panel.csv and manifest.json).
    #[arg(long)]
    out: PathBuf,
}

/// Model families accepted by `fit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CliModel {
    Poisson,
    Binomial,
    Negbin,
    Zip,
    Zinb,
    Forest,
    /// Claim-weighted gamma severity regression (average cost per claim).
    Gamma,
    /// Tweedie total-cost regression.
    Tweedie,
}

impl CliModel {
    fn frequency_spec(self) -> Option<ModelSpec> {
        match self {
            CliModel::Poisson => Some(ModelSpec::Poisson),
            CliModel::Binomial => Some(ModelSpec::Binomial),
            CliModel::Negbin => Some(ModelSpec::NegBin),
            CliModel::Zip => Some(ModelSpec::Zip),
            CliModel::Zinb => Some(ModelSpec::Zinb),
            CliModel::Forest => Some(ModelSpec::Forest),
            CliModel::Gamma | CliModel::Tweedie => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            CliModel::Poisson => "poisson",
            CliModel::Binomial => "binomial",
            CliModel::Negbin => "negbin",
            CliModel::Zip => "zip",
            CliModel::Zinb => "zinb",
            CliModel::Forest => "forest",
            CliModel::Gamma => "gamma",
            CliModel::Tweedie => "tweedie",
        }
    }
}

/// Fit settings shared by `fit` and `cv`; a config file sets the baseline
/// and explicit flags override it.
#[derive(Args)]
struct FitFlags {
    /// TOML config with optional [fit] and [forest] tables; flags override.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Maximum optimizer iterations.
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Tweedie variance-function power (1 < p < 2).
    #[arg(long)]
    tweedie_power: Option<f64>,
    /// Trees in a forest fit.
    #[arg(long)]
    trees: Option<usize>,
    /// Candidate features per node in a forest fit.
    #[arg(long)]
    mtry: Option<usize>,
    /// Minimum rows per leaf in a forest fit.
    #[arg(long)]
    min_leaf: Option<usize>,
    /// Maximum leaves per tree in a forest fit.
    #[arg(long)]
    max_leaves: Option<usize>,
    /// Disable bootstrap resampling in a forest fit.
    #[arg(long)]
    no_bootstrap: bool,
    /// Seed for the forest's tree streams.
    #[arg(long)]
    seed: Option<u64>,
}

/// Optional `[fit]` / `[forest]` tables of the run config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfigFile {
    #[serde(default)]
    fit: FitTable,
    #[serde(default)]
    forest: ForestTable,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitTable {
    max_iterations: Option<usize>,
    tweedie_power: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForestTable {
    trees: Option<usize>,
    mtry: Option<usize>,
    min_leaf: Option<usize>,
    max_leaves: Option<usize>,
    bootstrap: Option<bool>,
    seed: Option<u64>,
}

/// Flags ≻ config file ≻ library defaults.
struct ResolvedOptions {
    fit: FitOptions,
    forest: ForestOptions,
    tweedie_power: f64,
}

impl FitFlags {
    fn resolve(&self) -> Result<ResolvedOptions, CliError> {
        let file: RunConfigFile = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            }
            None => RunConfigFile::default(),
        };
        let mut fit = FitOptions::default();
        let mut forest = ForestOptions::default();
        let mut tweedie_power = 1.5;
        if let Some(v) = file.fit.max_iterations {
            fit.max_iterations = v;
        }
        if let Some(v) = file.fit.tweedie_power {
            tweedie_power = v;
        }
        if let Some(v) = file.forest.trees {
            forest.trees = v;
        }
        if let Some(v) = file.forest.mtry {
            forest.mtry = v;
        }
        if let Some(v) = file.forest.min_leaf {
            forest.min_leaf = v;
        }
        if let Some(v) = file.forest.max_leaves {
            forest.max_leaves = v;
        }
        if let Some(v) = file.forest.bootstrap {
            forest.bootstrap = v;
        }
        if let Some(v) = file.forest.seed {
            forest.seed = v;
        }
        if let Some(v) = self.max_iterations {
            fit.max_iterations = v;
        }
        if let Some(v) = self.tweedie_power {
            tweedie_power = v;
        }
        if let Some(v) = self.trees {
            forest.trees = v;
        }
        if let Some(v) = self.mtry {
            forest.mtry = v;
        }
        if let Some(v) = self.min_leaf {
            forest.min_leaf = v;
        }
        if let Some(v) = self.max_leaves {
            forest.max_leaves = v;
        }
        if self.no_bootstrap {
            forest.bootstrap = false;
        }
        if let Some(v) = self.seed {
            forest.seed = v;
        }
        Ok(ResolvedOptions { fit, forest, tweedie_power })
    }

    fn record(&self, resolved: &ResolvedOptions, manifest: &mut RunManifest) {
        manifest.config_path = self.config.as_ref().map(|p| p.display().to_string());
        manifest.set_parameter("max_iterations", resolved.fit.max_iterations);
        manifest.set_parameter("tweedie_power", resolved.tweedie_power);
        manifest.set_parameter("forest_trees", resolved.forest.trees);
        manifest.set_parameter("forest_mtry", resolved.forest.mtry);
        manifest.set_parameter("forest_min_leaf", resolved.forest.min_leaf);
        manifest.set_parameter("forest_max_leaves", resolved.forest.max_leaves);
        manifest.set_parameter("forest_bootstrap", resolved.forest.bootstrap);
        manifest.seed = Some(resolved.forest.seed);
    }
}

#[derive(Args)]
struct FitArgs {
    /// Panel CSV (from `build-panel` or `synth`).
    #[arg(long)]
    panel: PathBuf,
    /// Model family to fit.
    #[arg(long, value_enum)]
    model: CliModel,
    /// Restrict training to years >= this.
    #[arg(long)]
    train_start: Option<i32>,
    /// Restrict training to years <= this.
    #[arg(long)]
    train_end: Option<i32>,
    #[command(flatten)]
    flags: FitFlags,
    /// Output directory (receives model.txt and manifest.json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Serialized model file (from `fit`).
    #[arg(long)]
    model: PathBuf,
    /// Panel CSV with the rows to score.
    #[arg(long)]
    panel: PathBuf,
    /// Score only this year.
    #[arg(long)]
    year: Option<i32>,
    /// Output directory (receives predictions.csv and manifest.json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CvArgs {
    /// Panel CSV.
    #[arg(long)]
    panel: PathBuf,
    /// Comma-separated model list (poisson,binomial,negbin,zip,zinb,forest).
    #[arg(long, value_delimiter = ',', default_value = "poisson,negbin,zip,zinb")]
    models: Vec<String>,
    /// First held-out test year.
    #[arg(long)]
    first_test_year: i32,
    /// Last held-out test year.
    #[arg(long)]
    last_test_year: i32,
    #[command(flatten)]
    flags: FitFlags,
    /// Output directory (receives cv_report.csv, cv_report.json, manifest.json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator config TOML; defaults to the published-coefficient
    /// reference calibration when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the number of towns.
    #[arg(long)]
    towns: Option<usize>,
    /// Override the generator seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the first panel year.
    #[arg(long)]
    first_year: Option<i32>,
    /// Override the last panel year.
    #[arg(long)]
    last_year: Option<i32>,
    /// Output directory (receives panel.csv, truth.json, the decomposed
    /// ingest files, and manifest.json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MapArgs {
    /// Prediction CSV (from `predict`).
    #[arg(long)]
    predictions: PathBuf,
    /// Keep only this year; otherwise values are summed over years.
    #[arg(long)]
    year: Option<i32>,
    /// Output directory (receives map.csv and manifest.json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Cross-validation report JSON (from `cv`).
    #[arg(long)]
    cv: PathBuf,
    /// Output directory (receives report.txt and manifest.json).
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build_global()
        .expect("rayon pool initialized once");
    let result = match cli.command {
        Command::Indices(args) => cmd_indices(args),
        Command::BuildPanel(args) => cmd_build_panel(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Cv(args) => cmd_cv(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Map(args) => cmd_map(args),
        Command::Report(args) => cmd_report(args),
    };
    if let Err(e) = result {
        let payload = serde_json::json!({
            "category": e.category(),
            "message": e.to_string(),
        });
        eprintln!("{payload}");
        std::process::exit(if matches!(e, CliError::Usage(_)) { 2 } else { 1 });
    }
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn cmd_indices(args: IndicesArgs) -> Result<(), CliError> {
    if args.reference_end < args.reference_start {
        return Err(CliError::Usage(format!(
            "reference period {}..={} is empty",
            args.reference_start, args.reference_end
        )));
    }
    ensure_out_dir(&args.out)?;
    let cells = read_climate_csv(&args.climate)?;
    let reference = (args.reference_start, args.reference_end);
    let mut indices: Vec<ExtremeYearIndex> = Vec::new();
    let mut incomplete = 0usize;
    for series in &cells {
        let outcome = compute_cell_extremes(series, reference)?;
        incomplete += outcome.incomplete_years.len();
        indices.extend(outcome.indices);
    }
    indices.sort_by(|a, b| (&a.id, a.year).cmp(&(&b.id, b.year)));
    let out_file = args.out.join("extremes.csv");
    write_extremes_csv(&out_file, &indices)?;

    let mut manifest = RunManifest::new("indices");
    manifest.record_input(&args.climate)?;
    manifest.set_parameter("reference_start", args.reference_start);
    manifest.set_parameter("reference_end", args.reference_end);
    manifest.set_parameter("cells", cells.len());
    manifest.set_parameter("incomplete_cell_years", incomplete);
    manifest.record_output(&out_file);
    manifest.write(&args.out)?;
    println!(
        "wrote {} extreme-index rows for {} cells to {}",
        indices.len(),
        cells.len(),
        out_file.display()
    );
    Ok(())
}

fn cmd_build_panel(args: BuildPanelArgs) -> Result<(), CliError> {
    ensure_out_dir(&args.out)?;
    let exposure = read_exposure_csv(&args.exposure)?;
    let claims = read_claims_csv(&args.claims)?;
    let history = read_cat_history_csv(&args.requests)?;
    let geometry = read_geometry_csv(&args.geometry)?;
    let cell_clay = read_clay_csv(&args.clay)?;
    let cell_extremes = argile_core::climate::io::read_extremes_csv(&args.extremes)?;

    let mut town_clay = BTreeMap::new();
    let mut town_indices = Vec::new();
    for g in &geometry {
        town_clay.insert(g.town_id.clone(), aggregate_clay(&cell_clay, g)?);
        town_indices.extend(aggregate_indices(&cell_extremes, g)?);
    }
    let records = build_panel(&exposure, &claims, &town_indices, &town_clay, &history)?;
    let out_file = args.out.join("panel.csv");
    write_panel_csv(&out_file, &records)?;

    let mut manifest = RunManifest::new("build-panel");
    for input in [
        &args.exposure,
        &args.claims,
        &args.requests,
        &args.geometry,
        &args.clay,
        &args.extremes,
    ] {
        manifest.record_input(input)?;
    }
    manifest.set_parameter("towns", geometry.len());
    manifest.set_parameter("rows", records.len());
    manifest.record_output(&out_file);
    manifest.write(&args.out)?;
    println!("wrote {} panel rows to {}", records.len(), out_file.display());
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<(), CliError> {
    ensure_out_dir(&args.out)?;
    let resolved = args.flags.resolve()?;
    let panel = read_panel_csv(&args.panel)?;
    let records: Vec<_> = panel
        .into_iter()
        .filter(|r| {
            args.train_start.is_none_or(|y| r.year >= y)
                && args.train_end.is_none_or(|y| r.year <= y)
        })
        .collect();
    if records.is_empty() {
        return Err(CliError::Usage("no panel rows in the training window".to_string()));
    }
    let years = records.iter().map(|r| r.year);
    let training_years =
        Some((years.clone().min().expect("nonempty"), years.max().expect("nonempty")));
    let fit_options = FitOptions { training_years, ..resolved.fit };
    let forest_options = ForestOptions { training_years, ..resolved.forest };

    let text = match args.model.frequency_spec() {
        Some(spec) => fit_frequency(spec, &records, &fit_options, &forest_options)?.to_text(),
        None => {
            let fitted = match args.model {
                CliModel::Gamma => fit_severity(&records, &fit_options)?,
                CliModel::Tweedie => {
                    let design = total_cost_design(&records, &COVARIATES)?;
                    fit_glm(
                        &design,
                        FamilyRequest::Tweedie { power: resolved.tweedie_power },
                        &fit_options,
                    )?
                }
                _ => unreachable!("frequency specs handled above"),
            };
            glm_to_text(&fitted)
        }
    };
    let out_file = args.out.join("model.txt");
    std::fs::write(&out_file, &text).map_err(|e| io_err(&out_file, e))?;

    let mut manifest = RunManifest::new("fit");
    manifest.record_input(&args.panel)?;
    args.flags.record(&resolved, &mut manifest);
    manifest.set_parameter("model", args.model.name());
    manifest.set_parameter("rows", records.len());
    if let Some((lo, hi)) = training_years {
        manifest.set_parameter("training_years", format!("{lo}-{hi}"));
    }
    manifest.record_output(&out_file);
    manifest.write(&args.out)?;
    println!(
        "fitted {} on {} rows; model at {}",
        args.model.name(),
        records.len(),
        out_file.display()
    );
    Ok(())
}

/// What a model file predicts per row, by family: expected claims for count
/// models, average cost per claim for gamma, total cost for Tweedie.
enum LoadedModel {
    Frequency(FrequencyModel),
    Severity(argile_core::glm::FittedGlm),
    TotalCost(argile_core::glm::FittedGlm),
}

impl LoadedModel {
    fn from_text(text: &str) -> Result<LoadedModel, CliError> {
        if model_kind(text)? == "glm" {
            let fitted = glm_from_text(text)?;
            return Ok(match fitted.family {
                FamilyKind::Gamma => LoadedModel::Severity(fitted),
                FamilyKind::Tweedie => LoadedModel::TotalCost(fitted),
                _ => LoadedModel::Frequency(FrequencyModel::Glm(fitted)),
            });
        }
        Ok(LoadedModel::Frequency(FrequencyModel::from_text(text)?))
    }

    fn kind(&self) -> &'static str {
        match self {
            LoadedModel::Frequency(_) => "claims",
            LoadedModel::Severity(_) => "severity",
            LoadedModel::TotalCost(_) => "cost",
        }
    }

    fn id(&self) -> String {
        match self {
            LoadedModel::Frequency(m) => m.id(),
            LoadedModel::Severity(m) | LoadedModel::TotalCost(m) => m.family.name().to_string(),
        }
    }

    fn predict(&self, record: &argile_core::panel::TownYearRecord) -> Result<f64, CliError> {
        Ok(match self {
            LoadedModel::Frequency(m) => m.predict_record(record)?,
            LoadedModel::Severity(m) | LoadedModel::TotalCost(m) => {
                argile_core::glm::predict_record(m, record)?
            }
        })
    }
}

fn cmd_predict(args: PredictArgs) -> Result<(), CliError> {
    ensure_out_dir(&args.out)?;
    let text = std::fs::read_to_string(&args.model).map_err(|e| io_err(&args.model, e))?;
    let model = LoadedModel::from_text(&text)?;
    let panel = read_panel_csv(&args.panel)?;
    let records: Vec<_> = panel
        .into_iter()
        .filter(|r| args.year.is_none_or(|y| r.year == y))
        .collect();
    if records.is_empty() {
        return Err(CliError::Usage(match args.year {
            Some(y) => format!("no panel rows for year {y}"),
            None => "empty panel".to_string(),
        }));
    }
    let mut rows = Vec::with_capacity(records.len());
    for r in &records {
        rows.push(PredictionRow { town_id: r.town_id.clone(), year: r.year, value: model.predict(r)? });
    }
    rows.sort_by(|a, b| (&a.town_id, a.year).cmp(&(&b.town_id, b.year)));
    let set = PredictionSet { model_id: model.id(), kind: model.kind().to_string(), rows };
    let out_file = args.out.join("predictions.csv");
    write_predictions(&out_file, &set)?;

    let mut manifest = RunManifest::new("predict");
    manifest.record_input(&args.model)?;
    manifest.record_input(&args.panel)?;
    manifest.set_parameter("model_id", &set.model_id);
    manifest.set_parameter("kind", set.kind.clone());
    if let Some(y) = args.year {
        manifest.set_parameter("year", y);
    }
    manifest.record_output(&out_file);
    manifest.write(&args.out)?;
    println!("wrote {} predictions to {}", set.rows.len(), out_file.display());
    Ok(())
}

fn cmd_cv(args: CvArgs) -> Result<(), CliError> {
    ensure_out_dir(&args.out)?;
    let resolved = args.flags.resolve()?;
    let mut models = Vec::with_capacity(args.models.len());
    for name in &args.models {
        models.push(
            ModelSpec::parse(name)
                .ok_or_else(|| CliError::Usage(format!("unknown model {name:?}")))?,
        );
    }
    let panel = read_panel_csv(&args.panel)?;
    let folds = temporal_folds(&panel, args.first_test_year, args.last_test_year)?;
    let options = ReportOptions { fit: resolved.fit.clone(), forest: resolved.forest.clone() };
    let report = argile_core::validation::yearly_report(&models, &folds, &options)?;
    let csv_file = args.out.join("cv_report.csv");
    let json_file = args.out.join("cv_report.json");
    write_cv_csv(&csv_file, &report)?;
    write_cv_json(&json_file, &report)?;

    let mut manifest = RunManifest::new("cv");
    manifest.record_input(&args.panel)?;
    args.flags.record(&resolved, &mut manifest);
    manifest.set_parameter("models", args.models.join(","));
    manifest.set_parameter("first_test_year", args.first_test_year);
    manifest.set_parameter("last_test_year", args.last_test_year);
    manifest.set_parameter("folds", folds.len());
    manifest.record_output(&csv_file);
    manifest.record_output(&json_file);
    manifest.write(&args.out)?;
    println!(
        "cross-validated {} models over {} folds; report at {}",
        models.len(),
        folds.len(),
        json_file.display()
    );
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let mut config = match &args.config {
        Some(path) => read_config_toml(path)?,
        None => GeneratorConfig::reference_2018(1000, 0),
    };
    if let Some(v) = args.towns {
        config.n_towns = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.first_year {
        config.first_year = v;
    }
    if let Some(v) = args.last_year {
        config.last_year = v;
    }
    config.validate()?;
    let panel = generate_panel(&config)?;
    write_synthetic_dir(&panel, &args.out)?;

    let mut manifest = RunManifest::new("synth");
    if let Some(path) = &args.config {
        manifest.config_path = Some(path.display().to_string());
        manifest.record_input(path)?;
    }
    manifest.seed = Some(config.seed);
    manifest.set_parameter("towns", config.n_towns);
    manifest.set_parameter("first_year", config.first_year);
    manifest.set_parameter("last_year", config.last_year);
    manifest.set_parameter("family", format!("{:?}", config.frequency.family).to_lowercase());
    for name in [
        "panel.csv",
        "truth.json",
        "exposure.csv",
        "claims.csv",
        "cat_requests.csv",
        "geometry.csv",
        "clay.csv",
        "extremes.csv",
    ] {
        manifest.record_output(&args.out.join(name));
    }
    manifest.write(&args.out)?;
    println!(
        "generated {} rows for {} towns under {}",
        panel.records.len(),
        config.n_towns,
        args.out.display()
    );
    Ok(())
}

fn cmd_map(args: MapArgs) -> Result<(), CliError> {
    ensure_out_dir(&args.out)?;
    let set = read_predictions(&args.predictions)?;
    let mut by_town: BTreeMap<String, f64> = BTreeMap::new();
    for row in &set.rows {
        if args.year.is_none_or(|y| row.year == y) {
            *by_town.entry(row.town_id.clone()).or_insert(0.0) += row.value;
        }
    }
    if by_town.is_empty() {
        return Err(CliError::Usage(match args.year {
            Some(y) => format!("no predictions for year {y}"),
            None => "no predictions".to_string(),
        }));
    }
    let out_file = args.out.join("map.csv");
    let mut w = csv::Writer::from_path(&out_file).map_err(CostError::from)?;
    w.write_record(["town_id", "value"]).map_err(CostError::from)?;
    for (town_id, value) in &by_town {
        w.write_record([town_id.as_str(), &sig9(*value)]).map_err(CostError::from)?;
    }
    w.flush().map_err(|e| io_err(&out_file, e))?;

    let mut manifest = RunManifest::new("map");
    manifest.record_input(&args.predictions)?;
    manifest.set_parameter("model_id", &set.model_id);
    manifest.set_parameter("kind", set.kind.clone());
    if let Some(y) = args.year {
        manifest.set_parameter("year", y);
    }
    manifest.record_output(&out_file);
    manifest.write(&args.out)?;
    println!("wrote {} town values to {}", by_town.len(), out_file.display());
    Ok(())
}

fn render_report(report: &CvReport) -> String {
    let fmt_opt = |v: Option<f64>| v.map(sig9).unwrap_or_else(|| "-".to_string());
    let mut out = String::new();
    out.push_str("cross-validation summary (means over folds)\n\n");
    out.push_str(&format!(
        "{:<10} {:>6} {:>14} {:>14} {:>14} {:>14} {:>16} {:>16}\n",
        "model", "folds", "aic", "bic", "rmse", "deviance", "predicted_total", "observed_total"
    ));
    for a in &report.aggregates {
        out.push_str(&format!(
            "{:<10} {:>6} {:>14} {:>14} {:>14} {:>14} {:>16} {:>16}\n",
            a.model,
            a.folds,
            fmt_opt(a.mean_aic),
            fmt_opt(a.mean_bic),
            sig9(a.mean_rmse),
            sig9(a.mean_poisson_deviance),
            sig9(a.predicted_total),
            sig9(a.observed_total),
        ));
    }
    out.push_str("\nper-fold rows\n\n");
    out.push_str(&format!(
        "{:<10} {:<18} {:>14} {:>14} {:>14} {:>16} {:>16}\n",
        "model", "fold", "aic", "rmse", "deviance", "predicted_total", "observed_total"
    ));
    for r in &report.rows {
        out.push_str(&format!(
            "{:<10} {:<18} {:>14} {:>14} {:>14} {:>16} {:>16}\n",
            r.model,
            r.fold,
            fmt_opt(r.aic),
            sig9(r.rmse),
            sig9(r.poisson_deviance),
            sig9(r.predicted_total),
            sig9(r.observed_total),
        ));
    }
    if let Some(best) = report
        .aggregates
        .iter()
        .filter(|a| a.mean_aic.is_some())
        .min_by(|a, b| a.mean_aic.unwrap().total_cmp(&b.mean_aic.unwrap()))
    {
        out.push_str(&format!("\nbest mean AIC: {}\n", best.model));
    }
    if let Some(best) = report
        .aggregates
        .iter()
        .min_by(|a, b| a.mean_poisson_deviance.total_cmp(&b.mean_poisson_deviance))
    {
        out.push_str(&format!("best mean deviance: {}\n", best.model));
    }
    out
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    ensure_out_dir(&args.out)?;
    let report = read_cv_json(&args.cv)?;
    let out_file = args.out.join("report.txt");
    std::fs::write(&out_file, render_report(&report)).map_err(|e| io_err(&out_file, e))?;

    let mut manifest = RunManifest::new("report");
    manifest.record_input(&args.cv)?;
    manifest.set_parameter("models", report.aggregates.len());
    manifest.set_parameter("rows", report.rows.len());
    manifest.record_output(&out_file);
    manifest.write(&args.out)?;
    println!("wrote report to {}", out_file.display());
    Ok(())
}
