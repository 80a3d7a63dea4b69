//! Severity and total-cost modeling.
//!
//! A claim-weighted gamma regression prices the average cost per claim; any
//! frequency model (GLM, zero-inflated, forest) times that severity gives a
//! compound total-cost prediction. A compound Poisson–Gamma simulator
//! provides the oracle against which the direct Tweedie total-cost fit is
//! checked, and [`compare_cost_models`] runs the three pipelines side by
//! side on a held-out year.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use thiserror::Error;

use crate::forest::{
    fit_forest, forest_from_text, forest_to_text, predict_forest_record, ForestError,
    ForestOptions, PoissonForest,
};
use crate::glm::serialize::{glm_from_text, glm_to_text, model_kind};
use crate::glm::{
    count_design, fit_glm, predict_record, severity_design, total_cost_design, FamilyKind,
    FamilyRequest, FitOptions, FittedGlm, GlmError, COVARIATES,
};
use crate::numfmt::sig9;
use crate::panel::TownYearRecord;
use crate::zero_inflated::{
    fit_zero_inflated, predict_zero_inflated_record, zero_inflated_from_text,
    zero_inflated_to_text, ZeroInflatedFit, ZiKind,
};

#[derive(Debug, Error)]
pub enum CostError {
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error("incompatible models: {message}")]
    ModelIncompatible { message: String },
    #[error("missing model: {which}")]
    MissingModel { which: String },
    #[error("no training rows before year {year}")]
    NoTrainingRows { year: i32 },
    #[error("no rows for test year {year}")]
    NoTestRows { year: i32 },
    #[error("prediction file: {message}")]
    PredictionFile { message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Any model that predicts an expected claim count for a panel row.
#[derive(Debug, Clone, PartialEq)]
pub enum FrequencyModel {
    Glm(FittedGlm),
    ZeroInflated(ZeroInflatedFit),
    Forest(PoissonForest),
}

fn year_suffix(range: Option<(i32, i32)>) -> String {
    match range {
        Some((lo, hi)) => format!("@{lo}-{hi}"),
        None => String::new(),
    }
}

impl FrequencyModel {
    /// Short provenance label: model kind plus training-year range.
    pub fn id(&self) -> String {
        match self {
            FrequencyModel::Glm(m) => {
                format!("{}{}", m.family.name(), year_suffix(m.training_year_range))
            }
            FrequencyModel::ZeroInflated(z) => {
                let kind = match z.kind {
                    ZiKind::Zip => "zip",
                    ZiKind::Zinb => "zinb",
                };
                format!("{kind}{}", year_suffix(z.training_year_range))
            }
            FrequencyModel::Forest(f) => {
                format!("forest{}", year_suffix(f.options.training_years))
            }
        }
    }

    /// Covariate names after the intercept, in design order.
    pub fn covariate_names(&self) -> &[String] {
        match self {
            FrequencyModel::Glm(m) => &m.columns[1..],
            FrequencyModel::ZeroInflated(z) => &z.columns[1..],
            FrequencyModel::Forest(f) => &f.feature_names,
        }
    }

    /// Expected claim count for one panel row.
    pub fn predict_record(&self, record: &TownYearRecord) -> Result<f64, CostError> {
        match self {
            FrequencyModel::Glm(m) => Ok(predict_record(m, record)?),
            FrequencyModel::ZeroInflated(z) => Ok(predict_zero_inflated_record(z, record)?),
            FrequencyModel::Forest(f) => Ok(predict_forest_record(f, record)),
        }
    }

    pub fn to_text(&self) -> String {
        match self {
            FrequencyModel::Glm(m) => glm_to_text(m),
            FrequencyModel::ZeroInflated(z) => zero_inflated_to_text(z),
            FrequencyModel::Forest(f) => forest_to_text(f),
        }
    }

    pub fn from_text(text: &str) -> Result<Self, CostError> {
        match model_kind(text)?.as_str() {
            "glm" => Ok(FrequencyModel::Glm(glm_from_text(text)?)),
            "zero_inflated" => Ok(FrequencyModel::ZeroInflated(zero_inflated_from_text(text)?)),
            "forest" => Ok(FrequencyModel::Forest(forest_from_text(text)?)),
            other => Err(CostError::ModelIncompatible {
                message: format!("unknown model kind {other:?}"),
            }),
        }
    }
}

/// Frequency model families selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSpec {
    Poisson,
    Binomial,
    NegBin,
    Zip,
    Zinb,
    Forest,
}

impl ModelSpec {
    pub fn name(self) -> &'static str {
        match self {
            ModelSpec::Poisson => "poisson",
            ModelSpec::Binomial => "binomial",
            ModelSpec::NegBin => "negbin",
            ModelSpec::Zip => "zip",
            ModelSpec::Zinb => "zinb",
            ModelSpec::Forest => "forest",
        }
    }

    pub fn parse(name: &str) -> Option<ModelSpec> {
        Some(match name {
            "poisson" => ModelSpec::Poisson,
            "binomial" => ModelSpec::Binomial,
            "negbin" => ModelSpec::NegBin,
            "zip" => ModelSpec::Zip,
            "zinb" => ModelSpec::Zinb,
            "forest" => ModelSpec::Forest,
            _ => return None,
        })
    }
}

/// Fits the requested frequency model on the panel's count data.
pub fn fit_frequency(
    spec: ModelSpec,
    records: &[TownYearRecord],
    fit_options: &FitOptions,
    forest_options: &ForestOptions,
) -> Result<FrequencyModel, CostError> {
    let glm = |family| -> Result<FrequencyModel, CostError> {
        let design = count_design(records, &COVARIATES)?;
        Ok(FrequencyModel::Glm(fit_glm(&design, family, fit_options)?))
    };
    let zi = |kind| -> Result<FrequencyModel, CostError> {
        let design = count_design(records, &COVARIATES)?;
        Ok(FrequencyModel::ZeroInflated(fit_zero_inflated(&design, kind, fit_options)?))
    };
    match spec {
        ModelSpec::Poisson => glm(FamilyRequest::Poisson),
        ModelSpec::Binomial => glm(FamilyRequest::Binomial),
        ModelSpec::NegBin => glm(FamilyRequest::NegBin),
        ModelSpec::Zip => zi(ZiKind::Zip),
        ModelSpec::Zinb => zi(ZiKind::Zinb),
        ModelSpec::Forest => Ok(FrequencyModel::Forest(fit_forest(records, forest_options)?)),
    }
}

/// AIC and BIC for any frequency model that has a likelihood (`None` for
/// forests and quasi-likelihood fits).
pub fn frequency_criteria(model: &FrequencyModel) -> Option<(f64, f64)> {
    match model {
        FrequencyModel::Glm(m) => crate::glm::information_criteria(m).ok(),
        FrequencyModel::ZeroInflated(z) => Some(crate::zero_inflated::zero_inflated_criteria(z)),
        FrequencyModel::Forest(_) => None,
    }
}

/// One town-year compound prediction: expected count times expected average
/// cost per claim, with the ids of the models that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct CompoundPrediction {
    pub town_id: String,
    pub year: i32,
    pub predicted_count: f64,
    /// Currency units per claim.
    pub predicted_avg_cost: f64,
    /// Currency units; exactly `predicted_count * predicted_avg_cost`.
    pub predicted_total: f64,
    pub frequency_model_id: String,
    pub severity_model_id: String,
}

/// Fits the claim-weighted gamma severity regression (average cost per claim,
/// rows with at least one claim).
pub fn fit_severity(
    records: &[TownYearRecord],
    options: &FitOptions,
) -> Result<FittedGlm, GlmError> {
    let design = severity_design(records, &COVARIATES)?;
    fit_glm(&design, FamilyRequest::Gamma, options)
}

fn severity_id(model: &FittedGlm) -> String {
    format!("{}{}", model.family.name(), year_suffix(model.training_year_range))
}

/// Multiplies frequency and severity predictions row by row.
///
/// The two models must agree on covariate schema; the frequency side must be
/// a count model and the severity side a gamma regression.
pub fn compound_predict(
    frequency: &FrequencyModel,
    severity: &FittedGlm,
    records: &[TownYearRecord],
) -> Result<Vec<CompoundPrediction>, CostError> {
    if severity.family != FamilyKind::Gamma {
        return Err(CostError::ModelIncompatible {
            message: format!("severity model is {}, expected gamma", severity.family.name()),
        });
    }
    if let FrequencyModel::Glm(m) = frequency {
        if !matches!(m.family, FamilyKind::Poisson | FamilyKind::Binomial | FamilyKind::NegBin) {
            return Err(CostError::ModelIncompatible {
                message: format!("{} regression is not a count model", m.family.name()),
            });
        }
    }
    if frequency.covariate_names() != &severity.columns[1..] {
        return Err(CostError::ModelIncompatible {
            message: format!(
                "covariate schemas differ: frequency {:?} vs severity {:?}",
                frequency.covariate_names(),
                &severity.columns[1..]
            ),
        });
    }
    let frequency_id = frequency.id();
    let severity_id = severity_id(severity);
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let n_hat = frequency.predict_record(r)?;
        let z_hat = predict_record(severity, r)?;
        out.push(CompoundPrediction {
            town_id: r.town_id.clone(),
            year: r.year,
            predicted_count: n_hat,
            predicted_avg_cost: z_hat,
            predicted_total: n_hat * z_hat,
            frequency_model_id: frequency_id.clone(),
            severity_model_id: severity_id.clone(),
        });
    }
    out.sort_by(|a, b| (&a.town_id, a.year).cmp(&(&b.town_id, b.year)));
    Ok(out)
}

/// Draws total costs Y = Σ_{i≤N} Zᵢ with N ~ Poisson(`lambda_e`) and
/// Zᵢ ~ Gamma(`shape`, `scale`); the mean is `lambda_e * shape * scale`.
pub fn simulate_compound(
    lambda_e: f64,
    shape: f64,
    scale: f64,
    draws: usize,
    seed: u64,
) -> Vec<f64> {
    assert!(lambda_e >= 0.0 && shape > 0.0 && scale > 0.0, "bad compound parameters");
    if lambda_e == 0.0 {
        return vec![0.0; draws];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = Poisson::new(lambda_e).expect("positive rate");
    let sev = Gamma::new(shape, scale).expect("positive shape and scale");
    (0..draws)
        .map(|_| {
            let n = count.sample(&mut rng) as u64;
            (0..n).map(|_| sev.sample(&mut rng)).sum()
        })
        .collect()
}

/// Per-method values (totals or errors) for the three cost pipelines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerMethod {
    pub zinb_gamma: f64,
    pub forest_gamma: f64,
    pub tweedie: f64,
}

/// One test-year town with its three predicted totals, currency units.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModelRow {
    pub town_id: String,
    pub year: i32,
    pub observed: Option<f64>,
    pub zinb_gamma: f64,
    pub forest_gamma: f64,
    pub tweedie: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostComparison {
    pub year: i32,
    pub rows: Vec<CostModelRow>,
    pub totals: PerMethod,
    pub observed_total: Option<f64>,
    /// Per-town RMSE of each method, when observations exist.
    pub rmse: Option<PerMethod>,
}

pub struct CompareOptions {
    pub fit: FitOptions,
    pub forest: ForestOptions,
    /// Treat the test year's outcome fields as real observations.
    pub observed: bool,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            // The Tweedie density is not needed for totals, only for AIC.
            fit: FitOptions { tweedie_density: false, ..FitOptions::default() },
            forest: ForestOptions::default(),
            observed: true,
        }
    }
}

/// Fits the three total-cost pipelines on all years strictly before `year`
/// and predicts that year town by town: zero-inflated negative binomial ×
/// gamma severity, Poisson forest × gamma severity, and a direct Tweedie
/// (power 1.5) total-cost regression.
pub fn compare_cost_models(
    panel: &[TownYearRecord],
    year: i32,
    options: &CompareOptions,
) -> Result<CostComparison, CostError> {
    let train: Vec<TownYearRecord> =
        panel.iter().filter(|r| r.year < year).cloned().collect();
    let test: Vec<TownYearRecord> =
        panel.iter().filter(|r| r.year == year).cloned().collect();
    if train.is_empty() {
        return Err(CostError::NoTrainingRows { year });
    }
    if test.is_empty() {
        return Err(CostError::NoTestRows { year });
    }
    if !train.iter().any(|r| r.claims > 0) {
        return Err(CostError::MissingModel {
            which: "severity (no positive-claim training rows)".to_string(),
        });
    }
    let lo = train.iter().map(|r| r.year).min().unwrap();
    let hi = train.iter().map(|r| r.year).max().unwrap();
    let fit_options = FitOptions { training_years: Some((lo, hi)), ..options.fit.clone() };
    let forest_options =
        ForestOptions { training_years: Some((lo, hi)), ..options.forest.clone() };

    let counts = count_design(&train, &COVARIATES)?;
    let zinb = FrequencyModel::ZeroInflated(fit_zero_inflated(&counts, ZiKind::Zinb, &fit_options)?);
    let forest = FrequencyModel::Forest(fit_forest(&train, &forest_options)?);
    let severity = fit_severity(&train, &fit_options)?;
    let totals_design = total_cost_design(&train, &COVARIATES)?;
    let tweedie = fit_glm(&totals_design, FamilyRequest::Tweedie { power: 1.5 }, &fit_options)?;

    let zinb_pred = compound_predict(&zinb, &severity, &test)?;
    let forest_pred = compound_predict(&forest, &severity, &test)?;
    let mut rows = Vec::with_capacity(test.len());
    let mut sorted_test: Vec<&TownYearRecord> = test.iter().collect();
    sorted_test.sort_by(|a, b| (&a.town_id, a.year).cmp(&(&b.town_id, b.year)));
    for (i, r) in sorted_test.iter().enumerate() {
        let observed = options.observed.then(|| r.cost_cents as f64 / 100.0);
        rows.push(CostModelRow {
            town_id: r.town_id.clone(),
            year: r.year,
            observed,
            zinb_gamma: zinb_pred[i].predicted_total,
            forest_gamma: forest_pred[i].predicted_total,
            tweedie: predict_record(&tweedie, r)?,
        });
    }
    let totals = PerMethod {
        zinb_gamma: rows.iter().map(|r| r.zinb_gamma).sum(),
        forest_gamma: rows.iter().map(|r| r.forest_gamma).sum(),
        tweedie: rows.iter().map(|r| r.tweedie).sum(),
    };
    let observed_total = options.observed.then(|| {
        rows.iter().map(|r| r.observed.unwrap()).sum()
    });
    let rmse = options.observed.then(|| {
        let n = rows.len() as f64;
        let mut sq = PerMethod { zinb_gamma: 0.0, forest_gamma: 0.0, tweedie: 0.0 };
        for r in &rows {
            let obs = r.observed.unwrap();
            sq.zinb_gamma += (r.zinb_gamma - obs).powi(2);
            sq.forest_gamma += (r.forest_gamma - obs).powi(2);
            sq.tweedie += (r.tweedie - obs).powi(2);
        }
        PerMethod {
            zinb_gamma: (sq.zinb_gamma / n).sqrt(),
            forest_gamma: (sq.forest_gamma / n).sqrt(),
            tweedie: (sq.tweedie / n).sqrt(),
        }
    });
    Ok(CostComparison { year, rows, totals, observed_total, rmse })
}

/// A per-town-year prediction series from one model.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub model_id: String,
    /// What the value measures: "claims", "cost", or "severity".
    pub kind: String,
    /// Sorted by town then year.
    pub rows: Vec<PredictionRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub town_id: String,
    pub year: i32,
    pub value: f64,
}

/// Writes a prediction series as CSV (`town_id,year,model,kind,value`,
/// 9-significant-digit values).
pub fn write_predictions(path: &Path, set: &PredictionSet) -> Result<(), CostError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["town_id", "year", "model", "kind", "value"])?;
    for row in &set.rows {
        w.write_record([
            row.town_id.as_str(),
            &row.year.to_string(),
            &set.model_id,
            &set.kind,
            &sig9(row.value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_predictions`]; the model and kind columns
/// must be uniform.
pub fn read_predictions(path: &Path) -> Result<PredictionSet, CostError> {
    let bad = |message: String| CostError::PredictionFile { message };
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let expected = ["town_id", "year", "model", "kind", "value"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(bad(format!("expected header {expected:?}, found {headers:?}")));
    }
    let mut model_id: Option<String> = None;
    let mut kind: Option<String> = None;
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        let town_id = record[0].to_string();
        let year: i32 = record[1]
            .parse()
            .map_err(|_| bad(format!("bad year {:?} for town {town_id}", &record[1])))?;
        let model = &record[2];
        let k = &record[3];
        match &model_id {
            None => model_id = Some(model.to_string()),
            Some(m) if m != model => {
                return Err(bad(format!("mixed models {m:?} and {model:?}")));
            }
            _ => {}
        }
        match &kind {
            None => kind = Some(k.to_string()),
            Some(existing) if existing != k => {
                return Err(bad(format!("mixed kinds {existing:?} and {k:?}")));
            }
            _ => {}
        }
        let value: f64 = record[4]
            .parse()
            .map_err(|_| bad(format!("bad value {:?} for town {town_id}", &record[4])))?;
        rows.push(PredictionRow { town_id, year, value });
    }
    if rows.is_empty() {
        return Err(bad("no prediction rows".to_string()));
    }
    rows.sort_by(|a, b| (&a.town_id, a.year).cmp(&(&b.town_id, b.year)));
    Ok(PredictionSet { model_id: model_id.unwrap(), kind: kind.unwrap(), rows })
}

/// Writes compound predictions as CSV with count, severity, and total
/// columns plus model provenance.
pub fn write_compound_predictions(
    path: &Path,
    predictions: &[CompoundPrediction],
) -> Result<(), CostError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "town_id",
        "year",
        "predicted_count",
        "predicted_avg_cost",
        "predicted_total",
        "frequency_model",
        "severity_model",
    ])?;
    for p in predictions {
        w.write_record([
            p.town_id.as_str(),
            &p.year.to_string(),
            &sig9(p.predicted_count),
            &sig9(p.predicted_avg_cost),
            &sig9(p.predicted_total),
            &p.frequency_model_id,
            &p.severity_model_id,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a [`CostComparison`] as CSV: one row per town plus a `TOTAL` row;
/// missing observations are empty fields.
pub fn write_cost_comparison(path: &Path, cmp: &CostComparison) -> Result<(), CostError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["town_id", "year", "observed", "zinb_gamma", "forest_gamma", "tweedie"])?;
    let opt = |v: Option<f64>| v.map(sig9).unwrap_or_default();
    for r in &cmp.rows {
        w.write_record([
            r.town_id.as_str(),
            &r.year.to_string(),
            &opt(r.observed),
            &sig9(r.zinb_gamma),
            &sig9(r.forest_gamma),
            &sig9(r.tweedie),
        ])?;
    }
    w.write_record([
        "TOTAL",
        &cmp.year.to_string(),
        &opt(cmp.observed_total),
        &sig9(cmp.totals.zinb_gamma),
        &sig9(cmp.totals.forest_gamma),
        &sig9(cmp.totals.tweedie),
    ])?;
    w.flush()?;
    Ok(())
}

/// Groups predictions by year into national totals, sorted by year.
pub fn national_totals(rows: &[PredictionRow]) -> Vec<(i32, f64)> {
    let mut by_year: BTreeMap<i32, f64> = BTreeMap::new();
    for row in rows {
        *by_year.entry(row.year).or_insert(0.0) += row.value;
    }
    by_year.into_iter().collect()
}
