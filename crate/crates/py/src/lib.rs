//! Python bindings for the drought-index and claim-modelling pipeline.
//!
//! The module mirrors the command-line workflow: build or load a town-year
//! panel ([`Panel`]), fit frequency and severity models ([`fit_frequency`],
//! [`fit_severity`]), combine them ([`compound_predict`]), cross-validate
//! over held-out years ([`cross_validate`]), and reach the numerical
//! primitives directly (`zip_pmf`, `zinb_pmf`, `simulate_compound`,
//! `seasonal_extremes`).

use std::collections::BTreeSet;
use std::fmt::Display;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use argile_core::climate::{compute_cell_extremes, GridMonthlySeries, MonthRecord};
use argile_core::cost::{
    compound_predict as core_compound_predict, fit_frequency as core_fit_frequency,
    fit_severity as core_fit_severity, frequency_criteria,
    simulate_compound as core_simulate_compound, FrequencyModel, ModelSpec,
};
use argile_core::forest::ForestOptions;
use argile_core::glm::{information_criteria, predict_record, FitOptions, FittedGlm};
use argile_core::panel::io::{read_panel_csv, write_panel_csv};
use argile_core::panel::TownYearRecord;
use argile_core::synthetic::{generate_panel, GeneratorConfig};
use argile_core::validation::{temporal_folds, yearly_report, ReportOptions};
use argile_core::zero_inflated;

fn value_error<E: Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A town-year claim panel: one row per insured town and year.
#[pyclass(module = "argile")]
pub struct Panel {
    records: Vec<TownYearRecord>,
}

#[pymethods]
impl Panel {
    /// Loads a panel CSV written by the pipeline (`panel.csv`).
    #[staticmethod]
    fn read_csv(path: PathBuf) -> PyResult<Self> {
        Ok(Panel { records: read_panel_csv(&path).map_err(value_error)? })
    }

    /// Writes the panel in the pipeline's CSV schema.
    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        write_panel_csv(&path, &self.records).map_err(value_error)
    }

    /// Generates a synthetic panel from one of the reference calibrations:
    /// `family="poisson"` uses the reference Poisson frequency surface,
    /// `family="zinb"` the zero-inflated negative-binomial one. `intercept`
    /// overrides the frequency intercept (higher means denser claims).
    #[staticmethod]
    #[pyo3(signature = (towns, seed, family="poisson", first_year=None, last_year=None, intercept=None))]
    fn synthetic(
        towns: usize,
        seed: u64,
        family: &str,
        first_year: Option<i32>,
        last_year: Option<i32>,
        intercept: Option<f64>,
    ) -> PyResult<Self> {
        let mut config = match family {
            "poisson" => GeneratorConfig::reference_2018(towns, seed),
            "zinb" => GeneratorConfig::reference_zero_inflated(towns, seed),
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown family {other:?}: expected \"poisson\" or \"zinb\""
                )))
            }
        };
        if let Some(y) = first_year {
            config.first_year = y;
        }
        if let Some(y) = last_year {
            config.last_year = y;
        }
        if let Some(b0) = intercept {
            config.frequency.coefficients[0] = b0;
        }
        config.validate().map_err(value_error)?;
        let panel = generate_panel(&config).map_err(value_error)?;
        Ok(Panel { records: panel.records })
    }

    fn __len__(&self) -> usize {
        self.records.len()
    }

    fn __repr__(&self) -> String {
        match self.years() {
            Some((first, last)) => format!(
                "Panel({} rows, {} towns, {first}-{last})",
                self.records.len(),
                self.town_count()
            ),
            None => "Panel(empty)".to_string(),
        }
    }

    /// (first, last) year present, or None for an empty panel.
    fn years(&self) -> Option<(i32, i32)> {
        let min = self.records.iter().map(|r| r.year).min()?;
        let max = self.records.iter().map(|r| r.year).max()?;
        Some((min, max))
    }

    fn town_count(&self) -> usize {
        self.records.iter().map(|r| &r.town_id).collect::<BTreeSet<_>>().len()
    }

    fn total_claims(&self) -> u64 {
        self.records.iter().map(|r| r.claims).sum()
    }

    /// Total claim cost in currency units.
    fn total_cost(&self) -> f64 {
        self.records.iter().map(|r| r.cost_cents as f64 / 100.0).sum()
    }

    /// Keeps only rows with `first_year <= year <= last_year`.
    fn filter_years(&self, first_year: i32, last_year: i32) -> Panel {
        Panel {
            records: self
                .records
                .iter()
                .filter(|r| (first_year..=last_year).contains(&r.year))
                .cloned()
                .collect(),
        }
    }

    /// All rows as dictionaries (costs in currency units).
    fn rows<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyList>> {
        let out = PyList::empty(py);
        for r in &self.records {
            let d = PyDict::new(py);
            d.set_item("town_id", &r.town_id)?;
            d.set_item("year", r.year)?;
            d.set_item("exposure", r.exposure)?;
            d.set_item("claims", r.claims)?;
            d.set_item("cost", r.cost_cents as f64 / 100.0)?;
            d.set_item("sums_insured", r.sums_insured_cents as f64 / 100.0)?;
            d.set_item("espi", r.espi)?;
            d.set_item("esswi", r.esswi)?;
            d.set_item("essti", r.essti)?;
            d.set_item("clay", r.clay)?;
            d.set_item("cat", r.cat)?;
            out.append(d)?;
        }
        Ok(out)
    }
}

/// A fitted claim-frequency model (GLM, zero-inflated mixture, or forest).
#[pyclass(module = "argile")]
pub struct FrequencyFit {
    inner: FrequencyModel,
}

#[pymethods]
impl FrequencyFit {
    /// Short label: family plus training-year range.
    #[getter]
    fn model_id(&self) -> String {
        self.inner.id()
    }

    fn __repr__(&self) -> String {
        format!("FrequencyFit({})", self.inner.id())
    }

    /// Everything the fit reports, as one dictionary: coefficient blocks
    /// with standard errors for regressions, tree/out-of-bag facts for
    /// forests, and information criteria where a likelihood exists.
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        d.set_item("model", self.inner.id())?;
        let criteria = frequency_criteria(&self.inner);
        d.set_item("aic", criteria.map(|c| c.0))?;
        d.set_item("bic", criteria.map(|c| c.1))?;
        match &self.inner {
            FrequencyModel::Glm(m) => {
                d.set_item("kind", "glm")?;
                d.set_item("family", m.family.name())?;
                d.set_item("columns", &m.columns)?;
                d.set_item("coefficients", &m.coefficients)?;
                d.set_item("standard_errors", &m.standard_errors)?;
                d.set_item("theta", m.theta)?;
                d.set_item("dispersion", m.dispersion)?;
                d.set_item("log_likelihood", m.log_likelihood)?;
                d.set_item("deviance", m.deviance)?;
                d.set_item("n", m.n)?;
                d.set_item("flags", &m.flags)?;
            }
            FrequencyModel::ZeroInflated(z) => {
                d.set_item("kind", "zero_inflated")?;
                d.set_item("family", z.kind.name())?;
                d.set_item("columns", &z.columns)?;
                d.set_item("coefficients", &z.count_coefficients)?;
                d.set_item("standard_errors", &z.count_standard_errors)?;
                d.set_item("zero_coefficients", &z.zero_coefficients)?;
                d.set_item("zero_standard_errors", &z.zero_standard_errors)?;
                d.set_item("theta", z.theta)?;
                d.set_item("log_likelihood", z.log_likelihood)?;
                d.set_item("n", z.n)?;
                d.set_item("flags", &z.flags)?;
            }
            FrequencyModel::Forest(f) => {
                d.set_item("kind", "forest")?;
                d.set_item("columns", &f.feature_names)?;
                d.set_item("trees", f.trees.len())?;
                d.set_item("oob_deviance", f.oob_deviance)?;
                d.set_item("n", f.n)?;
            }
        }
        Ok(d)
    }

    /// Expected claim count for every panel row, in row order.
    fn predict(&self, panel: &Panel) -> PyResult<Vec<f64>> {
        panel
            .records
            .iter()
            .map(|r| self.inner.predict_record(r).map_err(value_error))
            .collect()
    }

    /// Serializes the fit in the pipeline's `model.txt` format.
    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(FrequencyFit { inner: FrequencyModel::from_text(text).map_err(value_error)? })
    }
}

/// A fitted gamma severity regression (average cost per claim).
#[pyclass(module = "argile")]
pub struct SeverityFit {
    inner: FittedGlm,
}

#[pymethods]
impl SeverityFit {
    fn __repr__(&self) -> String {
        format!("SeverityFit(n={})", self.inner.n)
    }

    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        d.set_item("family", self.inner.family.name())?;
        d.set_item("columns", &self.inner.columns)?;
        d.set_item("coefficients", &self.inner.coefficients)?;
        d.set_item("standard_errors", &self.inner.standard_errors)?;
        d.set_item("dispersion", self.inner.dispersion)?;
        d.set_item("log_likelihood", self.inner.log_likelihood)?;
        d.set_item("deviance", self.inner.deviance)?;
        d.set_item("n", self.inner.n)?;
        let criteria = information_criteria(&self.inner).ok();
        d.set_item("aic", criteria.map(|c| c.0))?;
        d.set_item("bic", criteria.map(|c| c.1))?;
        Ok(d)
    }

    /// Expected average cost per claim for every panel row, in row order.
    fn predict(&self, panel: &Panel) -> PyResult<Vec<f64>> {
        panel
            .records
            .iter()
            .map(|r| predict_record(&self.inner, r).map_err(value_error))
            .collect()
    }
}

/// Training rows together with their (first, last) year range.
type TrainingRows = (Vec<TownYearRecord>, Option<(i32, i32)>);

/// Resolves training rows and stamps their year range into the options.
fn training_slice(
    panel: &Panel,
    train_start: Option<i32>,
    train_end: Option<i32>,
) -> PyResult<TrainingRows> {
    let lo = train_start.unwrap_or(i32::MIN);
    let hi = train_end.unwrap_or(i32::MAX);
    let rows: Vec<TownYearRecord> =
        panel.records.iter().filter(|r| (lo..=hi).contains(&r.year)).cloned().collect();
    if rows.is_empty() {
        return Err(PyValueError::new_err("no rows in the requested training window"));
    }
    let min = rows.iter().map(|r| r.year).min().unwrap();
    let max = rows.iter().map(|r| r.year).max().unwrap();
    Ok((rows, Some((min, max))))
}

/// Fits a claim-frequency model on the panel (optionally restricted to a
/// training-year window). `model` is one of poisson, binomial, negbin, zip,
/// zinb, forest.
#[pyfunction]
#[pyo3(signature = (panel, model="poisson", train_start=None, train_end=None, max_iterations=None, trees=None, mtry=None, min_leaf=None, seed=None))]
#[allow(clippy::too_many_arguments)]
fn fit_frequency(
    panel: &Panel,
    model: &str,
    train_start: Option<i32>,
    train_end: Option<i32>,
    max_iterations: Option<usize>,
    trees: Option<usize>,
    mtry: Option<usize>,
    min_leaf: Option<usize>,
    seed: Option<u64>,
) -> PyResult<FrequencyFit> {
    let spec = ModelSpec::parse(model)
        .ok_or_else(|| PyValueError::new_err(format!("unknown model {model:?}")))?;
    let (rows, training_years) = training_slice(panel, train_start, train_end)?;
    let mut fit_options = FitOptions { training_years, ..FitOptions::default() };
    if let Some(limit) = max_iterations {
        fit_options.max_iterations = limit;
    }
    let mut forest_options = ForestOptions { training_years, ..ForestOptions::default() };
    if let Some(n) = trees {
        forest_options.trees = n;
    }
    if let Some(m) = mtry {
        forest_options.mtry = m;
    }
    if let Some(m) = min_leaf {
        forest_options.min_leaf = m;
    }
    if let Some(s) = seed {
        forest_options.seed = s;
    }
    let inner =
        core_fit_frequency(spec, &rows, &fit_options, &forest_options).map_err(value_error)?;
    Ok(FrequencyFit { inner })
}

/// Fits the claim-weighted gamma severity regression on rows with claims.
#[pyfunction]
#[pyo3(signature = (panel, train_start=None, train_end=None))]
fn fit_severity(
    panel: &Panel,
    train_start: Option<i32>,
    train_end: Option<i32>,
) -> PyResult<SeverityFit> {
    let (rows, training_years) = training_slice(panel, train_start, train_end)?;
    let options = FitOptions { training_years, ..FitOptions::default() };
    Ok(SeverityFit { inner: core_fit_severity(&rows, &options).map_err(value_error)? })
}

/// Multiplies frequency and severity predictions row by row: one dictionary
/// per panel row with the expected count, average cost, and total cost.
#[pyfunction]
fn compound_predict<'py>(
    py: Python<'py>,
    frequency: &FrequencyFit,
    severity: &SeverityFit,
    panel: &Panel,
) -> PyResult<Bound<'py, PyList>> {
    let predictions = core_compound_predict(&frequency.inner, &severity.inner, &panel.records)
        .map_err(value_error)?;
    let out = PyList::empty(py);
    for p in predictions {
        let d = PyDict::new(py);
        d.set_item("town_id", p.town_id)?;
        d.set_item("year", p.year)?;
        d.set_item("predicted_count", p.predicted_count)?;
        d.set_item("predicted_avg_cost", p.predicted_avg_cost)?;
        d.set_item("predicted_total", p.predicted_total)?;
        out.append(d)?;
    }
    Ok(out)
}

/// Leave-future-out cross-validation: for each test year in
/// `first_test_year..=last_test_year`, fits every model on strictly earlier
/// years and scores the held-out year. Returns `{"rows": [...],
/// "aggregates": [...]}` dictionaries matching the pipeline's cv report.
#[pyfunction]
#[pyo3(signature = (panel, first_test_year, last_test_year, models=vec!["poisson".into(), "negbin".into(), "zip".into(), "zinb".into()]))]
fn cross_validate<'py>(
    py: Python<'py>,
    panel: &Panel,
    first_test_year: i32,
    last_test_year: i32,
    models: Vec<String>,
) -> PyResult<Bound<'py, PyDict>> {
    let specs: Vec<ModelSpec> = models
        .iter()
        .map(|name| {
            ModelSpec::parse(name)
                .ok_or_else(|| PyValueError::new_err(format!("unknown model {name:?}")))
        })
        .collect::<PyResult<_>>()?;
    let folds =
        temporal_folds(&panel.records, first_test_year, last_test_year).map_err(value_error)?;
    let report = yearly_report(&specs, &folds, &ReportOptions::default()).map_err(value_error)?;
    let rows = PyList::empty(py);
    for r in &report.rows {
        let d = PyDict::new(py);
        d.set_item("model", &r.model)?;
        d.set_item("fold", &r.fold)?;
        d.set_item("aic", r.aic)?;
        d.set_item("bic", r.bic)?;
        d.set_item("rmse", r.rmse)?;
        d.set_item("poisson_deviance", r.poisson_deviance)?;
        d.set_item("predicted_total", r.predicted_total)?;
        d.set_item("observed_total", r.observed_total)?;
        rows.append(d)?;
    }
    let aggregates = PyList::empty(py);
    for a in &report.aggregates {
        let d = PyDict::new(py);
        d.set_item("model", &a.model)?;
        d.set_item("folds", a.folds)?;
        d.set_item("mean_aic", a.mean_aic)?;
        d.set_item("mean_bic", a.mean_bic)?;
        d.set_item("mean_rmse", a.mean_rmse)?;
        d.set_item("mean_poisson_deviance", a.mean_poisson_deviance)?;
        d.set_item("predicted_total", a.predicted_total)?;
        d.set_item("observed_total", a.observed_total)?;
        aggregates.append(d)?;
    }
    let out = PyDict::new(py);
    out.set_item("rows", rows)?;
    out.set_item("aggregates", aggregates)?;
    Ok(out)
}

/// Zero-inflated Poisson pmf: P(Y = y) with structural-zero probability `p`
/// and count mean `mu`.
#[pyfunction]
fn zip_pmf(p: f64, mu: f64, y: u64) -> PyResult<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(PyValueError::new_err("p must lie in [0, 1)"));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(PyValueError::new_err("mu must be positive and finite"));
    }
    Ok(zero_inflated::zip_pmf(p, mu, y))
}

/// Zero-inflated negative-binomial pmf with size `theta`.
#[pyfunction]
fn zinb_pmf(p: f64, mu: f64, theta: f64, y: u64) -> PyResult<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(PyValueError::new_err("p must lie in [0, 1)"));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(PyValueError::new_err("mu must be positive and finite"));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(PyValueError::new_err("theta must be positive and finite"));
    }
    Ok(zero_inflated::zinb_pmf(p, mu, theta, y))
}

/// Draws compound Poisson-gamma totals Y = sum of N ~ Poisson(`lambda_e`)
/// gamma(`shape`, `scale`) severities; the mean is lambda_e * shape * scale.
#[pyfunction]
fn simulate_compound(
    lambda_e: f64,
    shape: f64,
    scale: f64,
    draws: usize,
    seed: u64,
) -> PyResult<Vec<f64>> {
    if !(lambda_e >= 0.0 && lambda_e.is_finite()) {
        return Err(PyValueError::new_err("lambda_e must be nonnegative and finite"));
    }
    if !(shape > 0.0 && shape.is_finite()) || !(scale > 0.0 && scale.is_finite()) {
        return Err(PyValueError::new_err("shape and scale must be positive and finite"));
    }
    Ok(core_simulate_compound(lambda_e, shape, scale, draws, seed))
}

/// One monthly climate row: (cell_id, year, month, precipitation,
/// soil_water, soil_temperature).
type MonthRow = (String, i32, u8, f64, f64, f64);

/// Computes yearly extreme drought indices from monthly climate rows.
///
/// `months` holds `(cell_id, year, month, precipitation, soil_water,
/// soil_temperature)` tuples, contiguous and month-ordered per cell;
/// standardizers are fitted on `reference_start..=reference_end`. Returns
/// `{"indices": [(cell_id, year, espi, esswi, essti)], "incomplete_years":
/// [(cell_id, year)]}`.
#[pyfunction]
fn seasonal_extremes<'py>(
    py: Python<'py>,
    months: Vec<MonthRow>,
    reference_start: i32,
    reference_end: i32,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cells: Vec<GridMonthlySeries> = Vec::new();
    for (cell_id, year, month, precipitation, soil_water, soil_temperature) in months {
        if cells.last().map(|c| c.cell_id != cell_id).unwrap_or(true) {
            if cells.iter().any(|c| c.cell_id == cell_id) {
                return Err(PyValueError::new_err(format!(
                    "rows for cell {cell_id:?} are not contiguous"
                )));
            }
            cells.push(GridMonthlySeries {
                cell_id,
                latitude: 0.0,
                longitude: 0.0,
                months: Vec::new(),
            });
        }
        cells.last_mut().unwrap().months.push(MonthRecord {
            year,
            month,
            precipitation,
            soil_water,
            soil_temperature,
        });
    }
    let indices = PyList::empty(py);
    let incomplete = PyList::empty(py);
    for cell in &cells {
        let outcome =
            compute_cell_extremes(cell, (reference_start, reference_end)).map_err(value_error)?;
        for index in &outcome.indices {
            indices.append((&index.id, index.year, index.espi, index.esswi, index.essti))?;
        }
        for &year in &outcome.incomplete_years {
            incomplete.append((&cell.cell_id, year))?;
        }
    }
    let out = PyDict::new(py);
    out.set_item("indices", indices)?;
    out.set_item("incomplete_years", incomplete)?;
    Ok(out)
}

/// Claim-frequency and cost modelling for drought-induced subsidence.
#[pymodule]
fn argile(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Panel>()?;
    m.add_class::<FrequencyFit>()?;
    m.add_class::<SeverityFit>()?;
    m.add_function(wrap_pyfunction!(fit_frequency, m)?)?;
    m.add_function(wrap_pyfunction!(fit_severity, m)?)?;
    m.add_function(wrap_pyfunction!(compound_predict, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validate, m)?)?;
    m.add_function(wrap_pyfunction!(zip_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(zinb_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_compound, m)?)?;
    m.add_function(wrap_pyfunction!(seasonal_extremes, m)?)?;
    Ok(())
}
