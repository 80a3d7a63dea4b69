//! Exponential-family regressions with exposure offsets.
//!
//! Count models (Poisson, binomial, negative binomial) regress claim counts
//! on the five panel covariates with log-exposure offsets (exposure acts as
//! binomial trials). Severity uses a claim-weighted gamma regression on
//! average costs; total cost uses a Tweedie power family whose likelihood is
//! evaluated by series expansion.

pub(crate) mod family;
pub(crate) mod irls;
mod negbin;
pub mod serialize;
mod tweedie;

pub use tweedie::tweedie_logpdf;

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::digamma;
use thiserror::Error;

use crate::climate::trigamma;
use crate::panel::TownYearRecord;
use family::Family;

/// Panel covariates in their canonical order.
pub const COVARIATES: [&str; 5] = ["essti", "esswi", "clay", "cat", "espi"];

#[derive(Debug, Error)]
pub enum GlmError {
    #[error("did not converge after {iterations} iterations: {message}")]
    NonConvergence { iterations: usize, message: String },
    #[error("design matrix is singular (collinear columns)")]
    SingularDesign,
    #[error("bad response: {message}")]
    BadResponse { message: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("tweedie power {power} outside (1, 2)")]
    PowerOutOfRange { power: f64 },
    #[error("model has no proper likelihood; information criteria unavailable")]
    QuasiLikelihoodOnly,
    #[error("unknown covariate column {name}")]
    UnknownColumn { name: String },
    #[error("bad design: {message}")]
    BadDesign { message: String },
    #[error("model text: {message}")]
    ModelText { message: String },
}

/// Dense design with fixed column order, offset, response and prior weights.
///
/// The first column is always the intercept. The offset carries log-exposure
/// for count and total-cost models and zeros for severity; for binomial fits
/// `exp(offset)` acts as the per-row trial count.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub columns: Vec<String>,
    pub x: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub response: DVector<f64>,
    pub weights: DVector<f64>,
}

impl DesignMatrix {
    /// Validates shapes, finiteness and the leading intercept column.
    pub fn new(
        columns: Vec<String>,
        x: DMatrix<f64>,
        offset: DVector<f64>,
        response: DVector<f64>,
        weights: DVector<f64>,
    ) -> Result<Self, GlmError> {
        let n = x.nrows();
        if columns.len() != x.ncols() {
            return Err(GlmError::DimensionMismatch {
                expected: x.ncols(),
                got: columns.len(),
            });
        }
        if columns.first().map(String::as_str) != Some("intercept") {
            return Err(GlmError::BadDesign {
                message: "first column must be the intercept".to_string(),
            });
        }
        for (name, v) in [("offset", &offset), ("response", &response), ("weights", &weights)] {
            if v.len() != n {
                return Err(GlmError::DimensionMismatch { expected: n, got: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(GlmError::BadDesign {
                    message: format!("non-finite value in {name}"),
                });
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(GlmError::BadDesign {
                message: "non-finite value in design".to_string(),
            });
        }
        if x.column(0).iter().any(|&v| v != 1.0) {
            return Err(GlmError::BadDesign {
                message: "intercept column must be all ones".to_string(),
            });
        }
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(GlmError::BadDesign {
                message: "weights must be positive".to_string(),
            });
        }
        Ok(DesignMatrix { columns, x, offset, response, weights })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }
}

/// Value of a named covariate on one panel record.
pub fn covariate_value(r: &TownYearRecord, name: &str) -> Result<f64, GlmError> {
    match name {
        "essti" => Ok(r.essti),
        "esswi" => Ok(r.esswi),
        "clay" => Ok(r.clay),
        "cat" => Ok(r.cat as f64),
        "espi" => Ok(r.espi),
        _ => Err(GlmError::UnknownColumn { name: name.to_string() }),
    }
}

fn assemble(
    rows: Vec<(&TownYearRecord, f64, f64, f64)>, // (record, offset, response, weight)
    covariates: &[&str],
) -> Result<DesignMatrix, GlmError> {
    let n = rows.len();
    let p = covariates.len() + 1;
    let mut x = DMatrix::zeros(n, p);
    let mut offset = DVector::zeros(n);
    let mut response = DVector::zeros(n);
    let mut weights = DVector::zeros(n);
    for (i, (r, off, y, w)) in rows.into_iter().enumerate() {
        x[(i, 0)] = 1.0;
        for (j, name) in covariates.iter().enumerate() {
            x[(i, j + 1)] = covariate_value(r, name)?;
        }
        offset[i] = off;
        response[i] = y;
        weights[i] = w;
    }
    let mut columns = vec!["intercept".to_string()];
    columns.extend(covariates.iter().map(|c| c.to_string()));
    DesignMatrix::new(columns, x, offset, response, weights)
}

/// Count design: one row per record with positive exposure, response =
/// claims, offset = log exposure. Zero-exposure rows carry no information
/// and would make the offset infinite, so they are excluded.
pub fn count_design(
    records: &[TownYearRecord],
    covariates: &[&str],
) -> Result<DesignMatrix, GlmError> {
    let rows = records
        .iter()
        .filter(|r| r.exposure > 0)
        .map(|r| (r, (r.exposure as f64).ln(), r.claims as f64, 1.0))
        .collect();
    assemble(rows, covariates)
}

/// Severity design: rows with claims only; response = average cost per claim
/// in currency units, weighted by the claim count.
pub fn severity_design(
    records: &[TownYearRecord],
    covariates: &[&str],
) -> Result<DesignMatrix, GlmError> {
    let rows = records
        .iter()
        .filter(|r| r.claims > 0)
        .map(|r| {
            let severity = r.cost_cents as f64 / 100.0 / r.claims as f64;
            (r, 0.0, severity, r.claims as f64)
        })
        .collect();
    assemble(rows, covariates)
}

/// Total-cost design: response = total cost in currency units with a
/// log-exposure offset; zero-cost rows stay in (the Tweedie family has an
/// atom at zero).
pub fn total_cost_design(
    records: &[TownYearRecord],
    covariates: &[&str],
) -> Result<DesignMatrix, GlmError> {
    let rows = records
        .iter()
        .filter(|r| r.exposure > 0)
        .map(|r| (r, (r.exposure as f64).ln(), r.cost_cents as f64 / 100.0, 1.0))
        .collect();
    assemble(rows, covariates)
}

/// Model family requested from [`fit_glm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilyRequest {
    Poisson,
    Binomial,
    NegBin,
    Gamma,
    Tweedie { power: f64 },
}

/// Family tag carried by a fitted model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    Poisson,
    Binomial,
    NegBin,
    Gamma,
    Tweedie,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Poisson => "poisson",
            FamilyKind::Binomial => "binomial",
            FamilyKind::NegBin => "negbin",
            FamilyKind::Gamma => "gamma",
            FamilyKind::Tweedie => "tweedie",
        }
    }

    pub fn parse(s: &str) -> Result<Self, GlmError> {
        match s {
            "poisson" => Ok(FamilyKind::Poisson),
            "binomial" => Ok(FamilyKind::Binomial),
            "negbin" => Ok(FamilyKind::NegBin),
            "gamma" => Ok(FamilyKind::Gamma),
            "tweedie" => Ok(FamilyKind::Tweedie),
            _ => Err(GlmError::ModelText {
                message: format!("unknown family {s:?}"),
            }),
        }
    }
}

/// Fit options; defaults match the documented contract.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Evaluate the Tweedie series density for the log-likelihood. When off,
    /// the fit is quasi-likelihood only and information criteria error out.
    pub tweedie_density: bool,
    /// Recorded into the fitted model for provenance.
    pub training_years: Option<(i32, i32)>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 100,
            tweedie_density: true,
            training_years: None,
        }
    }
}

/// A fitted regression.
///
/// `dispersion` holds the gamma dispersion (reciprocal shape) or the Tweedie
/// mean-deviance dispersion; `theta` holds the negative-binomial size. `k`
/// counts coefficients plus one for each fitted auxiliary parameter, so AIC
/// and BIC are comparable across families.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedGlm {
    pub family: FamilyKind,
    pub columns: Vec<String>,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub dispersion: Option<f64>,
    pub theta: Option<f64>,
    pub tweedie_power: Option<f64>,
    pub log_likelihood: f64,
    pub deviance: f64,
    pub n: usize,
    pub k: usize,
    pub training_year_range: Option<(i32, i32)>,
    pub flags: Vec<String>,
}

/// Fits a GLM by IRLS (negative binomial adds a profile-likelihood search
/// for θ; Tweedie adds a series-evaluated likelihood).
pub fn fit_glm(
    design: &DesignMatrix,
    family: FamilyRequest,
    options: &FitOptions,
) -> Result<FittedGlm, GlmError> {
    let p = design.columns.len();
    check_response(design, family)?;
    match family {
        FamilyRequest::Poisson | FamilyRequest::Binomial => {
            let fam = if matches!(family, FamilyRequest::Poisson) {
                Family::Poisson
            } else {
                Family::Binomial
            };
            let out = irls::irls(design, fam, options.max_iterations)?;
            let mut ll = 0.0;
            for i in 0..design.n() {
                let trials = design.offset[i].exp();
                ll += fam.unit_loglik(
                    design.response[i],
                    out.mu[i],
                    design.weights[i],
                    trials,
                    1.0,
                );
            }
            Ok(FittedGlm {
                family: if matches!(family, FamilyRequest::Poisson) {
                    FamilyKind::Poisson
                } else {
                    FamilyKind::Binomial
                },
                columns: design.columns.clone(),
                coefficients: out.beta.iter().cloned().collect(),
                standard_errors: out.cov_unscaled.diagonal().iter().map(|v| v.sqrt()).collect(),
                dispersion: None,
                theta: None,
                tweedie_power: None,
                log_likelihood: ll,
                deviance: out.deviance,
                n: design.n(),
                k: p,
                training_year_range: options.training_years,
                flags: Vec::new(),
            })
        }
        FamilyRequest::NegBin => {
            let fit = negbin::fit_negbin(design)?;
            let mut flags = Vec::new();
            if fit.boundary {
                flags.push("theta_boundary".to_string());
            }
            Ok(FittedGlm {
                family: FamilyKind::NegBin,
                columns: design.columns.clone(),
                coefficients: fit.outcome.beta.iter().cloned().collect(),
                standard_errors: fit
                    .outcome
                    .cov_unscaled
                    .diagonal()
                    .iter()
                    .map(|v| v.sqrt())
                    .collect(),
                dispersion: None,
                theta: Some(fit.theta),
                tweedie_power: None,
                log_likelihood: fit.log_likelihood,
                deviance: fit.outcome.deviance,
                n: design.n(),
                k: p + 1,
                training_year_range: options.training_years,
                flags,
            })
        }
        FamilyRequest::Gamma => {
            let out = irls::irls(design, Family::Gamma, options.max_iterations)?;
            // Pearson dispersion scales the standard errors; the reported
            // dispersion is the reciprocal of the maximum-likelihood shape.
            let mut pearson = 0.0;
            for i in 0..design.n() {
                let m = out.mu[i];
                pearson += design.weights[i] * (design.response[i] - m).powi(2) / (m * m);
            }
            let phi_pearson = pearson / (design.n() - p) as f64;
            let nu = gamma_shape_mle(design, &out.mu, 1.0 / phi_pearson)?;
            let mut ll = 0.0;
            for i in 0..design.n() {
                ll += Family::Gamma.unit_loglik(
                    design.response[i],
                    out.mu[i],
                    design.weights[i],
                    1.0,
                    1.0 / nu,
                );
            }
            Ok(FittedGlm {
                family: FamilyKind::Gamma,
                columns: design.columns.clone(),
                coefficients: out.beta.iter().cloned().collect(),
                standard_errors: out
                    .cov_unscaled
                    .diagonal()
                    .iter()
                    .map(|v| (v * phi_pearson).sqrt())
                    .collect(),
                dispersion: Some(1.0 / nu),
                theta: None,
                tweedie_power: None,
                log_likelihood: ll,
                deviance: out.deviance,
                n: design.n(),
                k: p + 1,
                training_year_range: options.training_years,
                flags: Vec::new(),
            })
        }
        FamilyRequest::Tweedie { power } => {
            if !(power > 1.0 && power < 2.0) {
                return Err(GlmError::PowerOutOfRange { power });
            }
            let fam = Family::Tweedie { power };
            let out = irls::irls(design, fam, options.max_iterations)?;
            let phi = out.deviance / (design.n() - p) as f64;
            let (ll, mut flags) = if options.tweedie_density {
                let mut ll = 0.0;
                for i in 0..design.n() {
                    ll += fam.unit_loglik(
                        design.response[i],
                        out.mu[i],
                        design.weights[i],
                        1.0,
                        phi,
                    );
                }
                (ll, Vec::new())
            } else {
                (f64::NAN, vec!["quasi_likelihood".to_string()])
            };
            if out.deviance <= 0.0 {
                flags.push("zero_deviance".to_string());
            }
            Ok(FittedGlm {
                family: FamilyKind::Tweedie,
                columns: design.columns.clone(),
                coefficients: out.beta.iter().cloned().collect(),
                standard_errors: out
                    .cov_unscaled
                    .diagonal()
                    .iter()
                    .map(|v| (v * phi).sqrt())
                    .collect(),
                dispersion: Some(phi),
                theta: None,
                tweedie_power: Some(power),
                log_likelihood: ll,
                deviance: out.deviance,
                n: design.n(),
                k: p + 1,
                training_year_range: options.training_years,
                flags,
            })
        }
    }
}

fn check_response(design: &DesignMatrix, family: FamilyRequest) -> Result<(), GlmError> {
    let bad = |message: String| Err(GlmError::BadResponse { message });
    match family {
        FamilyRequest::Poisson | FamilyRequest::NegBin | FamilyRequest::Binomial => {
            for (i, &y) in design.response.iter().enumerate() {
                if y < 0.0 || y.fract() != 0.0 {
                    return bad(format!("row {i}: count response {y} not a non-negative integer"));
                }
            }
        }
        FamilyRequest::Gamma => {
            for (i, &y) in design.response.iter().enumerate() {
                if y <= 0.0 {
                    return bad(format!("row {i}: gamma response {y} not positive"));
                }
            }
        }
        FamilyRequest::Tweedie { .. } => {
            for (i, &y) in design.response.iter().enumerate() {
                if y < 0.0 {
                    return bad(format!("row {i}: negative response {y}"));
                }
            }
            if design.response.iter().all(|&y| y == 0.0) {
                return bad("response has no positive mass".to_string());
            }
        }
    }
    Ok(())
}

/// Maximum-likelihood gamma shape given fitted means, by Newton iteration.
fn gamma_shape_mle(
    design: &DesignMatrix,
    mu: &DVector<f64>,
    start: f64,
) -> Result<f64, GlmError> {
    let mut nu = start.max(1e-6);
    for _ in 0..100 {
        let mut score = 0.0;
        let mut hess = 0.0;
        for i in 0..design.n() {
            let w = design.weights[i];
            let a = nu * w;
            score += w
                * ((a / mu[i]).ln() + 1.0 + design.response[i].ln()
                    - design.response[i] / mu[i]
                    - digamma(a));
            hess += w * (1.0 / nu - w * trigamma(a));
        }
        let step = score / hess;
        let mut next = nu - step;
        if !next.is_finite() || next <= 0.0 {
            next = nu / 2.0;
        }
        if (next - nu).abs() <= 1e-12 * nu {
            return Ok(next);
        }
        nu = next;
    }
    Err(GlmError::NonConvergence {
        iterations: 100,
        message: "gamma shape estimation stalled".to_string(),
    })
}

/// Expected response for one covariate vector (without intercept, in the
/// model's column order) and exposure: counts for Poisson/negative binomial
/// (E·exp(η)), expected successes for binomial (E·logistic(η)), per-claim
/// severity for gamma (exp(η)), and total cost for Tweedie (E·exp(η)).
pub fn predict_rate(model: &FittedGlm, covariates: &[f64], exposure: f64) -> Result<f64, GlmError> {
    if covariates.len() + 1 != model.coefficients.len() {
        return Err(GlmError::DimensionMismatch {
            expected: model.coefficients.len() - 1,
            got: covariates.len(),
        });
    }
    let eta: f64 = model.coefficients[0]
        + covariates
            .iter()
            .zip(&model.coefficients[1..])
            .map(|(c, b)| c * b)
            .sum::<f64>();
    Ok(match model.family {
        FamilyKind::Poisson | FamilyKind::NegBin => exposure * eta.exp(),
        FamilyKind::Binomial => exposure / (1.0 + (-eta).exp()),
        FamilyKind::Gamma => eta.exp(),
        FamilyKind::Tweedie => exposure * eta.exp(),
    })
}

/// Applies [`predict_rate`] to a panel record, pulling covariates by name.
pub fn predict_record(model: &FittedGlm, record: &TownYearRecord) -> Result<f64, GlmError> {
    let covariates: Vec<f64> = model.columns[1..]
        .iter()
        .map(|c| covariate_value(record, c))
        .collect::<Result<_, _>>()?;
    predict_rate(model, &covariates, record.exposure as f64)
}

/// AIC and BIC from the fitted likelihood.
pub fn information_criteria(model: &FittedGlm) -> Result<(f64, f64), GlmError> {
    if !model.log_likelihood.is_finite() {
        return Err(GlmError::QuasiLikelihoodOnly);
    }
    let k = model.k as f64;
    let aic = 2.0 * k - 2.0 * model.log_likelihood;
    let bic = k * (model.n as f64).ln() - 2.0 * model.log_likelihood;
    Ok((aic, bic))
}
