//! Zero-inflated count models.
//!
//! A zero-inflated model mixes a point mass at zero (the "structural" zeros,
//! with logit-linear probability in the covariates) with a Poisson or
//! negative-binomial count distribution whose log mean carries the exposure
//! offset. Fitting runs expectation-maximization into the right basin, then
//! BFGS on the full likelihood with analytic gradients, then Newton polishing
//! with a finite-difference Hessian, which also provides standard errors.
//!
//! The count-only model is the boundary of the zero-inflated family where the
//! structural-zero probability vanishes. If the optimizer ends up below the
//! count-only likelihood it is snapped to that boundary, so the zero-inflated
//! likelihood never falls below its embedded count model's.

use nalgebra::{Cholesky, DMatrix, DVector};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::glm::family::Family;
use crate::glm::serialize::{parse_f64, parse_usize, Reader, HEADER};
use crate::glm::{fit_glm, irls, DesignMatrix, FamilyRequest, FitOptions, FittedGlm, GlmError};

/// Count component of a zero-inflated model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZiKind {
    /// Zero-inflated Poisson.
    Zip,
    /// Zero-inflated negative binomial.
    Zinb,
}

impl ZiKind {
    pub fn name(self) -> &'static str {
        match self {
            ZiKind::Zip => "poisson",
            ZiKind::Zinb => "negbin",
        }
    }

    pub fn parse(s: &str) -> Result<Self, GlmError> {
        match s {
            "poisson" => Ok(ZiKind::Zip),
            "negbin" => Ok(ZiKind::Zinb),
            _ => Err(GlmError::ModelText {
                message: format!("unknown zero-inflated family {s:?}"),
            }),
        }
    }
}

/// A fitted zero-inflated model. The zero block shares the count block's
/// covariates (intercept first) but takes no offset.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroInflatedFit {
    pub kind: ZiKind,
    pub columns: Vec<String>,
    pub count_coefficients: Vec<f64>,
    pub count_standard_errors: Vec<f64>,
    pub zero_coefficients: Vec<f64>,
    pub zero_standard_errors: Vec<f64>,
    /// Negative-binomial size; `None` for the Poisson count component.
    pub theta: Option<f64>,
    pub log_likelihood: f64,
    pub n: usize,
    /// Parameter count for information criteria: both coefficient blocks plus
    /// one for θ when present.
    pub k: usize,
    pub training_year_range: Option<(i32, i32)>,
    pub flags: Vec<String>,
}

/// ln(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Probability of `y` under a zero-inflated Poisson with structural-zero
/// probability `p` and count mean `mu`.
pub fn zip_pmf(p: f64, mu: f64, y: u64) -> f64 {
    assert!((0.0..1.0).contains(&p), "structural zero probability in [0,1)");
    let count = ((y as f64) * mu.ln() - mu - ln_gamma(y as f64 + 1.0)).exp();
    if y == 0 {
        p + (1.0 - p) * count
    } else {
        (1.0 - p) * count
    }
}

/// Probability of `y` under a zero-inflated negative binomial with
/// structural-zero probability `p`, count mean `mu` and size `theta`.
pub fn zinb_pmf(p: f64, mu: f64, theta: f64, y: u64) -> f64 {
    assert!((0.0..1.0).contains(&p), "structural zero probability in [0,1)");
    assert!(theta > 0.0, "negative binomial size must be positive");
    let y = y as f64;
    let count = (ln_gamma(y + theta) - ln_gamma(theta) - ln_gamma(y + 1.0)
        + theta * (theta.ln() - (theta + mu).ln())
        + y * (mu.ln() - (theta + mu).ln()))
    .exp();
    if y == 0.0 {
        p + (1.0 - p) * count
    } else {
        (1.0 - p) * count
    }
}

/// Parameter packing: [zero block | count block | lnθ (ZINB only)].
struct Packing {
    p: usize,
    with_theta: bool,
}

impl Packing {
    fn dim(&self) -> usize {
        2 * self.p + usize::from(self.with_theta)
    }

    fn zero<'a>(&self, params: &'a DVector<f64>) -> &'a [f64] {
        &params.as_slice()[..self.p]
    }

    fn count<'a>(&self, params: &'a DVector<f64>) -> &'a [f64] {
        &params.as_slice()[self.p..2 * self.p]
    }

    fn theta(&self, params: &DVector<f64>) -> f64 {
        if self.with_theta {
            params[2 * self.p].exp()
        } else {
            f64::INFINITY
        }
    }
}

/// Log-likelihood and its gradient in packed parameters, plus the scale used
/// for the convergence tolerance (a bound on the gradient's summand mass).
struct Evaluation {
    loglik: f64,
    grad: DVector<f64>,
    scale: f64,
}

fn evaluate(design: &DesignMatrix, pack: &Packing, params: &DVector<f64>) -> Evaluation {
    let n = design.n();
    let p = pack.p;
    let mut loglik = 0.0;
    let mut grad = DVector::zeros(pack.dim());
    let mut scale = 0.0f64;
    let theta = pack.theta(params);
    for i in 0..n {
        let row = design.x.row(i);
        let mut a = 0.0;
        let mut eta = design.offset[i];
        for j in 0..p {
            a += row[j] * pack.zero(params)[j];
            eta += row[j] * pack.count(params)[j];
        }
        let mu = eta.min(700.0).exp().max(1e-300);
        let y = design.response[i];
        let ln_p = -softplus(-a);
        let ln_1mp = -softplus(a);
        let pi = ln_p.exp();
        // d loglik / da and d loglik / d eta for this row.
        let (dl_da, dl_deta, dl_dlntheta);
        if y == 0.0 {
            // ln q: count model's probability of zero.
            let ln_q = if pack.with_theta {
                theta * (theta.ln() - (theta + mu).ln())
            } else {
                -mu
            };
            let top = ln_p.max(ln_1mp + ln_q);
            let ln_l = top + ((ln_p - top).exp() + (ln_1mp + ln_q - top).exp()).ln();
            loglik += ln_l;
            // Posterior probability that the zero is structural.
            let t = (ln_p - ln_l).exp();
            dl_da = (1.0 - pi) * t * (1.0 - ln_q.exp());
            if pack.with_theta {
                dl_deta = -(1.0 - t) * theta * mu / (theta + mu);
                dl_dlntheta = (1.0 - t)
                    * theta
                    * ((theta / (theta + mu)).ln() + mu / (theta + mu));
            } else {
                dl_deta = -(1.0 - t) * mu;
                dl_dlntheta = 0.0;
            }
        } else {
            loglik += ln_1mp;
            if pack.with_theta {
                loglik += ln_gamma(y + theta) - ln_gamma(theta) - ln_gamma(y + 1.0)
                    + theta * (theta.ln() - (theta + mu).ln())
                    + y * (mu.ln() - (theta + mu).ln());
                dl_deta = y - (y + theta) * mu / (theta + mu);
                dl_dlntheta = theta
                    * (digamma(y + theta) - digamma(theta)
                        + (theta / (theta + mu)).ln()
                        + 1.0
                        - (theta + y) / (theta + mu));
            } else {
                loglik += y * mu.ln() - mu - ln_gamma(y + 1.0);
                dl_deta = y - mu;
                dl_dlntheta = 0.0;
            }
            dl_da = -pi;
        }
        let row_max = (0..p).map(|j| row[j].abs()).fold(0.0, f64::max);
        scale += (1.0 + y.abs() + mu) * row_max;
        for j in 0..p {
            grad[j] += dl_da * row[j];
            grad[p + j] += dl_deta * row[j];
        }
        if pack.with_theta {
            grad[2 * p] += dl_dlntheta;
        }
    }
    Evaluation { loglik, grad, scale }
}

/// One EM pass for the ZIP model; returns updated parameters, or an error if
/// a maximization step degenerates.
fn em_step(
    design: &DesignMatrix,
    pack: &Packing,
    params: &DVector<f64>,
    max_iter: usize,
) -> Result<DVector<f64>, GlmError> {
    let n = design.n();
    let p = pack.p;
    // E-step: posterior structural-zero probabilities.
    let mut t = DVector::zeros(n);
    for i in 0..n {
        if design.response[i] > 0.0 {
            continue;
        }
        let row = design.x.row(i);
        let mut a = 0.0;
        let mut eta = design.offset[i];
        for j in 0..p {
            a += row[j] * pack.zero(params)[j];
            eta += row[j] * pack.count(params)[j];
        }
        let mu = eta.min(700.0).exp();
        let ln_p = -softplus(-a);
        let ln_1mp = -softplus(a);
        let top = ln_p.max(ln_1mp - mu);
        let ln_l = top + ((ln_p - top).exp() + (ln_1mp - mu - top).exp()).ln();
        t[i] = (ln_p - ln_l).exp().clamp(1e-12, 1.0 - 1e-12);
    }
    // M-step, zero block: logistic regression of the posteriors.
    let zero_design = DesignMatrix::new(
        design.columns.clone(),
        design.x.clone(),
        DVector::zeros(n),
        t.clone(),
        DVector::from_element(n, 1.0),
    )?;
    let zero = irls::irls(&zero_design, Family::Binomial, max_iter)?;
    // M-step, count block: Poisson weighted by the non-structural share.
    let count_design = DesignMatrix::new(
        design.columns.clone(),
        design.x.clone(),
        design.offset.clone(),
        design.response.clone(),
        t.map(|ti| (1.0 - ti).max(1e-12)),
    )?;
    let count = irls::irls(&count_design, Family::Poisson, max_iter)?;
    let mut next = params.clone();
    for j in 0..p {
        next[j] = zero.beta[j];
        next[p + j] = count.beta[j];
    }
    Ok(next)
}

/// Central-difference Hessian of the log-likelihood from analytic gradients.
fn fd_hessian(design: &DesignMatrix, pack: &Packing, params: &DVector<f64>) -> DMatrix<f64> {
    let d = pack.dim();
    let mut h = DMatrix::zeros(d, d);
    for j in 0..d {
        let step = 1e-5 * params[j].abs().max(1.0);
        let mut hi = params.clone();
        hi[j] += step;
        let mut lo = params.clone();
        lo[j] -= step;
        let ghi = evaluate(design, pack, &hi).grad;
        let glo = evaluate(design, pack, &lo).grad;
        for l in 0..d {
            h[(l, j)] = (ghi[l] - glo[l]) / (2.0 * step);
        }
    }
    // Symmetrize away finite-difference noise.
    for j in 0..d {
        for l in 0..j {
            let m = 0.5 * (h[(j, l)] + h[(l, j)]);
            h[(j, l)] = m;
            h[(l, j)] = m;
        }
    }
    h
}

/// BFGS ascent on the log-likelihood with Armijo backtracking.
fn bfgs(
    design: &DesignMatrix,
    pack: &Packing,
    start: DVector<f64>,
    max_iter: usize,
) -> (DVector<f64>, Evaluation) {
    let d = pack.dim();
    let mut x = start;
    let mut eval = evaluate(design, pack, &x);
    let mut hinv = DMatrix::identity(d, d);
    for _ in 0..max_iter {
        let tol = 1e-9 * eval.scale.max(1.0);
        if eval.grad.amax() <= tol {
            break;
        }
        let mut dir = &hinv * &eval.grad;
        let mut slope = dir.dot(&eval.grad);
        if slope <= 0.0 || slope.is_nan() || !dir.iter().all(|v| v.is_finite()) {
            hinv = DMatrix::identity(d, d);
            dir = eval.grad.clone();
            slope = dir.dot(&eval.grad);
        }
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = &x + &dir * alpha;
            if cand == x {
                // The step underflowed below the iterate's resolution; no
                // backtracking scale can move this point.
                break;
            }
            let ev = evaluate(design, pack, &cand);
            if ev.loglik.is_finite() && ev.loglik >= eval.loglik + 1e-4 * alpha * slope {
                let s = &cand - &x;
                let yv = &ev.grad - &eval.grad;
                let sy = -s.dot(&yv); // positive for a concave objective
                if sy > 1e-12 * s.norm() * yv.norm() {
                    // Standard inverse-Hessian update, with signs flipped for
                    // maximization (curvature is negative definite), so hinv
                    // tracks the inverse of the negated Hessian.
                    let rho = 1.0 / sy;
                    let hy = &hinv * &yv;
                    let yhy = yv.dot(&hy);
                    hinv += (&s * s.transpose()) * (rho * (1.0 + rho * yhy))
                        + (&hy * s.transpose() + &s * hy.transpose()) * rho;
                }
                x = cand;
                eval = ev;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (x, eval)
}

/// Newton polish using the finite-difference Hessian.
fn newton_polish(
    design: &DesignMatrix,
    pack: &Packing,
    mut x: DVector<f64>,
    mut eval: Evaluation,
) -> (DVector<f64>, Evaluation) {
    for _ in 0..8 {
        let tol = 1e-10 * eval.scale.max(1.0);
        if eval.grad.amax() <= tol {
            break;
        }
        // Solve −H·δ = g; H is negative definite at an interior maximum.
        let neg = -fd_hessian(design, pack, &x);
        let Some(chol) = Cholesky::new(neg) else { break };
        let delta = chol.solve(&eval.grad);
        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let cand = &x + &delta * alpha;
            let ev = evaluate(design, pack, &cand);
            if ev.loglik.is_finite() && ev.loglik >= eval.loglik - 1e-12 * eval.loglik.abs() {
                x = cand;
                eval = ev;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (x, eval)
}

/// Fits a zero-inflated model on a count design (response = counts, offset =
/// log exposure). The zero block uses the same covariates without the offset.
pub fn fit_zero_inflated(
    design: &DesignMatrix,
    kind: ZiKind,
    options: &FitOptions,
) -> Result<ZeroInflatedFit, GlmError> {
    let p = design.columns.len();
    let pack = Packing { p, with_theta: matches!(kind, ZiKind::Zinb) };
    if design.n() <= pack.dim() {
        return Err(GlmError::BadResponse {
            message: format!("{} rows for {} parameters", design.n(), pack.dim()),
        });
    }
    for (i, &y) in design.response.iter().enumerate() {
        if y < 0.0 || y.fract() != 0.0 {
            return Err(GlmError::BadResponse {
                message: format!("row {i}: count response {y} not a non-negative integer"),
            });
        }
    }
    if design.response.iter().all(|&y| y == 0.0) {
        return Err(GlmError::BadResponse {
            message: "all counts are zero; the zero-inflation probability is unidentified"
                .to_string(),
        });
    }
    if design.weights.iter().any(|&w| w != 1.0) {
        return Err(GlmError::BadDesign {
            message: "zero-inflated fits take unweighted rows".to_string(),
        });
    }
    // Embedded count-only model: starting values and the nesting floor.
    let count_only = fit_glm(
        design,
        match kind {
            ZiKind::Zip => FamilyRequest::Poisson,
            ZiKind::Zinb => FamilyRequest::NegBin,
        },
        options,
    )?;
    let mut params = DVector::zeros(pack.dim());
    for j in 0..p {
        params[p + j] = count_only.coefficients[j];
    }
    // Zero-block start: excess-zero fraction on the logit scale.
    let zero_frac = design.response.iter().filter(|&&y| y == 0.0).count() as f64
        / design.n() as f64;
    let start_p = zero_frac.clamp(0.05, 0.95);
    params[0] = (start_p / (1.0 - start_p)).ln();
    if pack.with_theta {
        params[2 * p] = count_only.theta.unwrap_or(2.0).clamp(0.01, 1e4).ln();
    }
    // EM warms up the basin (keeps θ fixed for ZINB); BFGS and Newton do the
    // precise work on the joint likelihood.
    let mut em_params = params.clone();
    let mut em_ll = evaluate(design, &pack, &em_params).loglik;
    for _ in 0..25 {
        match em_step(design, &pack, &em_params, options.max_iterations) {
            Ok(next) => {
                let ll = evaluate(design, &pack, &next).loglik;
                if !ll.is_finite() || ll < em_ll - 1e-8 * (1.0 + em_ll.abs()) {
                    break;
                }
                let done = (ll - em_ll).abs() <= 1e-9 * (1.0 + em_ll.abs());
                em_params = next;
                em_ll = ll;
                if done {
                    break;
                }
            }
            Err(_) => break,
        }
    }
    if em_ll.is_finite() && em_ll >= evaluate(design, &pack, &params).loglik {
        params = em_params;
    }
    let converged = |ev: &Evaluation| ev.grad.amax() <= 1e-6 * ev.scale.max(1.0);
    let (mut x, mut eval) = bfgs(design, &pack, params.clone(), 300);
    (x, eval) = newton_polish(design, &pack, x, eval);
    if !converged(&eval) {
        // BFGS can stall on the flat ridge in ln θ that opens up when the
        // counts carry no overdispersion (θ → ∞): curvature pairs sampled
        // along the ridge distort the inverse-Hessian estimate until the line
        // search stops moving. Retry from deterministic fallback starts — the
        // stall point itself (fresh curvature), then the warm start with ln θ
        // displaced along the ridge — and keep the best attempt.
        let mut restarts = vec![x.clone()];
        if pack.with_theta {
            for shift in [2.0, -2.0, 4.0] {
                let mut s = params.clone();
                s[2 * p] += shift;
                restarts.push(s);
            }
        }
        for start in restarts {
            let (rx, rev) = bfgs(design, &pack, start, 300);
            let (rx, rev) = newton_polish(design, &pack, rx, rev);
            if converged(&rev) {
                x = rx;
                eval = rev;
                break;
            }
            if rev.loglik > eval.loglik {
                x = rx;
                eval = rev;
            }
        }
    }

    let mut flags = Vec::new();
    let mut loglik = eval.loglik;
    let mut final_x = x;
    if loglik < count_only.log_likelihood {
        // Snap to the count-only boundary (structural zeros vanish).
        let mut snapped = DVector::zeros(pack.dim());
        snapped[0] = -30.0;
        for j in 0..p {
            snapped[p + j] = count_only.coefficients[j];
        }
        if pack.with_theta {
            snapped[2 * p] = count_only.theta.unwrap_or(2.0).ln();
        }
        let ev = evaluate(design, &pack, &snapped);
        final_x = snapped;
        loglik = ev.loglik;
        flags.push("zero_inflation_collapsed".to_string());
    } else {
        let tol = 1e-6 * eval.scale.max(1.0);
        if eval.grad.amax() > tol {
            return Err(GlmError::NonConvergence {
                iterations: 300,
                message: format!(
                    "zero-inflated score norm {:.3e} above tolerance",
                    eval.grad.amax()
                ),
            });
        }
    }

    // Standard errors from the observed information; at a collapsed boundary
    // the information matrix is singular and the errors are undefined.
    let d = pack.dim();
    let mut se = vec![f64::NAN; d];
    if flags.is_empty() {
        let neg = -fd_hessian(design, &pack, &final_x);
        if let Some(chol) = Cholesky::new(neg) {
            let cov = chol.inverse();
            for (j, s) in se.iter_mut().enumerate() {
                *s = cov[(j, j)].sqrt();
            }
        } else {
            flags.push("information_not_positive_definite".to_string());
        }
    }

    let theta = pack.with_theta.then(|| pack.theta(&final_x));
    Ok(ZeroInflatedFit {
        kind,
        columns: design.columns.clone(),
        count_coefficients: pack.count(&final_x).to_vec(),
        count_standard_errors: se[p..2 * p].to_vec(),
        zero_coefficients: pack.zero(&final_x).to_vec(),
        zero_standard_errors: se[..p].to_vec(),
        theta,
        log_likelihood: loglik,
        n: design.n(),
        k: pack.dim(),
        training_year_range: options.training_years,
        flags,
    })
}

/// Expected count for one covariate vector (without intercept, in column
/// order) and exposure: `(1 − p)·E·exp(η)`.
pub fn predict_zero_inflated(
    fit: &ZeroInflatedFit,
    covariates: &[f64],
    exposure: f64,
) -> Result<f64, GlmError> {
    if covariates.len() + 1 != fit.count_coefficients.len() {
        return Err(GlmError::DimensionMismatch {
            expected: fit.count_coefficients.len() - 1,
            got: covariates.len(),
        });
    }
    let dot = |coef: &[f64]| -> f64 {
        coef[0]
            + covariates
                .iter()
                .zip(&coef[1..])
                .map(|(c, b)| c * b)
                .sum::<f64>()
    };
    let a = dot(&fit.zero_coefficients);
    let p = 1.0 / (1.0 + (-a).exp());
    Ok((1.0 - p) * exposure * dot(&fit.count_coefficients).exp())
}

/// Applies [`predict_zero_inflated`] to a panel record.
pub fn predict_zero_inflated_record(
    fit: &ZeroInflatedFit,
    record: &crate::panel::TownYearRecord,
) -> Result<f64, GlmError> {
    let covariates: Vec<f64> = fit.columns[1..]
        .iter()
        .map(|c| crate::glm::covariate_value(record, c))
        .collect::<Result<_, _>>()?;
    predict_zero_inflated(fit, &covariates, record.exposure as f64)
}

/// AIC and BIC; the likelihood is always proper for these models.
pub fn zero_inflated_criteria(fit: &ZeroInflatedFit) -> (f64, f64) {
    let k = fit.k as f64;
    (
        2.0 * k - 2.0 * fit.log_likelihood,
        k * (fit.n as f64).ln() - 2.0 * fit.log_likelihood,
    )
}

/// Serializes a zero-inflated fit in the shared model-text format.
pub fn zero_inflated_to_text(fit: &ZeroInflatedFit) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    writeln!(s, "{HEADER}").unwrap();
    writeln!(s, "kind zero_inflated").unwrap();
    writeln!(s, "family {}", fit.kind.name()).unwrap();
    writeln!(s, "columns {}", fit.columns.join(",")).unwrap();
    match fit.training_year_range {
        Some((lo, hi)) => writeln!(s, "train_years {lo} {hi}").unwrap(),
        None => writeln!(s, "train_years none").unwrap(),
    }
    writeln!(s, "n {}", fit.n).unwrap();
    writeln!(s, "k {}", fit.k).unwrap();
    writeln!(s, "log_likelihood {}", fit.log_likelihood).unwrap();
    match fit.theta {
        Some(t) => writeln!(s, "theta {t}").unwrap(),
        None => writeln!(s, "theta none").unwrap(),
    }
    if fit.flags.is_empty() {
        writeln!(s, "flags none").unwrap();
    } else {
        writeln!(s, "flags {}", fit.flags.join(",")).unwrap();
    }
    for ((name, est), err) in fit
        .columns
        .iter()
        .zip(&fit.count_coefficients)
        .zip(&fit.count_standard_errors)
    {
        writeln!(s, "count_coef {name} {est} {err}").unwrap();
    }
    for ((name, est), err) in fit
        .columns
        .iter()
        .zip(&fit.zero_coefficients)
        .zip(&fit.zero_standard_errors)
    {
        writeln!(s, "zero_coef {name} {est} {err}").unwrap();
    }
    writeln!(s, "end").unwrap();
    s
}

/// Parses text written by [`zero_inflated_to_text`].
pub fn zero_inflated_from_text(text: &str) -> Result<ZeroInflatedFit, GlmError> {
    let fail = |line: usize, message: String| GlmError::ModelText {
        message: format!("line {line}: {message}"),
    };
    let mut r = Reader::new(text);
    r.expect(HEADER)?;
    let (no, kind) = r.key("kind")?;
    if kind != "zero_inflated" {
        return Err(fail(no, format!("expected kind zero_inflated, found {kind:?}")));
    }
    let (_, family) = r.key("family")?;
    let kind = ZiKind::parse(family)?;
    let (_, cols) = r.key("columns")?;
    let columns: Vec<String> = cols.split(',').map(str::to_string).collect();
    let (no, years) = r.key("train_years")?;
    let training_year_range = if years == "none" {
        None
    } else {
        let mut it = years.split_whitespace();
        let lo = it
            .next()
            .and_then(|v| v.parse::<i32>().ok())
            .ok_or_else(|| fail(no, "bad train_years".to_string()))?;
        let hi = it
            .next()
            .and_then(|v| v.parse::<i32>().ok())
            .ok_or_else(|| fail(no, "bad train_years".to_string()))?;
        Some((lo, hi))
    };
    let (no, n) = r.key("n")?;
    let n = parse_usize(n, no)?;
    let (no, k) = r.key("k")?;
    let k = parse_usize(k, no)?;
    let (no, ll) = r.key("log_likelihood")?;
    let log_likelihood = parse_f64(ll, no)?;
    let (no, theta) = r.key("theta")?;
    let theta = if theta == "none" { None } else { Some(parse_f64(theta, no)?) };
    let (_, flags) = r.key("flags")?;
    let flags: Vec<String> = if flags == "none" {
        Vec::new()
    } else {
        flags.split(',').map(str::to_string).collect()
    };
    let mut read_block = |tag: &str| -> Result<(Vec<f64>, Vec<f64>), GlmError> {
        let mut est = Vec::with_capacity(columns.len());
        let mut err = Vec::with_capacity(columns.len());
        for name in &columns {
            let (no, line) = r.next_line()?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(tag) {
                return Err(fail(no, format!("expected {tag} line for column {name:?}")));
            }
            if parts.next() != Some(name.as_str()) {
                return Err(fail(no, format!("{tag} order mismatch at column {name:?}")));
            }
            let e = parts
                .next()
                .ok_or_else(|| fail(no, "missing estimate".to_string()))?;
            let s = parts
                .next()
                .ok_or_else(|| fail(no, "missing standard error".to_string()))?;
            est.push(parse_f64(e, no)?);
            err.push(parse_f64(s, no)?);
        }
        Ok((est, err))
    };
    let (count_coefficients, count_standard_errors) = read_block("count_coef")?;
    let (zero_coefficients, zero_standard_errors) = read_block("zero_coef")?;
    r.expect("end")?;
    Ok(ZeroInflatedFit {
        kind,
        columns,
        count_coefficients,
        count_standard_errors,
        zero_coefficients,
        zero_standard_errors,
        theta,
        log_likelihood,
        n,
        k,
        training_year_range,
        flags,
    })
}

/// Convenience: likelihood comparison floor for nesting checks — the
/// zero-inflated likelihood may not fall below its embedded count model's by
/// more than floating-point noise.
pub fn nests_over(fit: &ZeroInflatedFit, count_model: &FittedGlm) -> bool {
    fit.log_likelihood >= count_model.log_likelihood - 1e-6
}
