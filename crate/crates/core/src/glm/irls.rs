//! Iteratively reweighted least squares with step-halving.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::family::Family;
use super::{DesignMatrix, GlmError};

pub(crate) struct IrlsOutcome {
    pub beta: DVector<f64>,
    /// (XᵀWX)⁻¹ at the converged weights; multiply by the dispersion to get
    /// the coefficient covariance.
    pub cov_unscaled: DMatrix<f64>,
    /// Fitted means on the working scale (proportions for binomial).
    pub mu: DVector<f64>,
    pub deviance: f64,
}

/// Working response/weights: binomial models proportions with the trial
/// count folded into the prior weight; everything else models the raw
/// response.
struct Working {
    y: DVector<f64>,
    w: DVector<f64>,
    /// Offset added to the linear predictor (zeros for binomial).
    offset: DVector<f64>,
}

fn working(design: &DesignMatrix, family: Family) -> Result<Working, GlmError> {
    let n = design.response.len();
    if family.offset_in_eta() {
        return Ok(Working {
            y: design.response.clone(),
            w: design.weights.clone(),
            offset: design.offset.clone(),
        });
    }
    let mut y = DVector::zeros(n);
    let mut w = DVector::zeros(n);
    for i in 0..n {
        let trials = design.offset[i].exp();
        if design.response[i] > trials {
            return Err(GlmError::BadResponse {
                message: format!(
                    "row {i}: {} successes exceed {trials} trials",
                    design.response[i]
                ),
            });
        }
        y[i] = design.response[i] / trials;
        w[i] = design.weights[i] * trials;
    }
    Ok(Working {
        y,
        w,
        offset: DVector::zeros(n),
    })
}

fn total_deviance(family: Family, work: &Working, mu: &DVector<f64>) -> f64 {
    let mut dev = 0.0;
    for i in 0..work.y.len() {
        dev += family.unit_deviance(work.y[i], mu[i], work.w[i]);
    }
    dev
}

fn means(x: &DMatrix<f64>, beta: &DVector<f64>, offset: &DVector<f64>, family: Family) -> DVector<f64> {
    let mut eta = x * beta;
    eta += offset;
    eta.map(|e| family.inv_link(e))
}

/// Starting value: intercept at the link-transformed weighted mean, other
/// coefficients zero. For log-link families with offsets this is already the
/// exact intercept-only maximum-likelihood solution.
fn start(design: &DesignMatrix, work: &Working, family: Family) -> Result<DVector<f64>, GlmError> {
    let p = design.x.ncols();
    let mut beta = DVector::zeros(p);
    let num: f64 = work
        .y
        .iter()
        .zip(work.w.iter())
        .map(|(y, w)| w * y)
        .sum();
    let den: f64 = if family.offset_in_eta() {
        work.w
            .iter()
            .zip(work.offset.iter())
            .map(|(w, o)| w * o.exp())
            .sum()
    } else {
        work.w.iter().sum()
    };
    let mean = num / den;
    if !matches!(family, Family::Binomial) && num <= 0.0 {
        return Err(GlmError::BadResponse {
            message: "response has no positive mass".to_string(),
        });
    }
    beta[0] = match family {
        Family::Binomial => {
            let p0 = mean.clamp(1e-10, 1.0 - 1e-10);
            (p0 / (1.0 - p0)).ln()
        }
        _ => mean.ln(),
    };
    Ok(beta)
}

pub(crate) fn irls(
    design: &DesignMatrix,
    family: Family,
    max_iter: usize,
) -> Result<IrlsOutcome, GlmError> {
    let n = design.x.nrows();
    let p = design.x.ncols();
    if n <= p {
        return Err(GlmError::BadResponse {
            message: format!("{n} rows for {p} parameters"),
        });
    }
    let work = working(design, family)?;
    let mut beta = start(design, &work, family)?;
    let mut mu = means(&design.x, &beta, &work.offset, family);
    let mut dev = total_deviance(family, &work, &mu);
    let mut gnorm = f64::INFINITY;
    let mut stalled = 0usize;
    for iter in 0..max_iter {
        // Assemble the weighted normal equations and the score at the
        // current coefficients. The score determines convergence; its
        // tolerance is relative to the magnitude of the summands so the
        // criterion is invariant under response and covariate rescaling.
        let eta_lin = &design.x * &beta;
        let mut a = DMatrix::<f64>::zeros(p, p);
        let mut b = DVector::<f64>::zeros(p);
        let mut grad = DVector::<f64>::zeros(p);
        let mut scale = 0.0f64;
        for i in 0..n {
            let m = mu[i];
            let g = family.dmu_deta(m);
            let v = family.variance(m);
            let wi = work.w[i] * g * g / v;
            if !(wi.is_finite() && wi >= 0.0) {
                return Err(GlmError::NonConvergence {
                    iterations: iter + 1,
                    message: format!("non-finite working weight at row {i}"),
                });
            }
            let si = work.w[i] * (work.y[i] - m) * g / v;
            let z = eta_lin[i] + (work.y[i] - m) / g;
            let mut row_max = 0.0f64;
            for j in 0..p {
                let xij = design.x[(i, j)];
                row_max = row_max.max(xij.abs());
                grad[j] += si * xij;
                b[j] += wi * xij * z;
                for l in j..p {
                    a[(j, l)] += wi * xij * design.x[(i, l)];
                }
            }
            scale += work.w[i] * (work.y[i].abs() + m) * g / v * row_max;
        }
        for j in 0..p {
            for l in 0..j {
                a[(j, l)] = a[(l, j)];
            }
        }
        let chol = Cholesky::new(a).ok_or(GlmError::SingularDesign)?;
        gnorm = grad.amax();
        if gnorm <= 1e-8 * scale.max(1.0) {
            return Ok(IrlsOutcome {
                beta,
                cov_unscaled: chol.inverse(),
                mu,
                deviance: dev,
            });
        }
        // Step-halving keeps the deviance from increasing (beyond rounding).
        let mut accepted = false;
        let mut candidate = chol.solve(&b);
        for _ in 0..30 {
            let mu_new = means(&design.x, &candidate, &work.offset, family);
            let dev_new = total_deviance(family, &work, &mu_new);
            if dev_new.is_finite() && dev_new <= dev * (1.0 + 1e-12) + 1e-12 {
                let rel_change = (dev - dev_new).abs() / (dev.abs() + 0.1);
                stalled = if rel_change < 1e-13 { stalled + 1 } else { 0 };
                beta = candidate;
                mu = mu_new;
                dev = dev_new;
                accepted = true;
                break;
            }
            candidate = (&candidate + &beta) * 0.5;
        }
        // Deviance saturation with the score still above tolerance means the
        // iteration can make no further progress.
        if !accepted || stalled >= 3 {
            return Err(GlmError::NonConvergence {
                iterations: iter + 1,
                message: format!("score norm {gnorm:.3e} above tolerance with deviance saturated"),
            });
        }
    }
    Err(GlmError::NonConvergence {
        iterations: max_iter,
        message: format!("score norm {gnorm:.3e} above tolerance"),
    })
}
