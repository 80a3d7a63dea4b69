//! Negative-binomial size parameter by profile likelihood.

use super::family::Family;
use super::irls::{irls, IrlsOutcome};
use super::{DesignMatrix, GlmError};

const LN_THETA_LO: f64 = -4.605170185988091; // ln 0.01
const LN_THETA_HI: f64 = 11.512925464970229; // ln 1e5

pub(crate) struct NegBinFit {
    pub theta: f64,
    pub outcome: IrlsOutcome,
    pub log_likelihood: f64,
    /// Set when the profile maximum sits at the upper search bound, i.e. the
    /// data show no overdispersion and the fit degenerates toward Poisson.
    pub boundary: bool,
}

fn profile(design: &DesignMatrix, ln_theta: f64) -> Result<(IrlsOutcome, f64), GlmError> {
    let theta = ln_theta.exp();
    let family = Family::NegBin { theta };
    let outcome = irls(design, family, 100)?;
    let mut ll = 0.0;
    for i in 0..design.response.len() {
        ll += family.unit_loglik(
            design.response[i],
            outcome.mu[i],
            design.weights[i],
            1.0,
            1.0,
        );
    }
    Ok((outcome, ll))
}

/// Fits θ by a coarse grid over ln θ followed by golden-section refinement;
/// coefficients come from the IRLS fit at the profiled optimum.
pub(crate) fn fit_negbin(design: &DesignMatrix) -> Result<NegBinFit, GlmError> {
    // Coarse bracket: 25 points over ln θ ∈ [ln 0.01, ln 1e5].
    let grid_n = 25;
    let mut best_i = 0;
    let mut best_ll = f64::NEG_INFINITY;
    let step = (LN_THETA_HI - LN_THETA_LO) / (grid_n - 1) as f64;
    let mut lls = Vec::with_capacity(grid_n);
    for i in 0..grid_n {
        let lt = LN_THETA_LO + step * i as f64;
        let ll = match profile(design, lt) {
            Ok((_, ll)) => ll,
            Err(_) => f64::NEG_INFINITY,
        };
        if ll > best_ll {
            best_ll = ll;
            best_i = i;
        }
        lls.push(ll);
    }
    if best_ll == f64::NEG_INFINITY {
        return Err(GlmError::NonConvergence {
            iterations: 0,
            message: "negative-binomial profile likelihood failed on the whole grid".to_string(),
        });
    }
    let boundary = best_i == grid_n - 1;
    let mut lo = LN_THETA_LO + step * best_i.saturating_sub(1) as f64;
    let mut hi = (LN_THETA_LO + step * (best_i + 1) as f64).min(LN_THETA_HI);
    // Golden-section search for the profile maximum.
    let inv_phi = 0.618_033_988_749_894_9_f64;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = profile(design, x1).map(|(_, ll)| ll).unwrap_or(f64::NEG_INFINITY);
    let mut f2 = profile(design, x2).map(|(_, ll)| ll).unwrap_or(f64::NEG_INFINITY);
    for _ in 0..60 {
        if hi - lo < 1e-10 {
            break;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = profile(design, x1).map(|(_, ll)| ll).unwrap_or(f64::NEG_INFINITY);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = profile(design, x2).map(|(_, ll)| ll).unwrap_or(f64::NEG_INFINITY);
        }
    }
    let ln_theta = 0.5 * (lo + hi);
    let (outcome, log_likelihood) = profile(design, ln_theta)?;
    Ok(NegBinFit {
        theta: ln_theta.exp(),
        outcome,
        log_likelihood,
        boundary,
    })
}
