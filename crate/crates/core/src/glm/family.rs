//! Exponential-family internals: links, variance functions, deviances and
//! log-likelihoods.
//!
//! Count families (Poisson, negative binomial) and Tweedie use a log link
//! with the log-exposure offset inside the linear predictor; the binomial
//! family uses a logit link on claim proportions with exposure as trials;
//! gamma severity uses a log link without offset.

use statrs::function::gamma::ln_gamma;

use super::tweedie::tweedie_logpdf;

/// Family with any auxiliary parameter needed to evaluate moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Family {
    Poisson,
    /// Trials come from `exp(offset)`.
    Binomial,
    /// Size parameter θ: Var = μ + μ²/θ.
    NegBin { theta: f64 },
    Gamma,
    /// Power p in (1, 2): Var = φ·μ^p.
    Tweedie { power: f64 },
}

impl Family {
    /// Whether the offset enters the linear predictor (log-link families) or
    /// acts as the trial count (binomial).
    pub fn offset_in_eta(self) -> bool {
        !matches!(self, Family::Binomial)
    }

    pub fn inv_link(self, eta: f64) -> f64 {
        match self {
            Family::Binomial => {
                let p = 1.0 / (1.0 + (-eta).exp());
                p.clamp(1e-12, 1.0 - 1e-12)
            }
            _ => eta.min(700.0).exp().max(1e-300),
        }
    }

    /// Variance function V(μ) on the working scale (proportions for
    /// binomial, means otherwise).
    pub fn variance(self, mu: f64) -> f64 {
        match self {
            Family::Poisson => mu,
            Family::Binomial => mu * (1.0 - mu),
            Family::NegBin { theta } => mu + mu * mu / theta,
            Family::Gamma => mu * mu,
            Family::Tweedie { power } => mu.powf(power),
        }
    }

    /// dμ/dη at μ.
    pub fn dmu_deta(self, mu: f64) -> f64 {
        match self {
            Family::Binomial => mu * (1.0 - mu),
            _ => mu,
        }
    }

    /// Weighted deviance contribution of one observation. For binomial, `y`
    /// and `mu` are proportions and the trial count is folded into `w`.
    pub fn unit_deviance(self, y: f64, mu: f64, w: f64) -> f64 {
        let term = match self {
            Family::Poisson => {
                let ylny = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
                ylny - (y - mu)
            }
            Family::Binomial => {
                let a = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
                let b = if y < 1.0 {
                    (1.0 - y) * ((1.0 - y) / (1.0 - mu)).ln()
                } else {
                    0.0
                };
                a + b
            }
            Family::NegBin { theta } => {
                let ylny = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
                ylny - (y + theta) * ((y + theta) / (mu + theta)).ln()
            }
            Family::Gamma => -((y / mu).ln()) + (y - mu) / mu,
            Family::Tweedie { power } => {
                let p = power;
                let a = if y > 0.0 {
                    y.powf(2.0 - p) / ((1.0 - p) * (2.0 - p))
                } else {
                    0.0
                };
                a - y * mu.powf(1.0 - p) / (1.0 - p) + mu.powf(2.0 - p) / (2.0 - p)
            }
        };
        2.0 * w * term
    }

    /// Weighted log-likelihood contribution of one observation, on the raw
    /// response scale. `trials` only matters for binomial; `dispersion` only
    /// for gamma (reciprocal shape) and Tweedie (φ).
    pub fn unit_loglik(self, y: f64, mu: f64, w: f64, trials: f64, dispersion: f64) -> f64 {
        match self {
            Family::Poisson => w * (y * mu.ln() - mu - ln_gamma(y + 1.0)),
            Family::Binomial => {
                // y is the success count, mu the fitted proportion.
                let t = trials;
                w * (ln_gamma(t + 1.0) - ln_gamma(y + 1.0) - ln_gamma(t - y + 1.0)
                    + y * mu.ln()
                    + (t - y) * (1.0 - mu).ln())
            }
            Family::NegBin { theta } => {
                w * (ln_gamma(y + theta) - ln_gamma(theta) - ln_gamma(y + 1.0)
                    + theta * (theta.ln() - (theta + mu).ln())
                    + y * (mu.ln() - (theta + mu).ln()))
            }
            Family::Gamma => {
                // Row = average of w claims: Y ~ Gamma(shape = ν·w, rate = ν·w/μ)
                // with ν = 1/dispersion.
                let a = w / dispersion;
                a * (a / mu).ln() + (a - 1.0) * y.ln() - a * y / mu - ln_gamma(a)
            }
            Family::Tweedie { power } => w * tweedie_logpdf(y, mu, dispersion, power),
        }
    }
}
