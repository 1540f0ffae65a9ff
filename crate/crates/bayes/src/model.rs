use serde::{Deserialize, Serialize};

use crate::FitError;

/// Priors of the accuracy model:
///
/// ```text
/// y[s,a]  ~ Bernoulli(inv_logit(alpha[a] + theta[s]))
/// alpha[a] ~ Normal(0, prior_alpha_sd)
/// theta[s] ~ Normal(0, sigma_theta)
/// sigma_theta ~ HalfNormal(prior_sigma_scale)
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub prior_alpha_sd: f64,
    pub prior_sigma_scale: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            prior_alpha_sd: 2.0,
            prior_sigma_scale: 2.0,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), FitError> {
        for (name, v) in [
            ("prior_alpha_sd", self.prior_alpha_sd),
            ("prior_sigma_scale", self.prior_sigma_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(FitError::InvalidSpec(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

pub fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Bernoulli log-likelihood of `y` at logit `eta`.
pub fn log_lik(eta: f64, y: bool) -> f64 {
    if y {
        -softplus(-eta)
    } else {
        -softplus(eta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_helpers_are_stable() {
        assert_eq!(inv_logit(0.0), 0.5);
        assert!(inv_logit(800.0) == 1.0 && inv_logit(-800.0) >= 0.0);
        assert!((softplus(1000.0) - 1000.0).abs() < 1e-9);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        for x in [-30.0, -2.5, 0.0, 0.7, 30.0] {
            assert!((log_lik(x, true) - inv_logit(x).ln()).abs() < 1e-9);
            assert!((log_lik(x, false).exp() + inv_logit(x) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spec_rejects_nonpositive_scales() {
        assert!(ModelSpec::default().validate().is_ok());
        let bad = ModelSpec {
            prior_alpha_sd: 0.0,
            ..ModelSpec::default()
        };
        assert!(bad.validate().is_err());
    }
}
