use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{invalid, Error, Result};
use crate::model::LiftParams;

/// `ln P(X = k)` for `X ~ Poisson(lambda)`.
pub fn poisson_log_pmf(k: i64, lambda: f64) -> Result<f64> {
    if k < 0 {
        return Err(Error::NegativeCount(k));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", format!("must be positive, got {lambda}")));
    }
    Ok(log_pmf_unchecked(k as f64, lambda))
}

#[inline]
pub(crate) fn log_pmf_unchecked(k: f64, lambda: f64) -> f64 {
    k * lambda.ln() - lambda - ln_gamma(k + 1.0)
}

/// `P(X <= k)` through the regularized upper incomplete gamma function,
/// `Q(k + 1, lambda)`. Negative `k` gives 0.
#[inline]
pub fn poisson_cdf(k: i64, lambda: f64) -> f64 {
    if k < 0 {
        0.0
    } else {
        gamma_ur(k as f64 + 1.0, lambda)
    }
}

/// Mass of `R_S = r s C_C` at `x`: the Poisson(lambda_c) mass at `x / (r s)`
/// when that is within 1e-9 of a non-negative integer, otherwise zero.
pub fn scaled_support_pmf(x: f64, params: &LiftParams) -> f64 {
    if x < 0.0 || !x.is_finite() {
        return 0.0;
    }
    let k = x / params.reached_scale();
    let nearest = k.round();
    if (k - nearest).abs() > 1e-9 * nearest.max(1.0) {
        return 0.0;
    }
    log_pmf_unchecked(nearest, params.lambda_c).exp()
}
