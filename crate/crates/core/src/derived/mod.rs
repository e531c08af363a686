//! Exact distribution of the lift statistic.
//!
//! With `R_S = r s C_C` the lift is `L = C_T / R_S - 1/r`, so
//!
//! ```text
//! F_L(l) ~= P(C_T <= (l + 1/r) R_S)
//!         = sum_k P(C_C = k) * P(C_T <= floor((l + 1/r) r s k))
//! ```
//!
//! The outer sum runs over every `k >= 0`. It is truncated to a window around
//! `lambda_c` whose discarded Poisson mass is certified below the policy's
//! tail bound with a Chernoff bound; the inner sum is a Poisson CDF and is
//! evaluated through the regularized incomplete gamma function. The `k = 0`
//! term is kept as written: it contributes `e^{-lambda_c} e^{-lambda_t}` for
//! every `l`, which is the mass where the quotient is undefined.

mod poisson;
pub mod root;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use crate::error::{invalid, Error, Result};
use crate::model::{LiftParams, MIN_CONTROL_CONVERSIONS};

use poisson::log_pmf_unchecked;
pub use poisson::{poisson_cdf, poisson_log_pmf, scaled_support_pmf};

/// Bracket width at which quantile refinement stops.
pub const QUANTILE_XTOL: f64 = 1e-6;

const BRENT_MAX_ITER: usize = 500;
const MAX_BRACKET_DOUBLINGS: u32 = 40;
/// Half-width of the tabulated inner CDF, in standard deviations of `C_T`.
const INNER_TABLE_SDS: f64 = 12.0;
/// Relative nudge applied before flooring `(l + 1/r) r s k`; atoms of `L`
/// sit exactly on these boundaries.
const FLOOR_NUDGE: f64 = 1e-9;

/// How far the outer series is carried.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    /// Upper bound on the discarded `P(C_C = k)` mass.
    pub tail_mass_bound: f64,
    /// Hard cap on the number of outer terms.
    pub max_outer_terms: usize,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            tail_mass_bound: 1e-12,
            max_outer_terms: 10_000_000,
        }
    }
}

impl TruncationPolicy {
    pub fn new(tail_mass_bound: f64, max_outer_terms: usize) -> Result<Self> {
        if !(tail_mass_bound > 0.0 && tail_mass_bound < 1e-6) {
            return Err(invalid(
                "tail_mass_bound",
                format!("must lie in (0, 1e-6), got {tail_mass_bound}"),
            ));
        }
        if max_outer_terms == 0 {
            return Err(invalid("max_outer_terms", "must be positive"));
        }
        Ok(Self {
            tail_mass_bound,
            max_outer_terms,
        })
    }
}

/// One evaluation of the truncated CMF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmfEvaluation {
    pub value: f64,
    /// Bound on the mass left out by truncation.
    pub truncation_error_bound: f64,
    pub outer_terms_used: usize,
    /// `e^{-lambda_c}` when `lambda_c` is below the design minimum: the
    /// probability that the lift is undefined.
    pub undefined_mass: Option<f64>,
}

/// Outer index window `[k_lo, k_lo + weights.len())` with `P(C_C = k)`.
#[derive(Debug, Clone)]
struct OuterWindow {
    k_lo: u64,
    weights: Vec<f64>,
    tail_bound: f64,
}

/// `ln` of the Chernoff bound on `P(K >= k)` (k > lambda) or `P(K <= k)`
/// (k < lambda) for `K ~ Poisson(lambda)`.
fn ln_chernoff(k: u64, lambda: f64) -> f64 {
    if k == 0 {
        return -lambda;
    }
    let k = k as f64;
    -lambda + k * (1.0 + lambda.ln() - k.ln())
}

impl OuterWindow {
    fn new(lambda_c: f64, policy: &TruncationPolicy) -> Result<Self> {
        let ln_half = (0.5 * policy.tail_mass_bound).ln();
        let cap = policy.max_outer_terms as u64;
        let exceeded = || Error::TruncationCapExceeded {
            cap: policy.max_outer_terms,
            tail_mass_bound: policy.tail_mass_bound,
        };
        let mode = lambda_c.floor() as u64;

        let mut k_hi = mode;
        let upper_tail = loop {
            let next = k_hi + 1;
            if next as f64 > lambda_c {
                let ln_b = ln_chernoff(next, lambda_c);
                if ln_b <= ln_half {
                    break ln_b.exp();
                }
            }
            k_hi = next;
            if k_hi - mode >= cap {
                return Err(exceeded());
            }
        };

        let mut k_lo = mode;
        let lower_tail = loop {
            if k_lo == 0 {
                break 0.0;
            }
            let prev = k_lo - 1;
            if (prev as f64) < lambda_c {
                let ln_b = ln_chernoff(prev, lambda_c);
                if ln_b <= ln_half {
                    break ln_b.exp();
                }
            }
            k_lo = prev;
        };

        let terms = k_hi - k_lo + 1;
        if terms > cap {
            return Err(exceeded());
        }
        let weights = (k_lo..=k_hi)
            .map(|k| log_pmf_unchecked(k as f64, lambda_c).exp())
            .collect();
        Ok(Self {
            k_lo,
            weights,
            tail_bound: upper_tail + lower_tail,
        })
    }

    fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .map(move |(i, &w)| ((self.k_lo + i as u64) as f64, w))
    }
}

/// Poisson(lambda_t) CDF, optionally memoised over the integers where it is
/// neither 0 nor 1 to double precision.
#[derive(Debug, Clone)]
struct InnerCdf {
    lambda: f64,
    lo: i64,
    table: Vec<f64>,
    /// Mass neglected by reading 0 below and 1 above the table.
    neglected: f64,
}

impl InnerCdf {
    fn direct(lambda: f64) -> Self {
        Self {
            lambda,
            lo: 0,
            table: Vec::new(),
            neglected: 0.0,
        }
    }

    fn tabulated(lambda: f64) -> Self {
        let spread = INNER_TABLE_SDS * lambda.sqrt() + 10.0;
        let lo = (lambda - spread).floor().max(0.0) as i64;
        let hi = (lambda + spread).ceil() as i64;
        let table = (lo..=hi).map(|m| poisson_cdf(m, lambda)).collect();
        let below = poisson_cdf(lo - 1, lambda);
        // P(C_T > hi) without cancellation
        let above = gamma_lr(hi as f64 + 1.0, lambda);
        Self {
            lambda,
            lo,
            table,
            neglected: below.max(above),
        }
    }

    #[inline]
    fn at(&self, m: i64) -> f64 {
        if m < 0 {
            return 0.0;
        }
        if self.table.is_empty() {
            return poisson_cdf(m, self.lambda);
        }
        let idx = m - self.lo;
        if idx < 0 {
            0.0
        } else if idx as usize >= self.table.len() {
            1.0
        } else {
            self.table[idx as usize]
        }
    }
}

#[inline]
fn nudged_floor(x: f64) -> i64 {
    (x + FLOOR_NUDGE * x.abs()).floor() as i64
}

fn evaluate(params: &LiftParams, window: &OuterWindow, inner: &InnerCdf, l: f64) -> CmfEvaluation {
    let slope = (l + 1.0 / params.reach) * params.reach * params.scale;
    let value: f64 = window
        .iter()
        .map(|(k, w)| w * inner.at(nudged_floor(slope * k)))
        .sum();
    CmfEvaluation {
        value,
        truncation_error_bound: window.tail_bound + inner.neglected,
        outer_terms_used: window.weights.len(),
        undefined_mass: (params.lambda_c < MIN_CONTROL_CONVERSIONS)
            .then(|| (-params.lambda_c).exp()),
    }
}

/// Truncated CMF of the lift, `F_L(l)`, with every inner CDF computed from the
/// incomplete gamma function. For many evaluations under the same parameters
/// build a [`LiftDistribution`] instead.
pub fn lift_cmf(l: f64, params: &LiftParams, policy: &TruncationPolicy) -> Result<CmfEvaluation> {
    let window = OuterWindow::new(params.lambda_c, policy)?;
    Ok(evaluate(
        params,
        &window,
        &InnerCdf::direct(params.lambda_t),
        l,
    ))
}

/// Smallest `l` with `F_L(l) >= p`.
pub fn lift_quantile(p: f64, params: &LiftParams, policy: &TruncationPolicy) -> Result<f64> {
    LiftDistribution::new(*params, *policy)?.quantile(p)
}

/// The lift distribution for fixed parameters, with the outer weights and
/// the inner CDF over the bulk of `C_T` precomputed. Immutable and `Sync`.
#[derive(Debug, Clone)]
pub struct LiftDistribution {
    params: LiftParams,
    window: OuterWindow,
    inner: InnerCdf,
}

impl LiftDistribution {
    pub fn new(params: LiftParams, policy: TruncationPolicy) -> Result<Self> {
        let window = OuterWindow::new(params.lambda_c, &policy)?;
        Ok(Self {
            params,
            window,
            inner: InnerCdf::tabulated(params.lambda_t),
        })
    }

    pub fn params(&self) -> &LiftParams {
        &self.params
    }

    pub fn cmf(&self, l: f64) -> CmfEvaluation {
        evaluate(&self.params, &self.window, &self.inner, l)
    }

    pub fn cdf(&self, l: f64) -> f64 {
        self.cmf(l).value
    }

    /// Largest atom of the (truncated) lift distribution at or below `l`,
    /// ignoring the `k = 0` term, which does not depend on `l`.
    pub fn support_at_or_below(&self, l: f64) -> Option<f64> {
        let r = self.params.reach;
        let rs = self.params.reached_scale();
        let slope = (l + 1.0 / r) * rs;
        self.window
            .iter()
            .filter(|&(k, _)| k > 0.0)
            .filter_map(|(k, _)| {
                let j = nudged_floor(slope * k);
                (j >= 0).then(|| j as f64 / (rs * k) - 1.0 / r)
            })
            .reduce(f64::max)
    }

    /// Smallest `l` with `F_L(l) >= p`, to within [`QUANTILE_XTOL`]: bracket
    /// from `-1/r` upwards, refine the jump with Brent's method, then snap to
    /// the largest atom inside the final bracket. When several atoms share
    /// the bracket (large rates) the result may sit above the exact quantile
    /// by less than the tolerance.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid("p", format!("must lie in (0, 1), got {p}")));
        }
        let r = self.params.reach;
        let lo = -1.0 / r;
        if self.cdf(lo) >= p {
            return Ok(lo);
        }
        let mut hi = 10.0 / r;
        let mut doublings = 0;
        while self.cdf(hi) < p {
            doublings += 1;
            if doublings > MAX_BRACKET_DOUBLINGS {
                return Err(Error::BracketFailure { p, searched_to: hi });
            }
            hi = lo + 2.0 * (hi - lo);
        }

        let bracket = root::brent(|l| self.cdf(l) - p, lo, hi, QUANTILE_XTOL, BRENT_MAX_ITER)?;
        let upper = bracket.above;
        match self.support_at_or_below(upper) {
            Some(atom) if atom > bracket.below && self.cdf(atom) >= p => Ok(atom),
            _ => Ok(upper),
        }
    }
}
