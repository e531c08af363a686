//! Reference computations that share no code with `liftdesign`.
//!
//! Everything here is brute force: Poisson sums are evaluated exactly over
//! the integers (integer rates only) and converted to `f64` once at the end.
//! The oracles are slow and narrow on purpose; they exist so the series and
//! special-function code in the main crate has something independent to be
//! checked against.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// Exact rational from a decimal-ish `f64` that is a dyadic fraction
/// (0.5, 0.25, 1.0, ...). Panics otherwise so a grid typo can't silently
/// turn into a rounded value.
pub fn dyadic(x: f64) -> BigRational {
    let r = BigRational::from_float(x).expect("finite");
    assert_eq!(r.to_f64().unwrap(), x);
    r
}

/// `lambda^j * n! / j!` for j = 0..=n: the Poisson weights `lambda^j / j!`
/// scaled onto the common denominator `n!`.
fn scaled_weights(lambda: u32, n: usize) -> Vec<BigInt> {
    let lam = BigInt::from(lambda);
    let mut tail = vec![BigInt::one(); n + 1]; // tail[j] = n!/j!
    for j in (0..n).rev() {
        tail[j] = &tail[j + 1] * BigInt::from(j + 1);
    }
    let mut pow = BigInt::one();
    let mut out = Vec::with_capacity(n + 1);
    for t in tail.iter() {
        out.push(&pow * t);
        pow *= &lam;
    }
    out
}

fn factorial(n: usize) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

/// P(X <= k) for X ~ Poisson(lambda), summed exactly term by term.
pub fn poisson_cdf_exact(k: usize, lambda: u32) -> f64 {
    let n = k;
    let w = scaled_weights(lambda, n);
    let num: BigInt = w.iter().sum();
    let ratio = BigRational::new(num, factorial(n));
    ratio.to_f64().unwrap() * (-(lambda as f64)).exp()
}

/// Exhaustive double sum for the lift CMF,
///
/// `sum_{k<=n} sum_{j<=min(n, floor((l + 1/r) r s k))} P(C_T = j) P(C_C = k)`,
///
/// with integer rates and rational `r`, `s`, `l`. The floor is taken on the
/// exact rational, so atoms of the lift distribution are classified exactly.
pub fn lift_cmf_exhaustive(
    lambda_t: u32,
    lambda_c: u32,
    reach: &BigRational,
    scale: &BigRational,
    l: &BigRational,
    n: usize,
) -> f64 {
    let wt = scaled_weights(lambda_t, n);
    let wc = scaled_weights(lambda_c, n);
    // prefix[m] = sum_{j<=m} wt[j]
    let mut prefix = Vec::with_capacity(n + 1);
    let mut acc = BigInt::zero();
    for w in &wt {
        acc += w;
        prefix.push(acc.clone());
    }
    let slope = (l + reach.recip()) * reach * scale;
    let mut total = BigInt::zero();
    for (k, wk) in wc.iter().enumerate() {
        let bound = (&slope * BigRational::from_integer(BigInt::from(k))).floor();
        let bound = bound.to_integer();
        if bound < BigInt::zero() {
            continue;
        }
        let m = bound.to_usize().map_or(n, |m| m.min(n));
        total += wk * &prefix[m];
    }
    let denom = factorial(n) * factorial(n);
    let ratio = BigRational::new(total, denom);
    ratio.to_f64().unwrap() * (-((lambda_t + lambda_c) as f64)).exp()
}

/// The grid the brute-force suite sweeps: rates {1, 2, 5} for each group,
/// reach and scale in {0.5, 1}, lift in {-0.5, 0, 0.5, 1}.
pub fn small_rate_grid() -> Vec<(u32, u32, f64, f64, f64)> {
    let mut out = Vec::new();
    for &lt in &[1u32, 2, 5] {
        for &lc in &[1u32, 2, 5] {
            for &r in &[0.5, 1.0] {
                for &s in &[0.5, 1.0] {
                    for &l in &[-0.5, 0.0, 0.5, 1.0] {
                        out.push((lt, lc, r, s, l));
                    }
                }
            }
        }
    }
    out
}

/// Normal approximation to the one-tailed null critical value of the lift
/// with r = s = 1: `z * sqrt(2 / lambda_c)`.
pub fn normal_null_critical_value(z: f64, lambda_c: f64) -> f64 {
    z * (2.0 / lambda_c).sqrt()
}

/// Tail of the asymptotic Kolmogorov distribution, frozen from an
/// independent implementation (scipy.special.kolmogorov).
pub const KOLMOGOROV_TAIL: &[(f64, f64)] = &[
    (0.5, 0.963_945_243_664_875_1),
    (1.0, 0.269_999_671_677_354_56),
    (1.358, 0.050_026_797_334_446_98),
    (1.628, 0.009_975_522_431_181_053),
];
