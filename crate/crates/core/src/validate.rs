//! Kolmogorov–Smirnov checks of simulated lift samples against the exact CMF.
//!
//! The p-value uses the asymptotic Kolmogorov distribution, which assumes a
//! continuous reference. The lift is discrete, so the test is slightly
//! conservative; with rates in the hundreds the atoms are small enough that
//! the rejection rate stays close to nominal.

use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::derived::{LiftDistribution, TruncationPolicy};
use crate::error::{invalid, Error, Result};
use crate::model::LiftParams;
use crate::simulate::{empirical_quantile, simulate_lift, SampleSet, SimulationConfig};

/// Smallest sample count for which the asymptotic p-value is used.
pub const MIN_KS_SAMPLES: usize = 35;

/// Kolmogorov–Smirnov distance between the empirical CMF of `values` and
/// `cdf`: the largest of `|F_n(x) - F(x)|` and `|F_n(x-) - F(x)|` over the
/// sample points.
pub fn ks_statistic_with<F>(values: &[f64], cdf: F) -> f64
where
    F: Fn(f64) -> f64,
{
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i];
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == x {
            j += 1;
        }
        let f = cdf(x);
        d = d
            .max((j as f64 / n - f).abs())
            .max((i as f64 / n - f).abs());
        i = j;
    }
    d
}

/// K-S statistic of `samples` against the exact lift CMF under `params`.
pub fn ks_statistic(
    samples: &SampleSet,
    params: &LiftParams,
    policy: &TruncationPolicy,
) -> Result<f64> {
    let dist = LiftDistribution::new(*params, *policy)?;
    Ok(ks_statistic_with(&samples.values, |x| dist.cdf(x)))
}

/// Asymptotic p-value `Q(sqrt(n) D)` of the Kolmogorov distribution.
///
/// `Q(t) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 t^2)`; below `t = 1.18` that
/// series converges slowly and the Jacobi-transformed form
/// `1 - sqrt(2 pi)/t sum_{j>=1} exp(-(2j-1)^2 pi^2 / (8 t^2))` is used.
/// Either sum stops once a term drops below 1e-10. A non-positive statistic
/// gives 1.
pub fn ks_p_value(statistic: f64, n: usize) -> Result<f64> {
    if n < MIN_KS_SAMPLES {
        return Err(invalid(
            "n",
            format!("asymptotic p-value needs at least {MIN_KS_SAMPLES} samples, got {n}"),
        ));
    }
    let t = (n as f64).sqrt() * statistic;
    if t <= 0.0 {
        return Ok(1.0);
    }
    let q = if t < 1.18 {
        let c = std::f64::consts::PI.powi(2) / (8.0 * t * t);
        let mut sum = 0.0;
        for j in 1.. {
            let odd = (2 * j - 1) as f64;
            let term = (-odd * odd * c).exp();
            sum += term;
            if term < 1e-10 {
                break;
            }
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / t * sum
    } else {
        let mut sum = 0.0;
        for j in 1.. {
            let jf = j as f64;
            let term = (-2.0 * jf * jf * t * t).exp();
            sum += if j % 2 == 1 { term } else { -term };
            if term < 1e-10 {
                break;
            }
        }
        2.0 * sum
    };
    Ok(q.clamp(0.0, 1.0))
}

/// Uniform ranges the campaign draws parameters from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRanges {
    pub lambda_t: (f64, f64),
    pub lambda_c: (f64, f64),
    pub reach: (f64, f64),
    pub scale: (f64, f64),
}

impl Default for ParamRanges {
    fn default() -> Self {
        Self {
            lambda_t: (300.0, 8_000.0),
            lambda_c: (300.0, 8_000.0),
            reach: (0.3, 6.0),
            scale: (0.3, 1.2),
        }
    }
}

impl ParamRanges {
    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("lambda_t", self.lambda_t),
            ("lambda_c", self.lambda_c),
            ("reach", self.reach),
            ("scale", self.scale),
        ] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(invalid(name, format!("bad range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> Result<LiftParams> {
        let mut uniform = |(lo, hi): (f64, f64)| lo + (hi - lo) * rng.random::<f64>();
        let lambda_t = uniform(self.lambda_t);
        let lambda_c = uniform(self.lambda_c);
        let reach = uniform(self.reach);
        let scale = uniform(self.scale);
        LiftParams::new(lambda_t, lambda_c, reach, scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub num_runs: usize,
    pub samples_per_run: usize,
    pub ranges: ParamRanges,
    pub seed: u64,
    pub alpha: f64,
    pub policy: TruncationPolicy,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            num_runs: 500,
            samples_per_run: 1_000,
            ranges: ParamRanges::default(),
            seed: 0,
            alpha: 0.05,
            policy: TruncationPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationRun {
    pub params: LiftParams,
    pub ks_statistic: f64,
    pub p_value: f64,
    pub rejected: bool,
    pub num_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub params: LiftParams,
    pub p: f64,
    pub num_samples: usize,
    pub derived_quantile: f64,
    pub simulated_quantile: f64,
    pub derived_seconds: f64,
    pub simulated_seconds: f64,
    /// `derived_seconds / simulated_seconds`.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub runs: Vec<ValidationRun>,
    pub num_rejections: usize,
    pub expected_rejections: f64,
    pub alpha: f64,
    pub timing: Option<TimingReport>,
}

impl CampaignReport {
    pub fn summary(&self) -> String {
        format!(
            "{} of {} runs rejected at alpha = {} (expected {:.1})",
            self.num_rejections,
            self.runs.len(),
            self.alpha,
            self.expected_rejections
        )
    }
}

fn run_once(config: &CampaignConfig, index: usize) -> Result<ValidationRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let params = config.ranges.draw(&mut rng)?;
    let sim = SimulationConfig::new(config.samples_per_run, rng.next_u64())?;
    let samples = simulate_lift(&params, &sim)?;
    let ks = ks_statistic(&samples, &params, &config.policy)?;
    let p_value = ks_p_value(ks, samples.len())?;
    Ok(ValidationRun {
        params,
        ks_statistic: ks,
        p_value,
        rejected: p_value < config.alpha,
        num_samples: samples.len(),
    })
}

/// Draws `num_runs` random parameter sets, simulates each and tests the
/// samples against the exact CMF. Run `i` uses ChaCha stream `i` of `seed`
/// for both its parameters and its simulation seed.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignReport> {
    if config.num_runs < 20 {
        return Err(invalid(
            "num_runs",
            format!("must be at least 20, got {}", config.num_runs),
        ));
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(invalid(
            "alpha",
            format!("must lie in (0, 1), got {}", config.alpha),
        ));
    }
    config.ranges.validate()?;
    let runs: Vec<ValidationRun> = (0..config.num_runs)
        .into_par_iter()
        .map(|i| {
            run_once(config, i).map_err(|e| Error::CampaignRun {
                run: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let num_rejections = runs.iter().filter(|r| r.rejected).count();
    Ok(CampaignReport {
        num_rejections,
        expected_rejections: config.alpha * runs.len() as f64,
        alpha: config.alpha,
        runs,
        timing: None,
    })
}

/// Wall-clock comparison of the two ways to get the `p` quantile: Brent
/// root finding on the exact CMF versus simulating `num_samples` lifts and
/// taking the nearest-rank quantile.
pub fn timing_comparison(
    params: &LiftParams,
    num_samples: usize,
    p: f64,
    seed: u64,
    policy: &TruncationPolicy,
) -> Result<TimingReport> {
    let start = Instant::now();
    let derived_quantile = LiftDistribution::new(*params, *policy)?.quantile(p)?;
    let derived_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let samples = simulate_lift(params, &SimulationConfig::new(num_samples, seed)?)?;
    let simulated_quantile = empirical_quantile(&samples.values, p)?;
    let simulated_seconds = start.elapsed().as_secs_f64();

    Ok(TimingReport {
        params: *params,
        p,
        num_samples,
        derived_quantile,
        simulated_quantile,
        derived_seconds,
        simulated_seconds,
        speedup: derived_seconds / simulated_seconds.max(f64::MIN_POSITIVE),
    })
}
