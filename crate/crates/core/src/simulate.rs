//! Seeded Monte Carlo samples of the lift and of the two-cell difference.
//!
//! One lift sample: draw `c_c ~ Poisson(lambda_c)` and `c_t ~ Poisson(lambda_t)`,
//! scale to `C_S = s c_c` and `R_S = r s c_c`, and emit
//! `L = (c_t - C_S) / R_S`. Draws with `c_c = 0` are redrawn and counted.
//!
//! Samples are produced in fixed-size batches. Batch `i` owns ChaCha stream
//! `2i` (cell A, or the only cell) and `2i + 1` (cell B) of the generator
//! seeded with `config.seed`, and batches are concatenated in index order, so
//! output depends only on `(params, config)` and never on the thread count.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{LiftParams, StatisticParams, MIN_CONTROL_CONVERSIONS};

const BATCH: usize = 16_384;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub num_samples: usize,
    pub seed: u64,
    /// Redraw on `c_c = 0`; when false such a draw is an error.
    pub resample_on_zero: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            num_samples: 1_000_000,
            seed: 0,
            resample_on_zero: true,
        }
    }
}

impl SimulationConfig {
    pub const MIN_SAMPLES: usize = 1_000;

    pub fn new(num_samples: usize, seed: u64) -> Result<Self> {
        let config = Self {
            num_samples,
            seed,
            resample_on_zero: true,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_samples < Self::MIN_SAMPLES {
            return Err(invalid(
                "num_samples",
                format!(
                    "must be at least {}, got {}",
                    Self::MIN_SAMPLES,
                    self.num_samples
                ),
            ));
        }
        Ok(())
    }
}

/// Simulated values of `L` or `D` together with what produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub values: Vec<f64>,
    pub config: SimulationConfig,
    pub params: StatisticParams,
    pub num_discarded: u64,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Discards are expected to be vanishingly rare once every control rate is
    /// at least [`MIN_CONTROL_CONVERSIONS`]; a run that saw more is suspect.
    pub fn is_flagged(&self) -> bool {
        let rate = self.num_discarded as f64 / self.values.len().max(1) as f64;
        let min_rate = match self.params {
            StatisticParams::Lift(p) => p.lambda_c,
            StatisticParams::Difference { cell_a, cell_b } => cell_a.lambda_c.min(cell_b.lambda_c),
        };
        min_rate < MIN_CONTROL_CONVERSIONS || rate >= 1e-6
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        empirical_quantile(&self.values, p)
    }

    /// Fraction of samples strictly greater than `threshold`.
    pub fn fraction_above(&self, threshold: f64) -> f64 {
        let above = self.values.iter().filter(|&&v| v > threshold).count();
        above as f64 / self.values.len() as f64
    }

    /// Single-column CSV, header `lift` or `diff`, LF line endings.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let header = match self.params {
            StatisticParams::Lift(_) => "lift",
            StatisticParams::Difference { .. } => "diff",
        };
        let io = |e: csv::Error| Error::Io(e.to_string());
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record([header]).map_err(io)?;
        for v in &self.values {
            w.write_record([v.to_string()]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

/// Nearest-rank quantile: the order statistic at rank `ceil(p n)`.
pub fn empirical_quantile(values: &[f64], p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid("p", format!("must lie in (0, 1), got {p}")));
    }
    if values.is_empty() {
        return Err(invalid("values", "no samples"));
    }
    let n = values.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    let mut scratch = values.to_vec();
    let (_, v, _) = scratch.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*v)
}

/// Per-cell sampler holding the two Poisson distributions.
struct LiftSampler {
    test: Poisson<f64>,
    control: Poisson<f64>,
    reach: f64,
    scale: f64,
    resample_on_zero: bool,
}

impl LiftSampler {
    fn new(params: &LiftParams, resample_on_zero: bool) -> Result<Self> {
        if params.lambda_c < 1.0 {
            return Err(Error::DegenerateRate(params.lambda_c));
        }
        let poisson =
            |name, lambda| Poisson::new(lambda).map_err(|e| invalid(name, format!("{e}")));
        Ok(Self {
            test: poisson("lambda_t", params.lambda_t)?,
            control: poisson("lambda_c", params.lambda_c)?,
            reach: params.reach,
            scale: params.scale,
            resample_on_zero,
        })
    }

    /// One lift value and the number of zero-control redraws it took.
    #[inline]
    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<(f64, u64)> {
        let mut discarded = 0;
        loop {
            let c_c = self.control.sample(rng);
            let c_t = self.test.sample(rng);
            if c_c > 0.0 {
                let scaled = self.scale * c_c;
                return Ok(((c_t - scaled) / (self.reach * scaled), discarded));
            }
            if !self.resample_on_zero {
                return Err(Error::ZeroDenominatorDraw);
            }
            discarded += 1;
        }
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Runs `fill` over fixed batches in parallel and stitches them in order.
fn batched<F>(config: &SimulationConfig, fill: F) -> Result<(Vec<f64>, u64)>
where
    F: Fn(u64, &mut Vec<f64>, usize) -> Result<u64> + Sync,
{
    config.validate()?;
    let n = config.num_samples;
    let batches = n.div_ceil(BATCH);
    let parts: Vec<(Vec<f64>, u64)> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let len = BATCH.min(n - b * BATCH);
            let mut out = Vec::with_capacity(len);
            let discarded = fill(b as u64, &mut out, len)?;
            Ok((out, discarded))
        })
        .collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(n);
    let mut discarded = 0;
    for (part, d) in parts {
        values.extend(part);
        discarded += d;
    }
    Ok((values, discarded))
}

/// Samples of `L` under `params`.
pub fn simulate_lift(params: &LiftParams, config: &SimulationConfig) -> Result<SampleSet> {
    let sampler = LiftSampler::new(params, config.resample_on_zero)?;
    let (values, num_discarded) = batched(config, |b, out, len| {
        let mut rng = stream(config.seed, 2 * b);
        let mut discarded = 0;
        for _ in 0..len {
            let (l, d) = sampler.draw(&mut rng)?;
            out.push(l);
            discarded += d;
        }
        Ok(discarded)
    })?;
    Ok(SampleSet {
        values,
        config: *config,
        params: StatisticParams::Lift(*params),
        num_discarded,
    })
}

/// Samples of `D = L_B - L_A`, the cells drawn independently.
pub fn simulate_diff(
    cell_a: &LiftParams,
    cell_b: &LiftParams,
    config: &SimulationConfig,
) -> Result<SampleSet> {
    let sampler_a = LiftSampler::new(cell_a, config.resample_on_zero)?;
    let sampler_b = LiftSampler::new(cell_b, config.resample_on_zero)?;
    let (values, num_discarded) = batched(config, |b, out, len| {
        let mut rng_a = stream(config.seed, 2 * b);
        let mut rng_b = stream(config.seed, 2 * b + 1);
        let mut discarded = 0;
        for _ in 0..len {
            let (la, da) = sampler_a.draw(&mut rng_a)?;
            let (lb, db) = sampler_b.draw(&mut rng_b)?;
            out.push(lb - la);
            discarded += da + db;
        }
        Ok(discarded)
    })?;
    Ok(SampleSet {
        values,
        config: *config,
        params: StatisticParams::Difference {
            cell_a: *cell_a,
            cell_b: *cell_b,
        },
        num_discarded,
    })
}
