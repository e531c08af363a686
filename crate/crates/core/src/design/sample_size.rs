use serde::{Deserialize, Serialize};

use super::{power_multi_cell, power_single_cell, Backend, Method};
use crate::error::{invalid, Error, Result};
use crate::model::{
    audience_size, MultiCellDesign, SplitSpec, StudyDesign, MIN_CONTROL_CONVERSIONS,
};
use crate::simulate::SimulationConfig;

/// Upper-bracket doublings before the target power is declared unattainable.
pub const MAX_DOUBLINGS: u32 = 60;

/// A single-cell design with the control conversions left open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleCellTarget {
    pub expected_lift: f64,
    pub split: SplitSpec,
    pub alpha: f64,
}

impl SingleCellTarget {
    pub fn design(&self, control_conversions: f64) -> Result<StudyDesign> {
        StudyDesign::new(
            control_conversions,
            self.expected_lift,
            self.split,
            self.alpha,
        )
    }
}

/// A two-cell design with cell A's control conversions left open; cell B's
/// are tied to them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiCellTarget {
    pub expected_lift_a: f64,
    pub min_detectable_difference: f64,
    pub split: SplitSpec,
    pub alpha: f64,
}

impl MultiCellTarget {
    pub fn design(&self, control_conversions: f64) -> Result<MultiCellDesign> {
        MultiCellDesign::new(
            control_conversions,
            self.expected_lift_a,
            self.min_detectable_difference,
            self.split,
            self.alpha,
        )
    }
}

/// Converts control conversions into a total audience.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AudienceSpec {
    pub conversion_rate: f64,
    pub num_groups: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeReport {
    /// Upper end of the final bracket: the smallest probed `E(C_C)` whose
    /// power reached the target.
    pub min_control_conversions: f64,
    pub achieved_power: f64,
    pub target_power: f64,
    pub method: Method,
    /// Bisection steps after the bracket was found.
    pub iterations: u32,
    pub doublings: u32,
    pub bracket: (f64, f64),
    pub audience: Option<f64>,
}

/// Smallest `E(C_C)` with single-cell power at least `target_power`.
///
/// The bracket starts at `[30, 60]` and its upper end doubles until the
/// target is reached; bisection then stops once the bracket is no wider than
/// `max(1, 0.1%)` of its midpoint. A simulated back end reuses its seed on
/// every probe so the objective stays a fixed function of `E(C_C)`.
pub fn min_sample_size_single(
    target: &SingleCellTarget,
    target_power: f64,
    backend: &Backend,
    audience: Option<AudienceSpec>,
) -> Result<SampleSizeReport> {
    check_target(target_power, target.alpha)?;
    let outcome = bisect(target_power, |cc| {
        Ok(power_single_cell(&target.design(cc)?, backend)?.power)
    })?;
    outcome.into_report(target_power, backend.method(), audience)
}

/// Smallest `E(C_{C,A})` (with `E(C_{C,B})` equal) whose two-cell power is at
/// least `target_power`. Same search as [`min_sample_size_single`].
pub fn min_sample_size_multi(
    target: &MultiCellTarget,
    target_power: f64,
    config: &SimulationConfig,
    audience: Option<AudienceSpec>,
) -> Result<SampleSizeReport> {
    check_target(target_power, target.alpha)?;
    let outcome = bisect(target_power, |cc| {
        Ok(power_multi_cell(&target.design(cc)?, config)?.power)
    })?;
    outcome.into_report(target_power, Method::Simulated, audience)
}

fn check_target(target_power: f64, alpha: f64) -> Result<()> {
    if target_power > alpha && target_power < 1.0 {
        Ok(())
    } else {
        Err(invalid(
            "target_power",
            format!("must lie in (alpha, 1) = ({alpha}, 1), got {target_power}"),
        ))
    }
}

struct Outcome {
    low: f64,
    high: f64,
    power_at_high: f64,
    iterations: u32,
    doublings: u32,
}

impl Outcome {
    fn into_report(
        self,
        target_power: f64,
        method: Method,
        audience: Option<AudienceSpec>,
    ) -> Result<SampleSizeReport> {
        let audience = audience
            .map(|a| audience_size(self.high, a.conversion_rate, a.num_groups))
            .transpose()?;
        Ok(SampleSizeReport {
            min_control_conversions: self.high,
            achieved_power: self.power_at_high,
            target_power,
            method,
            iterations: self.iterations,
            doublings: self.doublings,
            bracket: (self.low, self.high),
            audience,
        })
    }
}

fn bisect<F>(target: f64, mut power_at: F) -> Result<Outcome>
where
    F: FnMut(f64) -> Result<f64>,
{
    let floor = MIN_CONTROL_CONVERSIONS;
    let at_floor = power_at(floor)?;
    if at_floor >= target {
        return Ok(Outcome {
            low: floor,
            high: floor,
            power_at_high: at_floor,
            iterations: 0,
            doublings: 0,
        });
    }

    let mut low = floor;
    let mut high = 2.0 * floor;
    let mut power_at_high = power_at(high)?;
    let mut doublings = 0;
    while power_at_high < target {
        if doublings == MAX_DOUBLINGS {
            return Err(Error::UnattainablePower {
                target,
                reached: power_at_high,
                conversions: high,
                doublings,
            });
        }
        low = high;
        high *= 2.0;
        doublings += 1;
        power_at_high = power_at(high)?;
    }

    let mut iterations = 0;
    loop {
        let mid = 0.5 * (low + high);
        if high - low <= (0.001 * mid).max(1.0) {
            break;
        }
        let p = power_at(mid)?;
        if p >= target {
            high = mid;
            power_at_high = p;
        } else {
            low = mid;
        }
        iterations += 1;
    }
    Ok(Outcome {
        low,
        high,
        power_at_high,
        iterations,
        doublings,
    })
}
