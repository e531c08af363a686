use serde::{Deserialize, Serialize};

use super::{power_multi_cell, power_single_cell, Backend};
use crate::error::{invalid, Result};
use crate::model::{MultiCellDesign, SplitSpec, StudyDesign};
use crate::simulate::SimulationConfig;

/// Which design input a power curve varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    /// `E(C_C)` itself.
    ControlConversions,
    /// Reach at a fixed audience; control conversions are unaffected.
    Reach,
    /// Control share `f` of a fixed audience. The template's control
    /// conversions are taken as the 50:50 value, so `E(C_C)` scales as
    /// `f / 0.5` and `s = (1 - f) / f`.
    ControlFraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub power: f64,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid("grid", "must not be empty"));
    }
    let up = grid.windows(2).all(|w| w[0] < w[1]);
    let down = grid.windows(2).all(|w| w[0] > w[1]);
    if !(up || down) {
        return Err(invalid("grid", "must be strictly monotone"));
    }
    Ok(())
}

fn design_at(sweep: Sweep, template: &StudyDesign, x: f64) -> Result<StudyDesign> {
    let t = template;
    match sweep {
        Sweep::ControlConversions => StudyDesign::new(x, t.expected_lift, t.split, t.alpha),
        Sweep::Reach => {
            let split = SplitSpec::new(t.split.scale, x)?;
            StudyDesign::new(
                t.expected_control_conversions,
                t.expected_lift,
                split,
                t.alpha,
            )
        }
        Sweep::ControlFraction => {
            if !(x > 0.0 && x < 1.0) {
                return Err(invalid(
                    "grid",
                    format!("control fraction must lie in (0, 1), got {x}"),
                ));
            }
            let split = SplitSpec::new((1.0 - x) / x, t.split.reach)?;
            let cc = t.expected_control_conversions * x / 0.5;
            StudyDesign::new(cc, t.expected_lift, split, t.alpha)
        }
    }
}

/// Single-cell power over `grid`, rows in grid order.
pub fn power_curve(
    sweep: Sweep,
    template: &StudyDesign,
    grid: &[f64],
    backend: &Backend,
) -> Result<Vec<CurvePoint>> {
    check_grid(grid)?;
    grid.iter()
        .map(|&x| {
            let power = power_single_cell(&design_at(sweep, template, x)?, backend)?.power;
            Ok(CurvePoint { x, power })
        })
        .collect()
}

/// Two-cell power against `E(C_{C,A})` (cell B tied equal).
pub fn power_curve_multi(
    template: &MultiCellDesign,
    grid: &[f64],
    config: &SimulationConfig,
) -> Result<Vec<CurvePoint>> {
    check_grid(grid)?;
    grid.iter()
        .map(|&x| {
            let d = MultiCellDesign::new(
                x,
                template.expected_lift_a,
                template.min_detectable_difference,
                template.split,
                template.alpha,
            )?;
            Ok(CurvePoint {
                x,
                power: power_multi_cell(&d, config)?.power,
            })
        })
        .collect()
}
