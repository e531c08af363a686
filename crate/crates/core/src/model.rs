//! Study algebra: group counts, split and reach, and the conversions between
//! practitioner-level designs and the Poisson rates that drive the lift
//! statistic.
//!
//! A lift study reports test conversions `C_T`, control conversions `C_C` and
//! reached test conversions `R_T`. With `s = N_T / N_C` the control is scaled
//! to `C_S = s C_C`, and the lift is
//!
//! ```text
//! L = (C_T - s C_C) / (s C_C - C_T + R_T)
//! ```
//!
//! i.e. incrementality over the reached conversions of the scaled control.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Smallest expected control conversion count accepted at the design layer.
/// Below this, `P(C_C = 0)` stops being negligible and the lift has real
/// undefined mass.
pub const MIN_CONTROL_CONVERSIONS: f64 = 30.0;

/// The three conversion counts a lift study reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounts {
    test: u64,
    control: u64,
    reached_test: u64,
}

impl GroupCounts {
    pub fn new(test: u64, control: u64, reached_test: u64) -> Result<Self> {
        if reached_test > test {
            return Err(invalid(
                "reached_test",
                format!("reached conversions {reached_test} exceed test conversions {test}"),
            ));
        }
        Ok(Self {
            test,
            control,
            reached_test,
        })
    }

    pub fn test(&self) -> u64 {
        self.test
    }

    pub fn control(&self) -> u64 {
        self.control
    }

    pub fn reached_test(&self) -> u64 {
        self.reached_test
    }
}

/// Test/control scaling and reach as a practitioner specifies them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// `s = N_T / N_C`.
    pub scale: f64,
    /// Fraction of the test group that saw an advert, in (0, 1].
    pub reach: f64,
}

impl SplitSpec {
    pub fn new(scale: f64, reach: f64) -> Result<Self> {
        check_positive("scale", scale)?;
        if !(reach > 0.0 && reach <= 1.0) {
            return Err(invalid("reach", format!("must lie in (0, 1], got {reach}")));
        }
        Ok(Self { scale, reach })
    }

    /// 50:50 split with full reach.
    pub fn even() -> Self {
        Self {
            scale: 1.0,
            reach: 1.0,
        }
    }
}

/// Poisson rates and scaling that fully determine the distribution of `L`.
///
/// Unlike [`SplitSpec`], reach here may exceed 1: the distribution is well
/// defined for any positive `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftParams {
    pub lambda_t: f64,
    pub lambda_c: f64,
    pub reach: f64,
    pub scale: f64,
}

impl LiftParams {
    pub fn new(lambda_t: f64, lambda_c: f64, reach: f64, scale: f64) -> Result<Self> {
        check_positive("lambda_t", lambda_t)?;
        check_positive("lambda_c", lambda_c)?;
        check_positive("reach", reach)?;
        check_positive("scale", scale)?;
        Ok(Self {
            lambda_t,
            lambda_c,
            reach,
            scale,
        })
    }

    /// Rates implied by a design: `lambda_c = E(C_C)` and `lambda_t` from
    /// [`lambda_t_from_design`].
    pub fn from_design(
        control_conversions: f64,
        split: &SplitSpec,
        expected_lift: f64,
    ) -> Result<Self> {
        let lambda_t = lambda_t_from_design(control_conversions, split, expected_lift)?;
        Self::new(lambda_t, control_conversions, split.reach, split.scale)
    }

    /// `r * s`, the spacing of the support of `R_S`.
    pub fn reached_scale(&self) -> f64 {
        self.reach * self.scale
    }

    /// `lambda_t / (r s lambda_c) - 1/r`, the lift at the expected counts.
    pub fn nominal_lift(&self) -> f64 {
        self.lambda_t / (self.reached_scale() * self.lambda_c) - 1.0 / self.reach
    }
}

/// Parameters of a test statistic: one cell (`L`) or a pair of cells
/// (`D = L_B - L_A`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StatisticParams {
    Lift(LiftParams),
    Difference {
        cell_a: LiftParams,
        cell_b: LiftParams,
    },
}

/// Single-cell design as a practitioner states it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyDesign {
    /// `E(C_C)`, which is also `lambda_c`.
    pub expected_control_conversions: f64,
    /// `E(L)` under the alternative, i.e. the minimum detectable lift.
    pub expected_lift: f64,
    pub split: SplitSpec,
    /// One-tailed significance level.
    pub alpha: f64,
}

impl StudyDesign {
    pub fn new(
        expected_control_conversions: f64,
        expected_lift: f64,
        split: SplitSpec,
        alpha: f64,
    ) -> Result<Self> {
        check_control_conversions("expected_control_conversions", expected_control_conversions)?;
        check_lift("expected_lift", expected_lift)?;
        check_alpha(alpha)?;
        Ok(Self {
            expected_control_conversions,
            expected_lift,
            split,
            alpha,
        })
    }

    /// Rates under H0, where `lambda_t = s lambda_c`.
    pub fn null_params(&self) -> Result<LiftParams> {
        LiftParams::from_design(self.expected_control_conversions, &self.split, 0.0)
    }

    /// Rates under H1 at the minimum detectable lift.
    pub fn alt_params(&self) -> Result<LiftParams> {
        LiftParams::from_design(
            self.expected_control_conversions,
            &self.split,
            self.expected_lift,
        )
    }
}

/// Two-cell design. Both cells share `r` and `s`; cell B's control
/// conversions default to cell A's.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiCellDesign {
    pub expected_control_conversions_a: f64,
    pub expected_control_conversions_b: f64,
    /// Baseline `E(L_A)`; under H0 cell B has the same lift.
    pub expected_lift_a: f64,
    /// `D_m`, so that `E(L_B) = E(L_A) + D_m` under H1.
    pub min_detectable_difference: f64,
    pub split: SplitSpec,
    pub alpha: f64,
}

impl MultiCellDesign {
    /// Design with `E(C_{C,B}) = E(C_{C,A})`.
    pub fn new(
        expected_control_conversions: f64,
        expected_lift_a: f64,
        min_detectable_difference: f64,
        split: SplitSpec,
        alpha: f64,
    ) -> Result<Self> {
        Self::with_cell_b(
            expected_control_conversions,
            expected_control_conversions,
            expected_lift_a,
            min_detectable_difference,
            split,
            alpha,
        )
    }

    pub fn with_cell_b(
        expected_control_conversions_a: f64,
        expected_control_conversions_b: f64,
        expected_lift_a: f64,
        min_detectable_difference: f64,
        split: SplitSpec,
        alpha: f64,
    ) -> Result<Self> {
        check_control_conversions(
            "expected_control_conversions_a",
            expected_control_conversions_a,
        )?;
        check_control_conversions(
            "expected_control_conversions_b",
            expected_control_conversions_b,
        )?;
        check_lift("expected_lift_a", expected_lift_a)?;
        if !(min_detectable_difference > 0.0 && min_detectable_difference.is_finite()) {
            return Err(invalid(
                "min_detectable_difference",
                format!("must be positive, got {min_detectable_difference}"),
            ));
        }
        check_alpha(alpha)?;
        Ok(Self {
            expected_control_conversions_a,
            expected_control_conversions_b,
            expected_lift_a,
            min_detectable_difference,
            split,
            alpha,
        })
    }

    /// Both cells at the baseline lift, so `E(D) = 0`.
    pub fn null_params(&self) -> Result<(LiftParams, LiftParams)> {
        Ok((self.cell_a()?, self.cell_b_at(self.expected_lift_a)?))
    }

    /// Cell B lifted by `D_m` over the baseline.
    pub fn alt_params(&self) -> Result<(LiftParams, LiftParams)> {
        Ok((
            self.cell_a()?,
            self.cell_b_at(self.expected_lift_a + self.min_detectable_difference)?,
        ))
    }

    fn cell_a(&self) -> Result<LiftParams> {
        LiftParams::from_design(
            self.expected_control_conversions_a,
            &self.split,
            self.expected_lift_a,
        )
    }

    fn cell_b_at(&self, lift: f64) -> Result<LiftParams> {
        LiftParams::from_design(self.expected_control_conversions_b, &self.split, lift)
    }
}

/// `L = (c_t - s c_c) / (s c_c - c_t + r_t)`.
pub fn lift_from_counts(counts: &GroupCounts, scale: f64) -> Result<f64> {
    let scaled_control = scale * counts.control as f64;
    let denominator = scaled_control - counts.test as f64 + counts.reached_test as f64;
    if denominator == 0.0 {
        return Err(Error::UndefinedLift);
    }
    Ok((counts.test as f64 - scaled_control) / denominator)
}

/// `I = c_t - s c_c`.
pub fn incrementality_from_counts(counts: &GroupCounts, scale: f64) -> f64 {
    counts.test as f64 - scale * counts.control as f64
}

/// `lambda_t = s lambda_c (1 + r E(L))`.
pub fn lambda_t_from_design(lambda_c: f64, split: &SplitSpec, expected_lift: f64) -> Result<f64> {
    check_positive("lambda_c", lambda_c)?;
    let lambda_t = split.scale * lambda_c * (1.0 + split.reach * expected_lift);
    if !(lambda_t > 0.0 && lambda_t.is_finite()) {
        return Err(invalid(
            "expected_lift",
            format!("implies a non-positive test rate ({lambda_t})"),
        ));
    }
    Ok(lambda_t)
}

/// Total audience needed to observe `control_conversions` in each of
/// `num_groups` equally sized groups at the given conversion rate.
pub fn audience_size(
    control_conversions: f64,
    conversion_rate: f64,
    num_groups: u32,
) -> Result<f64> {
    if !(conversion_rate > 0.0 && conversion_rate < 1.0) {
        return Err(invalid(
            "conversion_rate",
            format!("must lie in (0, 1), got {conversion_rate}"),
        ));
    }
    if num_groups == 0 {
        return Err(invalid("num_groups", "must be at least 1"));
    }
    Ok(control_conversions / conversion_rate * f64::from(num_groups))
}

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(invalid(
            name,
            format!("must be positive and finite, got {value}"),
        ))
    }
}

fn check_control_conversions(name: &'static str, value: f64) -> Result<()> {
    if value >= MIN_CONTROL_CONVERSIONS && value.is_finite() {
        Ok(())
    } else {
        Err(invalid(
            name,
            format!("expected control conversions must be at least {MIN_CONTROL_CONVERSIONS}, got {value}"),
        ))
    }
}

fn check_lift(name: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be non-negative, got {value}")))
    }
}

// 0.5 is admitted so the null median can be read off as a critical value.
fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 0.5 {
        Ok(())
    } else {
        Err(invalid(
            "alpha",
            format!("must lie in (0, 0.5], got {alpha}"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(t: u64, c: u64, r: u64) -> GroupCounts {
        GroupCounts::new(t, c, r).unwrap()
    }

    #[test]
    fn lift_examples() {
        assert_eq!(lift_from_counts(&counts(100, 100, 100), 1.0).unwrap(), 0.0);
        assert!((lift_from_counts(&counts(110, 100, 110), 1.0).unwrap() - 0.10).abs() < 1e-15);
        // (4644 - 0.5916 * 7189) / (0.5916 * 7189)
        let scaled = 0.5916 * 7189.0;
        let want = (4644.0 - scaled) / scaled;
        let got = lift_from_counts(&counts(4644, 7189, 4644), 0.5916).unwrap();
        assert!((got - want).abs() < 1e-15);
        assert!((got - 0.0919).abs() < 5e-5);
    }

    #[test]
    fn zero_denominator_is_an_error() {
        // s c_c = 0 and c_t = r_t
        assert_eq!(
            lift_from_counts(&counts(5, 0, 5), 1.0),
            Err(Error::UndefinedLift)
        );
    }

    #[test]
    fn reached_cannot_exceed_test() {
        assert!(GroupCounts::new(10, 10, 11).is_err());
    }

    #[test]
    fn incrementality_examples() {
        assert_eq!(incrementality_from_counts(&counts(100, 100, 100), 1.0), 0.0);
        assert_eq!(
            incrementality_from_counts(&counts(120, 100, 120), 1.0),
            20.0
        );
        assert_eq!(
            incrementality_from_counts(&counts(120, 200, 120), 0.5),
            20.0
        );
    }

    #[test]
    fn lambda_t_examples() {
        let half_reach = SplitSpec::new(1.0, 0.5).unwrap();
        assert_eq!(
            lambda_t_from_design(100.0, &half_reach, 0.0).unwrap(),
            100.0
        );
        let half_scale = SplitSpec::new(0.5, 1.0).unwrap();
        assert!((lambda_t_from_design(100.0, &half_scale, 0.10).unwrap() - 55.0).abs() < 1e-12);
        assert!(
            (lambda_t_from_design(20_000.0, &SplitSpec::even(), 0.05).unwrap() - 21_000.0).abs()
                < 1e-9
        );
    }

    #[test]
    fn lambda_t_rejects_non_positive_rate() {
        assert!(lambda_t_from_design(100.0, &SplitSpec::even(), -1.0).is_err());
        assert!(lambda_t_from_design(0.0, &SplitSpec::even(), 0.1).is_err());
    }

    #[test]
    fn audience_examples() {
        assert!((audience_size(1000.0, 0.05, 2).unwrap() - 40_000.0).abs() < 1e-9);
        let single = audience_size(5107.0, 0.05, 2).unwrap();
        assert!((single - 204_271.0).abs() / 204_271.0 < 1e-3);
        let multi = audience_size(2745.0, 0.05, 4).unwrap();
        assert!((multi - 219_596.0).abs() / 219_596.0 < 1e-3);
        assert!(audience_size(1000.0, 0.0, 2).is_err());
        assert!(audience_size(1000.0, -0.1, 2).is_err());
    }

    #[test]
    fn design_layer_validation() {
        let split = SplitSpec::even();
        assert!(StudyDesign::new(29.9, 0.05, split, 0.05).is_err());
        assert!(StudyDesign::new(30.0, 0.05, split, 0.05).is_ok());
        assert!(StudyDesign::new(100.0, 0.05, split, 0.0).is_err());
        assert!(StudyDesign::new(100.0, 0.05, split, 0.6).is_err());
        assert!(SplitSpec::new(1.0, 1.3).is_err());
        assert!(SplitSpec::new(0.0, 1.0).is_err());
        assert!(MultiCellDesign::new(100.0, 0.05, 0.0, split, 0.05).is_err());
        // distribution layer accepts reach > 1
        assert!(LiftParams::new(3745.0, 3009.0, 1.3121, 0.4812).is_ok());
    }

    #[test]
    fn multi_cell_hypotheses() {
        let d = MultiCellDesign::new(10_000.0, 0.05, 0.05, SplitSpec::even(), 0.05).unwrap();
        let (a0, b0) = d.null_params().unwrap();
        assert_eq!(a0, b0);
        let (a1, b1) = d.alt_params().unwrap();
        assert_eq!(a0, a1);
        assert!((b1.nominal_lift() - 0.10).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn full_reach_even_split_reduces_to_relative_difference(t in 0u64..100_000, c in 1u64..100_000) {
            let l = lift_from_counts(&counts(t, c, t), 1.0).unwrap();
            prop_assert_eq!(l, (t as f64 - c as f64) / c as f64);
        }

        #[test]
        fn incrementality_is_lift_times_denominator(
            t in 0u64..10_000, c in 0u64..10_000, frac in 0.0f64..=1.0, s in 0.1f64..3.0
        ) {
            let r = (t as f64 * frac).floor() as u64;
            let g = counts(t, c, r);
            let denominator = s * c as f64 - t as f64 + r as f64;
            if let Ok(l) = lift_from_counts(&g, s) {
                let i = incrementality_from_counts(&g, s);
                prop_assert!((l * denominator - i).abs() <= 1e-9 * (1.0 + i.abs()));
            }
        }

        #[test]
        fn lambda_t_increasing(
            lc in 1.0f64..1e5, s in 0.1f64..3.0, r in 0.01f64..=1.0, lift in 0.0f64..1.0, bump in 1e-3f64..1.0
        ) {
            let split = SplitSpec::new(s, r).unwrap();
            let base = lambda_t_from_design(lc, &split, lift).unwrap();
            prop_assert!(lambda_t_from_design(lc, &split, lift + bump).unwrap() > base);
            prop_assert!(lambda_t_from_design(lc * (1.0 + bump), &split, lift).unwrap() > base);
            let wider = SplitSpec::new(s * (1.0 + bump), r).unwrap();
            prop_assert!(lambda_t_from_design(lc, &wider, lift).unwrap() > base);
        }

        #[test]
        fn audience_is_linear(cc in 1.0f64..1e6, rate in 0.001f64..0.999, g in 1u32..10, k in 1u32..5) {
            let base = audience_size(cc, rate, g).unwrap();
            let scaled = audience_size(cc * k as f64, rate, g * k).unwrap();
            prop_assert!((scaled - base * (k * k) as f64).abs() <= 1e-9 * scaled);
        }
    }
}
