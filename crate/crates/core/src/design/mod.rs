//! Critical values, power and minimum sample sizes.
//!
//! Single-cell studies can use either back end: the exact CMF from
//! [`crate::derived`] or Monte Carlo samples from [`crate::simulate`].
//! Two-cell studies are simulation only; the distribution of `D` has no
//! practical closed form.
//!
//! Power counts mass strictly above the critical value. The lift is
//! discrete, so an atom sitting exactly on `c` goes to the acceptance
//! region and the realised type-I error never exceeds `alpha`.

mod curve;
mod sample_size;

use serde::{Deserialize, Serialize};

use crate::derived::{LiftDistribution, TruncationPolicy};
use crate::error::{invalid, Result};
use crate::model::{MultiCellDesign, StatisticParams, StudyDesign};
use crate::simulate::{simulate_diff, simulate_lift, SimulationConfig};

pub use curve::{power_curve, power_curve_multi, CurvePoint, Sweep};
pub use sample_size::{
    min_sample_size_multi, min_sample_size_single, AudienceSpec, MultiCellTarget, SampleSizeReport,
    SingleCellTarget, MAX_DOUBLINGS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Derived,
    Simulated,
}

/// How the distribution of the statistic is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backend {
    Derived(TruncationPolicy),
    Simulated(SimulationConfig),
}

impl Backend {
    pub fn derived() -> Self {
        Backend::Derived(TruncationPolicy::default())
    }

    pub fn simulated(config: SimulationConfig) -> Self {
        Backend::Simulated(config)
    }

    pub fn method(&self) -> Method {
        match self {
            Backend::Derived(_) => Method::Derived,
            Backend::Simulated(_) => Method::Simulated,
        }
    }

    fn config(&self) -> Option<SimulationConfig> {
        match self {
            Backend::Derived(_) => None,
            Backend::Simulated(c) => Some(*c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub power: f64,
    pub critical_value: f64,
    pub method: Method,
    pub null_params: StatisticParams,
    pub alt_params: StatisticParams,
    pub config: Option<SimulationConfig>,
}

/// `(1 - alpha)` quantile of the lift under H0.
pub fn critical_value(design: &StudyDesign, backend: &Backend) -> Result<f64> {
    let null = design.null_params()?;
    let p = 1.0 - design.alpha;
    match backend {
        Backend::Derived(policy) => LiftDistribution::new(null, *policy)?.quantile(p),
        Backend::Simulated(config) => simulate_lift(&null, config)?.quantile(p),
    }
}

/// `(1 - alpha)` percentile of simulated `D` under H0.
pub fn critical_value_multi(design: &MultiCellDesign, config: &SimulationConfig) -> Result<f64> {
    let (a, b) = design.null_params()?;
    simulate_diff(&a, &b, config)?.quantile(1.0 - design.alpha)
}

/// `P(L > c | E(L) = L_m)` with `c` the null critical value.
pub fn power_single_cell(design: &StudyDesign, backend: &Backend) -> Result<PowerReport> {
    if design.expected_lift <= 0.0 {
        return Err(invalid(
            "expected_lift",
            "power needs a positive minimum detectable lift",
        ));
    }
    let null = design.null_params()?;
    let alt = design.alt_params()?;
    let p = 1.0 - design.alpha;
    let (critical_value, power) = match backend {
        Backend::Derived(policy) => {
            let c = LiftDistribution::new(null, *policy)?.quantile(p)?;
            let under_alt = LiftDistribution::new(alt, *policy)?.cdf(c);
            (c, (1.0 - under_alt).clamp(0.0, 1.0))
        }
        Backend::Simulated(config) => {
            let c = simulate_lift(&null, config)?.quantile(p)?;
            (c, simulate_lift(&alt, config)?.fraction_above(c))
        }
    };
    Ok(PowerReport {
        power,
        critical_value,
        method: backend.method(),
        null_params: StatisticParams::Lift(null),
        alt_params: StatisticParams::Lift(alt),
        config: backend.config(),
    })
}

/// `P(D > c | E(D) = D_m)` by simulation.
pub fn power_multi_cell(
    design: &MultiCellDesign,
    config: &SimulationConfig,
) -> Result<PowerReport> {
    let (null_a, null_b) = design.null_params()?;
    let (alt_a, alt_b) = design.alt_params()?;
    let c = simulate_diff(&null_a, &null_b, config)?.quantile(1.0 - design.alpha)?;
    let power = simulate_diff(&alt_a, &alt_b, config)?.fraction_above(c);
    Ok(PowerReport {
        power,
        critical_value: c,
        method: Method::Simulated,
        null_params: StatisticParams::Difference {
            cell_a: null_a,
            cell_b: null_b,
        },
        alt_params: StatisticParams::Difference {
            cell_a: alt_a,
            cell_b: alt_b,
        },
        config: Some(*config),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SplitSpec;

    fn design(cc: f64, lift: f64) -> StudyDesign {
        StudyDesign::new(cc, lift, SplitSpec::even(), 0.05).unwrap()
    }

    fn sim(n: usize) -> Backend {
        Backend::simulated(SimulationConfig::new(n, 11).unwrap())
    }

    #[test]
    fn critical_value_normal_approximation() {
        let c = critical_value(&design(20_000.0, 0.05), &Backend::derived()).unwrap();
        let approx = 1.645 * (2.0f64 / 20_000.0).sqrt();
        assert!((c - approx).abs() / approx < 0.05);
        assert!(c > 0.0);
    }

    #[test]
    fn critical_value_at_half_alpha_is_the_median() {
        let d = StudyDesign::new(20_000.0, 0.05, SplitSpec::even(), 0.5).unwrap();
        assert!(critical_value(&d, &Backend::derived()).unwrap().abs() < 0.005);
    }

    #[test]
    fn back_ends_agree_on_critical_value() {
        let d = design(20_000.0, 0.05);
        let derived = critical_value(&d, &Backend::derived()).unwrap();
        let simulated = critical_value(&d, &sim(1_000_000)).unwrap();
        assert!(
            (derived - simulated).abs() < 0.001,
            "{derived} vs {simulated}"
        );
    }

    #[test]
    fn saturated_single_cell_power() {
        let r = power_single_cell(&design(20_000.0, 0.05), &Backend::derived()).unwrap();
        assert!(r.power > 0.999);
        assert_eq!(r.method, Method::Derived);
        assert!(r.config.is_none());
    }

    #[test]
    fn table_rows_give_eighty_percent() {
        for &(cc, lift) in &[(5107.0, 0.05), (1352.0, 0.10)] {
            let r = power_single_cell(&design(cc, lift), &Backend::derived()).unwrap();
            assert!((r.power - 0.80).abs() < 0.02, "{cc} {lift}: {}", r.power);
        }
    }

    #[test]
    fn zero_lift_is_rejected() {
        assert!(power_single_cell(&design(1000.0, 0.0), &Backend::derived()).is_err());
    }

    #[test]
    fn vanishing_lift_gives_alpha() {
        let d = design(5000.0, 1e-6);
        let derived = power_single_cell(&d, &Backend::derived()).unwrap().power;
        let simulated = power_single_cell(&d, &sim(200_000)).unwrap().power;
        assert!((derived - 0.05).abs() < 0.01, "{derived}");
        assert!((simulated - 0.05).abs() < 0.01, "{simulated}");
    }

    #[test]
    fn multi_cell_power_point() {
        let d = MultiCellDesign::new(10_000.0, 0.05, 0.05, SplitSpec::even(), 0.05).unwrap();
        let r = power_multi_cell(&d, &SimulationConfig::default()).unwrap();
        assert!((r.power - 0.78).abs() < 0.03, "{}", r.power);
        assert!(matches!(r.null_params, StatisticParams::Difference { .. }));
    }

    #[test]
    fn multi_cell_vanishing_difference_gives_alpha() {
        let d = MultiCellDesign::new(10_000.0, 0.05, 1e-6, SplitSpec::even(), 0.05).unwrap();
        let r = power_multi_cell(&d, &SimulationConfig::new(200_000, 3).unwrap()).unwrap();
        assert!((r.power - 0.05).abs() < 0.01);
    }
}
