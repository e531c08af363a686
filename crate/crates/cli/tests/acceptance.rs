//! Acceptance gate: one `[PASS]`/`[FAIL]` line per criterion, non-zero exit
//! if any fails. Pass criterion ids (`AC3 AC7`) to run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use liftdesign::derived::{lift_cmf, LiftDistribution, TruncationPolicy};
use liftdesign::design::{
    critical_value, min_sample_size_multi, min_sample_size_single, power_curve, power_multi_cell,
    power_single_cell, Backend, MultiCellTarget, SingleCellTarget, Sweep,
};
use liftdesign::model::{LiftParams, MultiCellDesign, SplitSpec, StudyDesign};
use liftdesign::simulate::{simulate_diff, simulate_lift, SimulationConfig};
use liftdesign::validate::{run_campaign, CampaignConfig};
use liftdesign_oracles::{
    dyadic, lift_cmf_exhaustive, normal_null_critical_value, small_rate_grid,
};

type Verdict = Result<String, String>;
type Property = fn() -> Result<(), String>;
type Check = (&'static str, &'static str, fn() -> Verdict);

const EFFECTS: [f64; 4] = [0.10, 0.05, 0.02, 0.01];
const REFERENCE_SINGLE_CC: [f64; 4] = [1_352.0, 5_107.0, 31_571.0, 124_459.0];
const REFERENCE_MULTI_CC: [f64; 4] = [2_745.0, 10_754.0, 67_453.0, 264_745.0];
const ALPHA: f64 = 0.05;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(actual: f64, expected: f64, rel: f64) -> bool {
    (actual - expected).abs() <= rel * expected
}

fn in_time(started: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let took = started.elapsed();
    ensure(took < limit, || {
        format!("{what} took {took:.1?}, limit {limit:?}")
    })
}

fn even(cc: f64, lift: f64) -> StudyDesign {
    StudyDesign::new(cc, lift, SplitSpec::even(), ALPHA).unwrap()
}

fn single_cell_table() -> Verdict {
    let started = Instant::now();
    let mut got = Vec::new();
    for (&lift, &expected) in EFFECTS.iter().zip(&REFERENCE_SINGLE_CC) {
        let out = Command::new(env!("CARGO_BIN_EXE_liftdesign"))
            .args([
                "sample-size",
                "--lift",
                &lift.to_string(),
                "--power",
                "0.8",
                "--method",
                "derived",
            ])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || {
            String::from_utf8_lossy(&out.stderr).into_owned()
        })?;
        let v: serde_json::Value =
            serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
        let cc = v["result"]["control_conversions"]
            .as_u64()
            .ok_or("missing control_conversions")? as f64;
        ensure(within(cc, expected, 0.03), || {
            format!("lift {lift}: {cc} vs {expected} (+-3%)")
        })?;
        got.push(cc);
    }
    in_time(started, Duration::from_secs(60), "four derived searches")?;
    Ok(format!("C_C = {got:?} in {:.1?}", started.elapsed()))
}

fn multi_cell_table() -> Verdict {
    let started = Instant::now();
    let config = SimulationConfig::default();
    let mut got = Vec::new();
    for (&diff, &expected) in EFFECTS.iter().zip(&REFERENCE_MULTI_CC) {
        let target = MultiCellTarget {
            expected_lift_a: 0.05,
            min_detectable_difference: diff,
            split: SplitSpec::even(),
            alpha: ALPHA,
        };
        let r = min_sample_size_multi(&target, 0.8, &config, None).map_err(|e| e.to_string())?;
        let cc = r.min_control_conversions.ceil();
        ensure(within(cc, expected, 0.05), || {
            format!("D_m {diff}: {cc} vs {expected} (+-5%)")
        })?;
        got.push(cc);
    }
    in_time(
        started,
        Duration::from_secs(15 * 60),
        "four simulated searches",
    )?;
    Ok(format!(
        "C_C,A = {got:?} at 1e6 samples per probe in {:.1?}",
        started.elapsed()
    ))
}

fn multi_cell_power_point() -> Verdict {
    let d = MultiCellDesign::new(10_000.0, 0.05, 0.05, SplitSpec::even(), ALPHA).unwrap();
    let power = power_multi_cell(&d, &SimulationConfig::default())
        .map_err(|e| e.to_string())?
        .power;
    ensure((power - 0.78).abs() <= 0.03, || {
        format!("power {power}, want 0.78 +- 0.03")
    })?;
    Ok(format!("power = {power:.4}"))
}

fn single_cell_saturation() -> Verdict {
    let power = power_single_cell(&even(20_000.0, 0.05), &Backend::derived())
        .map_err(|e| e.to_string())?
        .power;
    ensure(power > 0.999, || format!("power {power}, want > 0.999"))?;
    Ok(format!("power = {power:.6}"))
}

fn ks_campaign() -> Verdict {
    let started = Instant::now();
    let report = run_campaign(&CampaignConfig::default()).map_err(|e| e.to_string())?;
    let k = report.num_rejections;
    ensure(report.runs.len() == 500, || {
        format!("{} runs", report.runs.len())
    })?;
    ensure((12..=39).contains(&k), || {
        format!("{k} rejections outside [12, 39]")
    })?;
    in_time(started, Duration::from_secs(600), "campaign")?;
    Ok(format!("{} in {:.1?}", report.summary(), started.elapsed()))
}

fn brute_force_grid() -> Verdict {
    let started = Instant::now();
    let policy = TruncationPolicy::default();
    let grid = small_rate_grid();
    let mut worst: f64 = 0.0;
    for &(lt, lc, r, s, l) in &grid {
        let expected = lift_cmf_exhaustive(lt, lc, &dyadic(r), &dyadic(s), &dyadic(l), 200);
        let params = LiftParams::new(lt as f64, lc as f64, r, s).unwrap();
        let direct = lift_cmf(l, &params, &policy)
            .map_err(|e| e.to_string())?
            .value;
        let tabulated = LiftDistribution::new(params, policy)
            .map_err(|e| e.to_string())?
            .cdf(l);
        for got in [direct, tabulated] {
            let err = (got - expected).abs();
            worst = worst.max(err);
            ensure(err <= 1e-9, || {
                format!("lt={lt} lc={lc} r={r} s={s} l={l}: {got} vs {expected}")
            })?;
        }
    }
    in_time(started, Duration::from_secs(10), "grid")?;
    Ok(format!("{} points, max error {worst:.1e}", grid.len()))
}

fn normal_cross_check() -> Verdict {
    let c =
        critical_value(&even(20_000.0, 0.05), &Backend::derived()).map_err(|e| e.to_string())?;
    let approx = normal_null_critical_value(1.645, 20_000.0);
    ensure(within(c, approx, 0.05), || {
        format!("{c} vs {approx} (+-5%)")
    })?;
    Ok(format!("c = {c:.6}, normal approximation {approx:.6}"))
}

fn cmf_monotone_and_bounded() -> Result<(), String> {
    let policy = TruncationPolicy::default();
    for params in [
        LiftParams::new(2.0, 2.0, 1.0, 1.0).unwrap(),
        LiftParams::new(1_000.0, 1_000.0, 1.0, 0.9).unwrap(),
        LiftParams::new(21_000.0, 20_000.0, 1.0, 1.0).unwrap(),
        LiftParams::new(3_000.0, 5_000.0, 0.4, 0.8).unwrap(),
    ] {
        let dist = LiftDistribution::new(params, policy).map_err(|e| e.to_string())?;
        let lo = -1.0 / params.reach - 0.1;
        let hi = 3.0;
        let mut prev = 0.0;
        for i in 0..100 {
            let l = lo + (hi - lo) * i as f64 / 99.0;
            let f = dist.cdf(l);
            ensure((0.0..=1.0 + 1e-9).contains(&f), || {
                format!("{params:?} cdf({l}) = {f}")
            })?;
            ensure(f >= prev, || {
                format!("{params:?} cdf drops at {l}: {prev} -> {f}")
            })?;
            prev = f;
        }
    }
    Ok(())
}

fn non_decreasing(label: &str, xs: &[f64], powers: &[f64]) -> Result<(), String> {
    for i in 1..powers.len() {
        ensure(powers[i] >= powers[i - 1], || {
            format!(
                "{label}: power falls from {} at {} to {} at {}",
                powers[i - 1],
                xs[i - 1],
                powers[i],
                xs[i]
            )
        })?;
    }
    Ok(())
}

fn power_monotone() -> Result<(), String> {
    let ccs: Vec<f64> = (1..=10).map(|i| 1_000.0 * i as f64).collect();
    let lifts: Vec<f64> = (1..=10).map(|i| 0.01 * i as f64).collect();
    let sim = Backend::simulated(SimulationConfig::new(200_000, 17).unwrap());
    for (label, backend) in [("derived", Backend::derived()), ("simulated", sim)] {
        let by_cc: Vec<f64> = ccs
            .iter()
            .map(|&cc| power_single_cell(&even(cc, 0.05), &backend).map(|r| r.power))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        non_decreasing(&format!("{label} over C_C"), &ccs, &by_cc)?;
        let by_lift: Vec<f64> = lifts
            .iter()
            .map(|&l| power_single_cell(&even(5_000.0, l), &backend).map(|r| r.power))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        non_decreasing(&format!("{label} over L_m"), &lifts, &by_lift)?;
    }
    Ok(())
}

fn power_tends_to_alpha() -> Result<(), String> {
    let d = even(5_000.0, 1e-6);
    let sim = Backend::simulated(SimulationConfig::new(200_000, 5).unwrap());
    for backend in [Backend::derived(), sim] {
        let p = power_single_cell(&d, &backend)
            .map_err(|e| e.to_string())?
            .power;
        ensure((p - ALPHA).abs() <= 0.01, || {
            format!("{:?}: power {p} at vanishing lift", backend.method())
        })?;
    }
    let m = MultiCellDesign::new(5_000.0, 0.05, 1e-6, SplitSpec::even(), ALPHA).unwrap();
    let p = power_multi_cell(&m, &SimulationConfig::new(200_000, 5).unwrap())
        .map_err(|e| e.to_string())?
        .power;
    ensure((p - ALPHA).abs() <= 0.01, || {
        format!("multi-cell: power {p} at vanishing difference")
    })
}

fn sample_size_consistent() -> Result<(), String> {
    let sim = Backend::simulated(SimulationConfig::new(200_000, 8).unwrap());
    for (lift, backend) in [
        (0.05, Backend::derived()),
        (0.02, Backend::derived()),
        (0.10, sim),
    ] {
        let target = SingleCellTarget {
            expected_lift: lift,
            split: SplitSpec::even(),
            alpha: ALPHA,
        };
        let r = min_sample_size_single(&target, 0.8, &backend, None).map_err(|e| e.to_string())?;
        let cc = r.min_control_conversions;
        let at = power_single_cell(&even(cc, lift), &backend)
            .map_err(|e| e.to_string())?
            .power;
        let below = power_single_cell(&even(0.9 * cc, lift), &backend)
            .map_err(|e| e.to_string())?
            .power;
        ensure(at >= 0.8, || {
            format!("lift {lift}: power {at} at returned {cc}")
        })?;
        ensure(below < 0.82, || {
            format!("lift {lift}: power {below} at 0.9 x {cc}")
        })?;
    }
    Ok(())
}

fn thread_count_invariance() -> Result<(), String> {
    let pool = |n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
    };
    let a = LiftParams::new(1_050.0, 1_000.0, 1.0, 1.0).unwrap();
    let b = LiftParams::new(2_300.0, 2_000.0, 0.5, 1.0).unwrap();
    let config = SimulationConfig::new(100_000, 99).unwrap();
    let campaign = CampaignConfig {
        num_runs: 20,
        seed: 3,
        ..CampaignConfig::default()
    };
    let run = || {
        (
            simulate_lift(&a, &config).unwrap().values,
            simulate_diff(&a, &b, &config).unwrap().values,
            run_campaign(&campaign).unwrap(),
        )
    };
    let one = pool(1).install(run);
    let four = pool(4).install(run);
    ensure(one.0 == four.0, || {
        "lift samples differ between 1 and 4 threads".into()
    })?;
    ensure(one.1 == four.1, || {
        "difference samples differ between 1 and 4 threads".into()
    })?;
    ensure(one.2 == four.2, || {
        "campaign differs between 1 and 4 threads".into()
    })
}

fn difference_antisymmetric() -> Result<(), String> {
    let config = SimulationConfig::default();
    let a = LiftParams::from_design(10_000.0, &SplitSpec::even(), 0.05).unwrap();
    let b = LiftParams::from_design(10_000.0, &SplitSpec::even(), 0.10).unwrap();
    let ab = simulate_diff(&a, &b, &config)
        .map_err(|e| e.to_string())?
        .mean();
    let ba = simulate_diff(&b, &a, &config)
        .map_err(|e| e.to_string())?
        .mean();
    ensure((ab - 0.05).abs() <= 0.003, || {
        format!("mean of D = {ab}, want 0.05")
    })?;
    ensure((ab + ba).abs() <= 0.003, || {
        format!("swap gives {ba} against {ab}")
    })
}

fn property_suite() -> Verdict {
    let started = Instant::now();
    let props: [(&str, Property); 6] = [
        ("cmf monotone and bounded", cmf_monotone_and_bounded),
        ("power monotone in C_C and L_m", power_monotone),
        ("power -> alpha", power_tends_to_alpha),
        ("sample size consistent with power", sample_size_consistent),
        ("thread-count invariance", thread_count_invariance),
        ("D antisymmetric", difference_antisymmetric),
    ];
    for (name, prop) in props {
        prop().map_err(|e| format!("{name}: {e}"))?;
    }
    in_time(started, Duration::from_secs(300), "property suite")?;
    Ok(format!(
        "{} properties in {:.1?}",
        props.len(),
        started.elapsed()
    ))
}

fn argmax(points: &[(f64, f64)]) -> f64 {
    points
        .iter()
        .cloned()
        .fold(
            (f64::NAN, f64::MIN),
            |best, p| if p.1 > best.1 { p } else { best },
        )
        .0
}

fn curve_shapes() -> Verdict {
    let template = even(20_000.0, 0.01);
    let derived = Backend::derived();
    let reach_grid: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let reach: Vec<(f64, f64)> = power_curve(Sweep::Reach, &template, &reach_grid, &derived)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|p| (p.x, p.power))
        .collect();
    ensure(argmax(&reach) == 1.0, || {
        format!("reach curve peaks at {}: {reach:?}", argmax(&reach))
    })?;

    let split_grid: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let split: Vec<(f64, f64)> =
        power_curve(Sweep::ControlFraction, &template, &split_grid, &derived)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|p| (p.x, p.power))
            .collect();
    ensure(argmax(&split) == 0.5, || {
        format!("split curve peaks at {}: {split:?}", argmax(&split))
    })?;

    let config = SimulationConfig::new(200_000, 21).unwrap();
    let sim = Backend::simulated(config);
    let mut compared = 0;
    for cc in [2_500.0, 5_000.0, 10_000.0, 20_000.0, 40_000.0] {
        for effect in [0.02, 0.05, 0.10] {
            let single = power_single_cell(&even(cc, effect), &sim)
                .map_err(|e| e.to_string())?
                .power;
            let design = MultiCellDesign::new(cc, 0.05, effect, SplitSpec::even(), ALPHA).unwrap();
            let multi = power_multi_cell(&design, &config)
                .map_err(|e| e.to_string())?
                .power;
            ensure(multi <= single, || {
                format!("cc {cc}, effect {effect}: multi {multi} > single {single}")
            })?;
            compared += 1;
        }
    }
    Ok(format!(
        "reach peak 1.0, split peak 0.5, multi <= single at {compared} matched points"
    ))
}

fn main() -> ExitCode {
    let checks: [Check; 9] = [
        (
            "AC1",
            "single-cell minimum sample sizes (derived, +-3%)",
            single_cell_table,
        ),
        (
            "AC2",
            "multi-cell minimum sample sizes (1e6 samples, +-5%)",
            multi_cell_table,
        ),
        (
            "AC3",
            "multi-cell power at 10,000 conversions = 0.78 +- 0.03",
            multi_cell_power_point,
        ),
        (
            "AC4",
            "single-cell power at 20,000 conversions > 0.999",
            single_cell_saturation,
        ),
        (
            "AC5",
            "K-S campaign rejections in [12, 39] of 500",
            ks_campaign,
        ),
        (
            "AC6",
            "exact CMF matches exhaustive summation to 1e-9",
            brute_force_grid,
        ),
        (
            "AC7",
            "null critical value within 5% of normal approximation",
            normal_cross_check,
        ),
        ("AC8", "property suite", property_suite),
        ("AC9", "power curve shapes", curve_shapes),
    ];
    let selected: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| a.starts_with("AC"))
        .collect();
    let mut failures = 0;
    for (id, name, check) in checks {
        if !selected.is_empty() && !selected.iter().any(|s| s == id) {
            continue;
        }
        let started = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = started.elapsed();
        match verdict {
            Ok(detail) => println!("[PASS] {id} {name}: {detail} [{took:.1?}]"),
            Err(why) => {
                failures += 1;
                println!("[FAIL] {id} {name}: {why} [{took:.1?}]");
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
