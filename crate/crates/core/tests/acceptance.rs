//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line to
//! stderr (bypassing output capture) and then asserts.
//!
//! Heavy scenario runs are shared between tests through `OnceLock`.

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use sievelab::experiment::{run_scenario, Scenario, ScenarioConfig, ScenarioReport, TestRecord};
use sievelab::factor_models::{FactorFamily, FamilySpec, TailSpec};

fn pareto(alpha: f64) -> TailSpec {
    TailSpec::Pareto { alpha }
}

fn config(scenario: Scenario) -> ScenarioConfig {
    ScenarioConfig::defaults(scenario)
}

fn run(cell: &'static OnceLock<ScenarioReport>, config: impl FnOnce() -> ScenarioConfig) -> &'static ScenarioReport {
    cell.get_or_init(|| run_scenario(&config()).expect("scenario run"))
}

fn limit_calibration() -> &'static ScenarioReport {
    static CELL: OnceLock<ScenarioReport> = OnceLock::new();
    run(&CELL, || config(Scenario::LimitCalibration))
}

fn theorem1() -> &'static ScenarioReport {
    static CELL: OnceLock<ScenarioReport> = OnceLock::new();
    run(&CELL, || {
        let c = config(Scenario::Theorem1);
        assert_eq!(c.family, FamilySpec::new(0.3, 0.3, pareto(0.5), pareto(0.5)));
        assert_eq!((c.t_grid.clone(), c.u_grid.clone()), (vec![6.0, 9.0, 12.0], vec![1.0, 2.0]));
        assert_eq!((c.replicates, c.limit_samples), (20_000, 50_000));
        c
    })
}

fn report_line(criterion: u32, title: &str, checks: &[(&str, bool, String)]) -> bool {
    let pass = checks.iter().all(|c| c.1);
    let detail = checks
        .iter()
        .map(|(name, ok, value)| format!("{name}={value}{}", if *ok { "" } else { " (failed)" }))
        .collect::<Vec<_>>()
        .join("; ");
    let line = format!(
        "acceptance {criterion:>2} {} {title}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    pass
}

fn check<'a>(report: &'a ScenarioReport, name: &'a str) -> (&'a str, bool, String) {
    let t: &TestRecord = report
        .test(name)
        .unwrap_or_else(|| panic!("{name} missing from the {} report", report.config.scenario));
    let value = match t.p_value {
        Some(p) => format!("{:.4} (p {p:.3e})", t.statistic),
        None => format!("{:.4}", t.statistic),
    };
    let value = if t.note.is_empty() { value } else { format!("{value} [{}]", t.note) };
    (name, t.pass, value)
}

#[test]
fn criterion_01_oracle_equivalence() {
    let c = config(Scenario::OracleEquiv);
    assert_eq!(c.replicates, 1000);
    let start = Instant::now();
    let r = run_scenario(&c).unwrap();
    let elapsed = start.elapsed();
    let ok = report_line(
        1,
        "fast allocation equals the naive oracle on 1000 instances",
        &[
            check(&r, "oracle_mismatches"),
            ("runtime", elapsed < Duration::from_secs(5), format!("{:.3}s", elapsed.as_secs_f64())),
        ],
    );
    assert!(ok);
}

#[test]
fn criterion_02_straddle_count_is_geometric() {
    let r = limit_calibration();
    let ok = report_line(
        2,
        "R(1) is geometric at c = 1 and c = 3",
        &[
            check(r, "r_chi2_c1"),
            check(r, "r_tv_c1"),
            check(r, "r_chi2_c3"),
            check(r, "r_tv_c3"),
        ],
    );
    assert!(ok);
}

#[test]
fn criterion_03_exponential_integral() {
    let r = limit_calibration();
    let ok = report_line(
        3,
        "integral against the inverse subordinator is standard exponential",
        &[check(r, "exp_integral_ks"), check(r, "mixed_poisson_chi2")],
    );
    assert!(ok);
}

#[test]
fn criterion_04_sieve_converges_to_geometric() {
    let r = theorem1();
    let ok = report_line(
        4,
        "TV of L_n to the geometric law decreases in t and ends below 0.15",
        &[check(r, "tv_geometric_trend_u1")],
    );
    assert!(ok);
}

#[test]
fn criterion_05_joint_law() {
    let r = theorem1();
    let ok = report_line(
        5,
        "(L at e^6, L at e^12) against (R(1), R(2))",
        &[check(r, "joint_t6")],
    );
    assert!(ok);
}

#[test]
fn criterion_06_stationarity() {
    let r = limit_calibration();
    let ok = report_line(6, "R(1) and R(e) have the same law", &[check(r, "r_stationarity_u1_ue")]);
    assert!(ok);
}

#[test]
fn criterion_07_gaussian_covariance() {
    let r = limit_calibration();
    let ok = report_line(
        7,
        "covariance of V and of the fractional Brownian motion within 4 SE",
        &[check(r, "v_covariance"), check(r, "fbm_covariance")],
    );
    assert!(ok);
}

#[test]
fn criterion_08_gaussian_end_to_end() {
    static CELL: OnceLock<ScenarioReport> = OnceLock::new();
    let r = run(&CELL, || {
        let mut c = config(Scenario::Theorem3a);
        c.u_grid = vec![1.0];
        assert_eq!(c.family, FamilySpec::new(0.0, 0.3, TailSpec::PointMass { value: 1.0 }, pareto(0.4)));
        c
    });
    let ok = report_line(
        8,
        "KS of the centered count to the normal limit decreases in t and ends below 0.15",
        &[check(r, "ks_normal_trend_u1")],
    );
    assert!(ok);
}

#[test]
fn criterion_09_ratio_normalized_mean() {
    static CELL: OnceLock<ScenarioReport> = OnceLock::new();
    let r = run(&CELL, || {
        let c = config(Scenario::Theorem2);
        assert_eq!((c.family.left, c.family.right), (pareto(0.6), pareto(0.3)));
        assert_eq!(c.limit_samples, 100_000);
        c
    });
    let ok = report_line(
        9,
        "ratio-normalized L at t = 12 against the simulated limit",
        &[check(r, "mean_t12_u1"), check(r, "ks_limit_t12_u1")],
    );
    assert!(ok);
}

#[test]
fn criterion_10_stable_characteristic_function() {
    let r = limit_calibration();
    let ok = report_line(
        10,
        "stable driver increments match the closed-form characteristic function",
        &[check(r, "stable_cf_alpha1.5"), check(r, "stable_increment_additivity")],
    );
    assert!(ok);
}

#[test]
fn criterion_11_poissonization_gaps_shrink() {
    static RED: OnceLock<ScenarioReport> = OnceLock::new();
    static DEPOIS: OnceLock<ScenarioReport> = OnceLock::new();
    let red = run(&RED, || config(Scenario::LemmaRed));
    let depois = run(&DEPOIS, || config(Scenario::Depoisson));
    assert_eq!(red.config.replicates, 10_000);
    let ok = report_line(
        11,
        "mean |L(e^t) - rho(t)| and P{L(e^t) != L_[e^t]} decrease in t",
        &[check(red, "mean_abs_gap_trend"), check(depois, "p_gap_nonzero_trend")],
    );
    assert!(ok);
}

#[test]
fn criterion_12_b2_c2_norming_and_limits() {
    let mut checks = Vec::new();
    for scenario in [Scenario::Theorem3b2, Scenario::Theorem3c2] {
        let c = config(scenario);
        let fam = FactorFamily::new(c.family).unwrap();
        let worst = c
            .t_grid
            .iter()
            .map(|&t| fam.norming_c_residual(t, fam.norming_c(t).unwrap()).unwrap())
            .fold(0.0, f64::max);
        checks.push((scenario.name(), worst < 1e-9, format!("max residual {worst:.2e}")));
    }
    let r = limit_calibration();
    for name in ["exp_integral_ks", "v_covariance", "stable_cf_alpha1.5"] {
        checks.push(check(r, name));
    }
    let ok = report_line(12, "norming constants solve their equation; limit samplers verified", &checks);
    assert!(ok);
}
