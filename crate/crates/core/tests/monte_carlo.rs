use std::time::Instant;

use gmls_core::mc::{run_study, Scenario, SimulationConfig};
use gmls_core::EstimatorTag;

#[test]
fn singular_adding_up_matches_constrained_covariance() {
    let cfg = SimulationConfig::new(Scenario::SingularAddingUp, 10_000, 42);
    let start = Instant::now();
    let report = run_study(&cfg, &[]).unwrap();
    let elapsed = start.elapsed();
    let r = &report.reports[0];
    println!("elapsed {elapsed:?} bias ratio {:.3} cov ratio {:.3}", r.max_bias_ratio, r.max_covariance_ratio);
    assert_eq!(r.estimator, EstimatorTag::ConstrainedSingular);
    assert!(r.unbiased && r.covariance_matches, "{r:?}");
    assert!(report.null_direction.as_ref().unwrap().pass);
    assert!(report.pass);
}

#[test]
fn regular_design_shows_gls_efficiency() {
    let cfg = SimulationConfig::new(Scenario::RegularGls, 10_000, 7);
    let report = run_study(&cfg, &[]).unwrap();
    let eff = report.efficiency.as_ref().unwrap();
    println!("{eff:?}");
    assert!(eff.pass);
    assert!(report.pass, "{report:?}");
}

#[test]
fn remaining_scenarios_pass() {
    for scenario in [Scenario::CollinearRestricted, Scenario::FePanelKronecker, Scenario::FePanelBlockDiagonal] {
        let report = run_study(&SimulationConfig::new(scenario, 2_000, 3), &[]).unwrap();
        assert!(report.pass, "{scenario}: {report:?}");
        assert!(report.equivalences.iter().all(|e| e.pass));
    }
}

#[test]
fn planted_bias_is_detected() {
    let cfg = SimulationConfig { bias_injection: 0.2, ..SimulationConfig::new(Scenario::SingularAddingUp, 1_000, 5) };
    let report = run_study(&cfg, &[]).unwrap();
    assert!(!report.pass);
    assert!(!report.reports[0].unbiased);
}
