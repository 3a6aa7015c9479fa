use frictionless::gpe::{validate, ConstantControl, GpeParams, ValidationOptions};
use frictionless::schedules::{ScaleSchedule, ScaleShape};
use frictionless::synthesis::solve;
use frictionless::Execution;

#[test]
fn optimal_schedule_reaches_target_profile() {
    let syn = solve(2.0).unwrap();
    let report = validate(&syn.schedule, 2.0, &GpeParams::default(), &ValidationOptions::default(), Execution::default()).unwrap();
    eprintln!("{}", serde_json_summary(&report));
    assert!(report.tf_ratio >= 20.0);
    assert!(report.fidelity >= 0.99, "{}", report.fidelity);
    assert!(report.fidelity_ground_state >= 0.999);
    assert!(report.norm_drift <= 1e-8);
    assert!(report.dt_convergence.unwrap() < 1e-4);
    assert!(report.refinement_convergence.unwrap() < 1e-4);
    assert!(report.scaling.samples[0].deviation < 1e-12);
    assert!(report.scaling.final_deviation <= 0.05, "{}", report.scaling.final_deviation);
    assert!((report.scaling.samples.last().unwrap().b - 2.0).abs() < 1e-6);
    assert!(report.scaling.min_b >= 1.0 - 1e-12);
}

#[test]
fn constant_trap_is_stationary() {
    let params = GpeParams::default();
    let ctl = ConstantControl { u: 1.0, duration: 3.0 * std::f64::consts::TAU };
    let opts = ValidationOptions { convergence: false, ..Default::default() };
    let report = validate(&ctl, 1.0, &params, &opts, Execution::Sequential).unwrap();
    assert!(report.fidelity_with_initial >= 0.999, "{}", report.fidelity_with_initial);
    let first = report.scaling.samples[0].deviation;
    for s in &report.scaling.samples {
        assert!((s.b - 1.0).abs() < 1e-9);
        assert!((s.deviation - first).abs() < 1e-3, "{}", s.deviation);
    }
}

#[test]
fn slow_reference_schedule_is_adiabatic() {
    let sch = ScaleSchedule::new(ScaleShape::Polynomial { gamma: 1.2 }, 30.0).unwrap();
    let opts = ValidationOptions { convergence: false, ..Default::default() };
    let report = validate(&sch, 1.2, &GpeParams::default(), &opts, Execution::Sequential).unwrap();
    eprintln!("{}", serde_json_summary(&report));
    // Against the Thomas-Fermi profile the result is limited by the
    // approximation itself at mu_T ~ 24.
    assert!(report.fidelity >= 0.998, "{}", report.fidelity);
    assert!(report.fidelity_ground_state >= 0.999, "{}", report.fidelity_ground_state);
}

fn serde_json_summary(r: &frictionless::gpe::ValidationReport) -> String {
    format!(
        "fidelity {} ground {} dt/2 {:?} refined {:?} drift {:e} edge {:e} final dev {} max dev {}",
        r.fidelity, r.fidelity_ground_state, r.fidelity_dt_half, r.fidelity_refined, r.norm_drift, r.max_edge_ratio, r.scaling.final_deviation, r.scaling.max_deviation
    )
}
