//! One test per acceptance property, each at the default configuration.
//! Every check is printed as PASS/FAIL before the test asserts.

use std::time::{Duration, Instant};

use bolab::experiment::runs::{
    coercivity, commutator_scaling, conservation, integral_table, linear_spectrum, linearized_structure,
    soliton_identities, theorem_scaling, trajectory_order, virial_uniformity,
};
use bolab::experiment::{run_property, ExperimentConfig, Property};

fn verify(label: &str, property: Property, budget: Duration) {
    let dir = tempfile::tempdir().unwrap();
    let started = Instant::now();
    let section = run_property(property, &ExperimentConfig::default(), dir.path()).unwrap();
    let elapsed = started.elapsed();
    let mut failed = Vec::new();
    for c in section.checks.iter().filter(|c| c.acceptance) {
        let measured = c.measured.map_or("n/a".to_string(), |m| format!("{m:.6e}"));
        println!("[{label}] {} {}: {measured} ({})", c.status(), c.name, c.expected);
        if !c.passed {
            failed.push(c.name.clone());
        }
    }
    let in_budget = elapsed <= budget;
    println!(
        "[{label}] {} runtime: {:.1} s (budget {} s)",
        if in_budget { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    if !in_budget {
        failed.push("runtime".to_string());
    }
    assert!(failed.is_empty(), "{label}: failed {failed:?}");
}

#[test]
fn soliton_identities_hold() {
    verify("soliton identities", soliton_identities, Duration::from_secs(5));
}

#[test]
fn closed_form_integrals_match_quadrature() {
    verify("integral table", integral_table, Duration::from_secs(5));
}

#[test]
fn linearized_operator_spectrum() {
    verify("linear spectrum", linear_spectrum, Duration::from_secs(120));
}

#[test]
fn constrained_coercivity() {
    verify("coercivity", coercivity, Duration::from_secs(300));
}

#[test]
fn invariants_and_time_reversal() {
    verify("conservation", conservation, Duration::from_secs(600));
}

#[test]
fn linearized_flow_structure() {
    verify("linearized structure", linearized_structure, Duration::from_secs(120));
}

#[test]
fn trajectory_deviation_order() {
    verify("trajectory order", trajectory_order, Duration::from_secs(10));
}

#[test]
fn near_soliton_remainder_scaling() {
    verify("theorem scaling", theorem_scaling, Duration::from_secs(3600));
}

#[test]
fn local_virial_uniformity() {
    verify("virial uniformity", virial_uniformity, Duration::from_secs(900));
}

#[test]
fn commutator_norm_scaling() {
    verify("commutator scaling", commutator_scaling, Duration::from_secs(300));
}
