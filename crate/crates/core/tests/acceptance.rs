//! End-to-end acceptance gate: every numbered validation criterion must
//! pass at its stated tolerance.  Each test prints one verdict line with
//! the measured numbers so a full run reads as a ten-line report
//! (`cargo test --test acceptance -- --nocapture`).

use redmash::harness::run_criterion;

fn gate(id: usize) {
    let report = run_criterion(id).expect("criterion machinery failed");
    let verdict = if report.passed { "PASS" } else { "FAIL" };
    println!(
        "[{verdict}] criterion {:2} {} ({:.2}s): {}",
        report.id, report.name, report.wall_seconds, report.details
    );
    assert!(
        report.passed,
        "criterion {} ({}) failed: {}",
        report.id, report.name, report.details
    );
}

#[test]
fn criterion_01_detailed_balance() {
    gate(1);
}

#[test]
fn criterion_02_master_equation_closed_form() {
    gate(2);
}

#[test]
fn criterion_03_unravelling_equivalence() {
    gate(3);
}

#[test]
fn criterion_04_hybrid_driven_equivalence() {
    gate(4);
}

#[test]
fn criterion_05_zero_coupling_reduction() {
    gate(5);
}

#[test]
fn criterion_06_hybrid_equilibrium() {
    gate(6);
}

#[test]
fn criterion_07_population_sum_identity() {
    gate(7);
}

#[test]
fn criterion_08_mash_mechanics() {
    gate(8);
}

#[test]
fn criterion_09_cavity_phenomenology() {
    gate(9);
}

#[test]
fn criterion_10_sphere_weighting_theorem() {
    gate(10);
}
