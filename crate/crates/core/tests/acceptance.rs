//! Acceptance gate: one test per criterion, each printing a single
//! `criterion N: PASS/FAIL — detail` line (visible under `--nocapture`)
//! and asserting both the check outcome and its runtime budget.
//!
//! The three scaling sweeps are shared through `OnceLock` so the residual
//! audit (criterion 9) inspects the very runs criteria 6–8 produced instead
//! of repeating them.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use gossipmax::harness::verify::{
    check_boosted_unbiasedness, check_determinism, check_first_order_scaling,
    check_linearizability_margins, check_nested_scaling, check_one_point_estimator,
    check_projection_contract, check_sampling_laws, check_smoothed_scaling, residual_outcome,
    CheckOutcome, ScalingCheck,
};

fn first_order() -> &'static ScalingCheck {
    static CHECK: OnceLock<ScalingCheck> = OnceLock::new();
    CHECK.get_or_init(check_first_order_scaling)
}

fn smoothed() -> &'static ScalingCheck {
    static CHECK: OnceLock<ScalingCheck> = OnceLock::new();
    CHECK.get_or_init(check_smoothed_scaling)
}

fn nested() -> &'static ScalingCheck {
    static CHECK: OnceLock<ScalingCheck> = OnceLock::new();
    CHECK.get_or_init(check_nested_scaling)
}

fn gate(number: u8, budget: Duration, elapsed: Duration, outcome: &CheckOutcome) {
    let status = if outcome.passed { "PASS" } else { "FAIL" };
    println!("criterion {number}: {status} — {}", outcome.detail);
    assert!(
        outcome.passed,
        "criterion {number} failed: {}",
        outcome.detail
    );
    assert!(
        elapsed <= budget,
        "criterion {number} overran its budget: {elapsed:?} > {budget:?}"
    );
}

#[test]
fn criterion_01_projection_contract() {
    let start = Instant::now();
    let outcome = check_projection_contract();
    gate(1, Duration::from_secs(30), start.elapsed(), &outcome);
}

#[test]
fn criterion_02_sampling_laws() {
    let start = Instant::now();
    let outcome = check_sampling_laws();
    gate(2, Duration::from_secs(5), start.elapsed(), &outcome);
}

#[test]
fn criterion_03_boosted_unbiasedness() {
    let start = Instant::now();
    let outcome = check_boosted_unbiasedness();
    gate(3, Duration::from_secs(60), start.elapsed(), &outcome);
}

#[test]
fn criterion_04_linearizability_margins() {
    let start = Instant::now();
    let outcome = check_linearizability_margins();
    gate(4, Duration::from_secs(60), start.elapsed(), &outcome);
}

#[test]
fn criterion_05_one_point_estimator() {
    let start = Instant::now();
    let outcome = check_one_point_estimator();
    gate(5, Duration::from_secs(60), start.elapsed(), &outcome);
}

#[test]
fn criterion_06_first_order_scaling() {
    let start = Instant::now();
    let check = first_order();
    gate(6, Duration::from_secs(600), start.elapsed(), &check.outcome);
}

#[test]
fn criterion_07_smoothed_scaling() {
    let start = Instant::now();
    let check = smoothed();
    gate(7, Duration::from_secs(600), start.elapsed(), &check.outcome);
}

#[test]
fn criterion_08_nested_scaling() {
    let start = Instant::now();
    let check = nested();
    gate(8, Duration::from_secs(600), start.elapsed(), &check.outcome);
}

#[test]
fn criterion_09_residual_audit() {
    let start = Instant::now();
    let mut ratios = Vec::new();
    ratios.extend_from_slice(&first_order().residual_ratios);
    ratios.extend_from_slice(&smoothed().residual_ratios);
    ratios.extend_from_slice(&nested().residual_ratios);
    let outcome = residual_outcome(&ratios);
    gate(9, Duration::from_secs(600), start.elapsed(), &outcome);
}

#[test]
fn criterion_10_determinism() {
    let start = Instant::now();
    let outcome = check_determinism();
    gate(10, Duration::from_secs(60), start.elapsed(), &outcome);
}
