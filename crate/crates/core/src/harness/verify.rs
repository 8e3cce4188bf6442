//! Self-contained verification batteries.
//!
//! Each check runs a deterministic experiment battery against one of the
//! library's documented guarantees and reports a single pass/fail outcome
//! with measured numbers in the detail string. The CLI `verify` subcommand
//! prints them; the integration suite asserts on them. The batteries are
//! grouped into three suites: `geometry` (the pseudo-projection contract),
//! `objectives` (sampling laws, boosted-oracle unbiasedness, linearization
//! margins, the one-point estimator), and `scaling` (regret/communication/
//! LOO scaling of all five drivers, the residual audit, and bit-level
//! determinism across worker counts).

use std::fmt;
use std::fs;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    execute, fit_loglog_slope, run_experiment, AdversaryConfig, AdversaryKind, AlgorithmConfig,
    ExperimentConfig, HarnessError, ObjectiveConfig, SeedsConfig,
};
use crate::agents::{AgentError, Schedule, Variant};
use crate::geometry::{
    infeasible_project, loo_call_bound, BodyConfig, ConvexBody, FeasibleSet, SubspaceBasis,
};
use crate::network::TopologyConfig;
use crate::objective::{
    ks_statistic, one_point_grad, sample_z_mono_origin, sample_z_nonmono, smoothed_value_mc,
    z_mono_origin_cdf, z_nonmono_cdf, FunctionCase, LinearizableSpec, Objective, OracleOrder,
    QueryOracle,
};
use crate::Counters;

/// Result of one verification battery.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} — {}",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

/// A scaling battery's outcome plus the per-run residual audit ratios it
/// observed, consumed by [`residual_outcome`].
pub struct ScalingCheck {
    pub outcome: CheckOutcome,
    pub residual_ratios: Vec<f64>,
}

/// Horizons of every scaling sweep: four geometrically spaced points.
pub const SWEEP_HORIZONS: [u64; 4] = [2500, 5000, 10_000, 20_000];

/// Replicates per (θ, horizon) cell.
pub const SWEEP_SEEDS: u64 = 5;

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

// ---------------------------------------------------------------------------
// Geometry suite
// ---------------------------------------------------------------------------

/// Pseudo-projection contract on 1000 randomized box/simplex instances of
/// dimension ≤ 5: the returned iterate is feasible, `‖x − ỹ‖² ≤ 3ε`, no
/// sampled feasible point moves farther away than it was from the input,
/// and the LOO consumption respects the per-call budget.
pub fn check_projection_contract() -> CheckOutcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE);
    let counters = Counters::new();
    let mut max_violation = 0.0_f64;
    let mut max_closeness = 0.0_f64;
    let mut max_dominance_gap = f64::NEG_INFINITY;
    let mut max_loo_ratio = 0.0_f64;
    let mut failure: Option<String> = None;

    for instance in 0..1000 {
        let dim = rng.gen_range(1..=5);
        let body = if rng.gen_bool(0.5) {
            let lo = rng.gen_range(-1.0..0.5);
            let hi = lo + rng.gen_range(0.5..2.0);
            ConvexBody::axis_box(dim, lo, hi).unwrap()
        } else {
            let lo = rng.gen_range(-0.5..0.5);
            ConvexBody::simplex(dim, lo, rng.gen_range(0.5..2.0)).unwrap()
        };
        let basis = body.span_basis();
        let ball = basis.sample_ball(&mut rng);
        let x0: Vec<f64> = body
            .center()
            .iter()
            .zip(&ball)
            .map(|(c, b)| c + 0.9 * body.interior_radius() * b)
            .collect();
        let dir = basis.sample_sphere(&mut rng);
        let scale = rng.gen_range(0.0..2.0) * body.radius() + 0.01;
        let y0: Vec<f64> = x0.iter().zip(&dir).map(|(x, d)| x + scale * d).collect();
        let eps = 10f64.powf(rng.gen_range(-4.0..-1.0));

        let ip = match infeasible_project(&body, &x0, &y0, eps, &counters) {
            Ok(ip) => ip,
            Err(e) => {
                failure = Some(format!("instance {instance}: projection failed: {e}"));
                break;
            }
        };

        let violation = body.violation(&ip.x_feasible);
        max_violation = max_violation.max(violation);
        if violation > 1e-9 {
            failure = Some(format!(
                "instance {instance}: iterate violates the set by {violation}"
            ));
            break;
        }

        let closeness = dist_sq(&ip.x_feasible, &ip.y_tilde) / (3.0 * eps);
        max_closeness = max_closeness.max(closeness);
        if closeness > 1.0 + 1e-9 {
            failure = Some(format!(
                "instance {instance}: ‖x − ỹ‖² = {:.3e} exceeds 3ε = {:.3e}",
                dist_sq(&ip.x_feasible, &ip.y_tilde),
                3.0 * eps
            ));
            break;
        }

        for probe in 0..64 {
            let z: Vec<f64> = if probe % 2 == 0 {
                let b = basis.sample_ball(&mut rng);
                body.center()
                    .iter()
                    .zip(&b)
                    .map(|(c, bi)| c + body.interior_radius() * bi)
                    .collect()
            } else {
                body.loo(&basis.sample_sphere(&mut rng), &counters)
            };
            let gap = dist_sq(&ip.y_tilde, &z).sqrt() - dist_sq(&y0, &z).sqrt();
            max_dominance_gap = max_dominance_gap.max(gap);
            if gap > 1e-9 {
                failure = Some(format!(
                    "instance {instance}: feasible point moved {gap:.3e} farther away"
                ));
                break;
            }
        }
        if failure.is_some() {
            break;
        }

        let cap = loo_call_bound(body.radius(), eps, dist_sq(&x0, &y0));
        let ratio = ip.loo_calls as f64 / cap;
        max_loo_ratio = max_loo_ratio.max(ratio);
        if ratio > 1.0 {
            failure = Some(format!(
                "instance {instance}: {} LOO calls exceed the budget {cap}",
                ip.loo_calls
            ));
            break;
        }
    }

    let detail = match &failure {
        Some(msg) => msg.clone(),
        None => format!(
            "1000 instances: max feasibility violation {max_violation:.2e}, \
             max ‖x−ỹ‖²/3ε {max_closeness:.3}, max dominance slack {max_dominance_gap:.2e}, \
             max LOO/budget {max_loo_ratio:.3e} ({:.1}s)",
            start.elapsed().as_secs_f64()
        ),
    };
    CheckOutcome {
        name: "projection-contract",
        passed: failure.is_none(),
        detail,
    }
}

// ---------------------------------------------------------------------------
// Objectives suite
// ---------------------------------------------------------------------------

/// Kolmogorov-Smirnov distance between 10⁵ draws of each rescaling law and
/// its analytic CDF stays below 0.006.
pub fn check_sampling_laws() -> CheckOutcome {
    let start = Instant::now();
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED1);
    let mut stats = Vec::new();
    let mut passed = true;

    for gamma in [0.5, 1.0] {
        let mut samples: Vec<f64> = (0..n)
            .map(|_| sample_z_mono_origin(gamma, &mut rng))
            .collect();
        let ks = ks_statistic(&mut samples, |z| z_mono_origin_cdf(gamma, z));
        passed &= ks < 0.006;
        stats.push(format!("monotone-origin γ={gamma}: {ks:.4}"));
    }
    let mut samples: Vec<f64> = (0..n).map(|_| sample_z_nonmono(&mut rng)).collect();
    let ks = ks_statistic(&mut samples, z_nonmono_cdf);
    passed &= ks < 0.006;
    stats.push(format!("nonmonotone: {ks:.4}"));

    CheckOutcome {
        name: "sampling-laws",
        passed,
        detail: format!(
            "KS over 10⁵ draws — {} ({:.1}s)",
            stats.join(", "),
            start.elapsed().as_secs_f64()
        ),
    }
}

/// Boosted-query sample means match the quadrature reference within
/// four Monte-Carlo standard errors, per coordinate, for 16 random
/// objective/point pairs in each case.
pub fn check_boosted_unbiasedness() -> CheckOutcome {
    let start = Instant::now();
    let dim = 2;
    let n = 100_000usize;
    let body = ConvexBody::axis_box(dim, 0.0, 1.0).unwrap();
    let counters = Counters::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0xB005);
    let mut worst_sigmas = 0.0_f64;
    let mut failure = None;

    'cases: for case in [
        FunctionCase::MonotoneGeneral,
        FunctionCase::MonotoneOrigin,
        FunctionCase::NonmonotoneGeneral,
    ] {
        let spec = LinearizableSpec::for_case(case, 1.0, 1.0, &body).unwrap();
        for trial in 0..16 {
            let f = if case == FunctionCase::NonmonotoneGeneral {
                Objective::random_nonmonotone(dim, 0.0, 1.0, &mut rng).unwrap()
            } else {
                Objective::random_monotone(dim, 0.0, 1.0, 1.0, &mut rng).unwrap()
            };
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect();
            let oracle = QueryOracle::new(OracleOrder::Gradient, 0.0, f.lipschitz_m1()).unwrap();
            let exact = spec.boosted_grad_exact(&f, &x, 256);

            let mut sum = vec![0.0; dim];
            let mut sum_sq = vec![0.0; dim];
            for _ in 0..n {
                let b = spec
                    .boosted_query(&oracle, &f, &x, &mut rng, &counters)
                    .unwrap();
                for i in 0..dim {
                    sum[i] += b.sample[i];
                    sum_sq[i] += b.sample[i] * b.sample[i];
                }
            }
            for i in 0..dim {
                let mean = sum[i] / n as f64;
                let var = (sum_sq[i] / n as f64 - mean * mean).max(0.0);
                // The floor absorbs accumulation rounding when the samples
                // are deterministic (monotone-general) and the 4σ band is
                // otherwise zero.
                let band = 4.0 * (var / n as f64).sqrt() + 1e-9 * (1.0 + exact[i].abs());
                let gap = (mean - exact[i]).abs();
                if band > 0.0 {
                    worst_sigmas = worst_sigmas.max(4.0 * gap / band);
                }
                if gap > band {
                    failure = Some(format!(
                        "{case} trial {trial} coordinate {i}: |mean − exact| = {gap:.3e} \
                         outside the 4σ band {band:.3e}"
                    ));
                    break 'cases;
                }
            }
        }
    }

    CheckOutcome {
        name: "boosted-unbiasedness",
        passed: failure.is_none(),
        detail: failure.unwrap_or_else(|| {
            format!(
                "48 objective/point pairs × 10⁵ samples: worst deviation {worst_sigmas:.2}σ \
                 of the allowed 4σ ({:.1}s)",
                start.elapsed().as_secs_f64()
            )
        }),
    }
}

/// The linearization margin `β⟨𝔤(x), y−x⟩ − (α f(y) − f(h(x)))` stays
/// non-negative (within 1e−7) on 1000 random pairs per case.
pub fn check_linearizability_margins() -> CheckOutcome {
    let start = Instant::now();
    let dim = 2;
    let body = ConvexBody::axis_box(dim, 0.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x11EA);
    let mut min_margin = f64::INFINITY;
    let mut failure = None;

    'cases: for case in [
        FunctionCase::MonotoneGeneral,
        FunctionCase::MonotoneOrigin,
        FunctionCase::NonmonotoneGeneral,
    ] {
        let spec = LinearizableSpec::for_case(case, 1.0, 1.0, &body).unwrap();
        for pair in 0..1000 {
            let f = if case == FunctionCase::NonmonotoneGeneral {
                Objective::random_nonmonotone(dim, 0.0, 1.0, &mut rng).unwrap()
            } else {
                Objective::random_monotone(dim, 0.0, 1.0, 1.0, &mut rng).unwrap()
            };
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect();
            let y: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect();
            let margin = spec.check_linearizable(&f, &x, &y, 128);
            min_margin = min_margin.min(margin);
            if margin < -1e-7 {
                failure = Some(format!("{case} pair {pair}: margin {margin:.3e} < -1e-7"));
                break 'cases;
            }
        }
    }

    CheckOutcome {
        name: "linearizability-margins",
        passed: failure.is_none(),
        detail: failure.unwrap_or_else(|| {
            format!(
                "3000 pairs: minimum margin {min_margin:.3e} ({:.1}s)",
                start.elapsed().as_secs_f64()
            )
        }),
    }
}

/// The one-point estimator's Monte-Carlo mean matches a central finite
/// difference of the ball-smoothed value within `3σ_MC + L·δ` per
/// coordinate.
pub fn check_one_point_estimator() -> CheckOutcome {
    let start = Instant::now();
    let dim = 2;
    let delta = 0.05;
    let n = 100_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(0x0E57);
    let f = Objective::random_monotone(dim, 0.0, 1.0, 1.0, &mut rng).unwrap();
    let x = [0.4, 0.55];
    let basis = SubspaceBasis::standard(dim);

    let mut sum = vec![0.0; dim];
    let mut sum_sq = vec![0.0; dim];
    for _ in 0..n {
        let v = basis.sample_sphere(&mut rng);
        let point: Vec<f64> = x.iter().zip(&v).map(|(xi, vi)| xi + delta * vi).collect();
        let est = one_point_grad(f.value(&point), &v, dim, delta);
        for i in 0..dim {
            sum[i] += est[i];
            sum_sq[i] += est[i] * est[i];
        }
    }

    let mut passed = true;
    let mut details = Vec::new();
    for i in 0..dim {
        // The smoothed value of a quadratic is quadratic in x, so a central
        // difference at any step is exact up to its own Monte-Carlo noise.
        let h = 0.05;
        let mut plus = x;
        plus[i] += h;
        let mut minus = x;
        minus[i] -= h;
        let fd = (smoothed_value_mc(&f, &plus, delta, &basis, n, &mut rng)
            - smoothed_value_mc(&f, &minus, delta, &basis, n, &mut rng))
            / (2.0 * h);
        let mean = sum[i] / n as f64;
        let var = (sum_sq[i] / n as f64 - mean * mean).max(0.0);
        let tol = 3.0 * (var / n as f64).sqrt() + f.smoothness_l() * delta;
        let gap = (mean - fd).abs();
        passed &= gap <= tol;
        details.push(format!("axis {i}: |mean − fd| = {gap:.3e} ≤ {tol:.3e}"));
    }

    CheckOutcome {
        name: "one-point-estimator",
        passed,
        detail: format!(
            "{} ({:.1}s)",
            details.join(", "),
            start.elapsed().as_secs_f64()
        ),
    }
}

// ---------------------------------------------------------------------------
// Scaling suite
// ---------------------------------------------------------------------------

/// Shared config of every scaling sweep: 8 agents on a cycle, the unit box
/// in the plane, a rotating pool of three seeded quadratics, oracle noise
/// 0.1.
fn scaling_config(
    variant: Variant,
    case: FunctionCase,
    theta: f64,
    horizon: u64,
) -> ExperimentConfig {
    ExperimentConfig {
        network: TopologyConfig::Cycle { n: 8 },
        body: BodyConfig {
            kind: "box".into(),
            dim: 2,
            lo: 0.0,
            hi: Some(1.0),
            budget: None,
        },
        objective: ObjectiveConfig {
            family: "quadratic".into(),
            seed: 2024,
            monotone: case != FunctionCase::NonmonotoneGeneral,
            gamma: 1.0,
            noise_sigma: 0.1,
            oracle_order: u8::from(variant.oracle_order()),
            curvature: 1.0,
        },
        adversary: AdversaryConfig {
            kind: AdversaryKind::Rotating,
            pool_size: 3,
            seed: 5,
        },
        algorithm: AlgorithmConfig {
            variant,
            case,
            theta,
            horizon,
        },
        seeds: SeedsConfig { master: 31 },
    }
}

struct SweepStats {
    mean_regrets: Vec<f64>,
    loo_counts: Vec<f64>,
    regret_clamped: bool,
    residual_ratios: Vec<f64>,
}

/// Runs the in-memory sweep for one (variant, case, θ) and asserts counter
/// exactness on every run: one gossip per block and one query per agent and
/// inner block.
fn sweep_in_memory(variant: Variant, case: FunctionCase, theta: f64) -> Result<SweepStats, String> {
    let mut mean_regrets = Vec::new();
    let mut loo_counts = Vec::new();
    let mut residual_ratios = Vec::new();
    for &horizon in &SWEEP_HORIZONS {
        let config = scaling_config(variant, case, theta, horizon);
        let mut regret_acc = 0.0;
        let mut loo_acc = 0.0;
        for replicate in 0..SWEEP_SEEDS {
            let run = execute(&config, config.seeds.master + replicate)
                .map_err(|e| format!("{variant} θ={theta} T={horizon}: {e}"))?;
            let report = &run.report;
            let s = report.schedule;
            let expected_comms = s.t_padded / (s.k * s.l);
            if report.counters.comm_rounds != expected_comms {
                return Err(format!(
                    "{variant} θ={theta} T={horizon}: {} communications, expected {expected_comms}",
                    report.counters.comm_rounds
                ));
            }
            let expected_queries = (s.t_padded / s.l) * report.n_agents as u64;
            if report.counters.oracle_queries != expected_queries {
                return Err(format!(
                    "{variant} θ={theta} T={horizon}: {} queries, expected {expected_queries}",
                    report.counters.oracle_queries
                ));
            }
            if report.counters.loo_calls as f64 > report.loo_bound_total {
                return Err(format!(
                    "{variant} θ={theta} T={horizon}: {} LOO calls exceed the budget {}",
                    report.counters.loo_calls, report.loo_bound_total
                ));
            }
            regret_acc += run.mean_final_regret();
            loo_acc += report.counters.loo_calls as f64;
            residual_ratios.push(report.residual_max_ratio);
        }
        mean_regrets.push(regret_acc / SWEEP_SEEDS as f64);
        loo_counts.push(loo_acc / SWEEP_SEEDS as f64);
    }
    let regret_clamped = mean_regrets.iter().any(|&r| r < 1.0);
    Ok(SweepStats {
        mean_regrets,
        loo_counts,
        regret_clamped,
        residual_ratios,
    })
}

fn regret_slope(stats: &SweepStats) -> f64 {
    fit_loglog_slope(&SWEEP_HORIZONS, &stats.mean_regrets)
        .expect("four horizons")
        .slope
}

fn loo_slope(stats: &SweepStats) -> f64 {
    fit_loglog_slope(&SWEEP_HORIZONS, &stats.loo_counts)
        .expect("four horizons")
        .slope
}

/// First-order driver at θ = 1 and θ = 0.5: regret slopes within 0.1 of the
/// predicted `max(θ/2, 1−θ/2)`, communication exactly one round per block,
/// LOO growth within 0.15 of exponent 2θ.
pub fn check_first_order_scaling() -> ScalingCheck {
    let start = Instant::now();
    let mut residual_ratios = Vec::new();
    let mut details = Vec::new();
    let mut passed = true;
    let mut fail_reason = None;

    for (theta, regret_cap) in [(1.0, 0.5 + 0.1), (0.5, 0.75 + 0.1)] {
        match sweep_in_memory(Variant::FirstOrder, FunctionCase::MonotoneGeneral, theta) {
            Ok(stats) => {
                let rs = regret_slope(&stats);
                let ls = loo_slope(&stats);
                let loo_cap = 2.0 * theta + 0.15;
                passed &= rs <= regret_cap && ls <= loo_cap;
                details.push(format!(
                    "θ={theta}: regret slope {rs:.3} ≤ {regret_cap}{}, LOO slope {ls:.3} ≤ {loo_cap}",
                    if stats.regret_clamped { " (clamped)" } else { "" }
                ));
                residual_ratios.extend(stats.residual_ratios);
            }
            Err(e) => {
                passed = false;
                fail_reason = Some(e);
                break;
            }
        }
    }

    let detail = fail_reason.unwrap_or_else(|| {
        format!(
            "{} — comm/query counters exact on all 40 runs ({:.1}s)",
            details.join("; "),
            start.elapsed().as_secs_f64()
        )
    });
    ScalingCheck {
        outcome: CheckOutcome {
            name: "first-order-scaling",
            passed,
            detail,
        },
        residual_ratios,
    }
}

/// Smoothed value-feedback drivers at θ = 0.8: regret slope within 0.1 of
/// the predicted 1 − θ/4 for the played-point bandit (monotone-general) and
/// the full-information zeroth-order driver (monotone-origin).
pub fn check_smoothed_scaling() -> ScalingCheck {
    let start = Instant::now();
    let theta = 0.8;
    let cap = 1.0 - theta / 4.0 + 0.1;
    let mut residual_ratios = Vec::new();
    let mut details = Vec::new();
    let mut passed = true;
    let mut fail_reason = None;

    for (variant, case) in [
        (Variant::Bandit, FunctionCase::MonotoneGeneral),
        (Variant::ZerothOrder, FunctionCase::MonotoneOrigin),
    ] {
        match sweep_in_memory(variant, case, theta) {
            Ok(stats) => {
                let rs = regret_slope(&stats);
                passed &= rs <= cap;
                details.push(format!(
                    "{variant}: regret slope {rs:.3} ≤ {cap}{}",
                    if stats.regret_clamped {
                        " (clamped)"
                    } else {
                        ""
                    }
                ));
                residual_ratios.extend(stats.residual_ratios);
            }
            Err(e) => {
                passed = false;
                fail_reason = Some(e);
                break;
            }
        }
    }

    let detail = fail_reason.unwrap_or_else(|| {
        format!(
            "θ=0.8 — {} ({:.1}s)",
            details.join("; "),
            start.elapsed().as_secs_f64()
        )
    });
    ScalingCheck {
        outcome: CheckOutcome {
            name: "smoothed-scaling",
            passed,
            detail,
        },
        residual_ratios,
    }
}

/// Nested-block drivers: out-of-range exponents are rejected, and at their
/// admissible limits the semi-bandit (θ = 2/3) and blocked-bandit (θ = 0.8)
/// sweeps keep one query per inner block, one gossip per outer block, and
/// regret slopes within 0.1 of 1 − θ/2 resp. 1 − θ/4.
pub fn check_nested_scaling() -> ScalingCheck {
    let start = Instant::now();
    let mut residual_ratios = Vec::new();
    let mut details = Vec::new();
    let mut passed = true;
    let mut fail_reason: Option<String> = None;

    // Exponent range rejections.
    let semi = Schedule::new(
        Variant::SemiBandit,
        FunctionCase::MonotoneOrigin,
        0.8,
        1000,
        1.0,
    );
    let blocked = Schedule::new(
        Variant::BanditBlocked,
        FunctionCase::MonotoneOrigin,
        0.9,
        1000,
        1.0,
    );
    if !matches!(semi, Err(AgentError::ThetaOutOfRange { .. }))
        || !matches!(blocked, Err(AgentError::ThetaOutOfRange { .. }))
    {
        passed = false;
        fail_reason = Some("out-of-range exponents were not rejected".into());
    }
    details.push("θ rejections: semi-bandit@0.8 and bandit-blocked@0.9".into());

    if passed {
        for (variant, case, theta) in [
            (Variant::SemiBandit, FunctionCase::MonotoneOrigin, 2.0 / 3.0),
            (
                Variant::BanditBlocked,
                FunctionCase::NonmonotoneGeneral,
                0.8,
            ),
        ] {
            let cap = match variant {
                Variant::SemiBandit => 1.0 - theta / 2.0 + 0.1,
                _ => 1.0 - theta / 4.0 + 0.1,
            };
            match sweep_in_memory(variant, case, theta) {
                Ok(stats) => {
                    let rs = regret_slope(&stats);
                    passed &= rs <= cap;
                    details.push(format!(
                        "{variant} θ={theta:.3}: regret slope {rs:.3} ≤ {cap:.3}{}",
                        if stats.regret_clamped {
                            " (clamped)"
                        } else {
                            ""
                        }
                    ));
                    residual_ratios.extend(stats.residual_ratios);
                }
                Err(e) => {
                    passed = false;
                    fail_reason = Some(e);
                    break;
                }
            }
        }
    }

    let detail = fail_reason.unwrap_or_else(|| {
        format!(
            "{} — query = one per agent and inner block on every run ({:.1}s)",
            details.join("; "),
            start.elapsed().as_secs_f64()
        )
    });
    ScalingCheck {
        outcome: CheckOutcome {
            name: "nested-scaling",
            passed,
            detail,
        },
        residual_ratios,
    }
}

/// The per-block drift bound `‖ỹ − y‖ ≤ 2√(3ε) + 2ηKG` held on every block
/// of every scaling run (violations abort a run, so completing them all
/// with max ratio ≤ 1 is the assertion).
pub fn residual_outcome(ratios: &[f64]) -> CheckOutcome {
    let max = ratios.iter().copied().fold(0.0_f64, f64::max);
    let passed = !ratios.is_empty() && ratios.iter().all(|r| r.is_finite() && *r <= 1.0 + 1e-12);
    CheckOutcome {
        name: "residual-audit",
        passed,
        detail: format!(
            "{} runs completed with max residual/bound ratio {max:.3}",
            ratios.len()
        ),
    }
}

/// Repeating one run with identical config and seed yields byte-identical
/// CSVs under 1 and 8 workers.
pub fn check_determinism() -> CheckOutcome {
    let start = Instant::now();
    let config = scaling_config(
        Variant::FirstOrder,
        FunctionCase::MonotoneGeneral,
        1.0,
        2000,
    );
    let root = std::env::temp_dir().join(format!(
        "gossipmax-verify-{}-{}",
        std::process::id(),
        start.elapsed().as_nanos()
    ));
    let result = determinism_inner(&config, &root);
    let _ = fs::remove_dir_all(&root);
    match result {
        Ok(()) => CheckOutcome {
            name: "determinism",
            passed: true,
            detail: format!(
                "three runs (workers 1, 1, 8) produced byte-identical CSVs ({:.1}s)",
                start.elapsed().as_secs_f64()
            ),
        },
        Err(e) => CheckOutcome {
            name: "determinism",
            passed: false,
            detail: e,
        },
    }
}

fn determinism_inner(config: &ExperimentConfig, root: &std::path::Path) -> Result<(), String> {
    let run_with = |workers: usize, tag: &str| -> Result<Vec<u8>, String> {
        let dir = root.join(tag);
        let job = || run_experiment(config, &dir, config.seeds.master);
        let artifacts = with_worker_count(workers, job).map_err(|e| e.to_string())?;
        fs::read(&artifacts.csv_path).map_err(|e| e.to_string())
    };
    let a = run_with(1, "a")?;
    let b = run_with(1, "b")?;
    let c = run_with(8, "c")?;
    if a != b {
        return Err("two single-worker runs differ".into());
    }
    if a != c {
        return Err("single-worker and eight-worker runs differ".into());
    }
    Ok(())
}

fn with_worker_count<T: Send>(
    workers: usize,
    job: impl FnOnce() -> Result<T, HarnessError> + Send,
) -> Result<T, HarnessError> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool")
            .install(job)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        job()
    }
}

// ---------------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------------

/// The pseudo-projection battery.
pub fn geometry_suite() -> Vec<CheckOutcome> {
    vec![check_projection_contract()]
}

/// Sampling-law, oracle, and linearization batteries.
pub fn objectives_suite() -> Vec<CheckOutcome> {
    vec![
        check_sampling_laws(),
        check_boosted_unbiasedness(),
        check_linearizability_margins(),
        check_one_point_estimator(),
    ]
}

/// All five drivers' scaling sweeps, the residual audit over those runs,
/// and worker-count determinism.
pub fn scaling_suite() -> Vec<CheckOutcome> {
    let mut outcomes = Vec::new();
    let mut ratios = Vec::new();
    for check in [
        check_first_order_scaling(),
        check_smoothed_scaling(),
        check_nested_scaling(),
    ] {
        ratios.extend(check.residual_ratios);
        outcomes.push(check.outcome);
    }
    outcomes.push(residual_outcome(&ratios));
    outcomes.push(check_determinism());
    outcomes
}
