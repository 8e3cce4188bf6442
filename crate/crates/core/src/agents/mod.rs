//! Round schedules and the online drivers.
//!
//! All five drivers share one block skeleton. The horizon is split into
//! blocks of `K·L` rounds; within a block every agent keeps its iterate
//! `x_m` frozen, plays according to the variant's round policy, and folds
//! its oracle responses into a block accumulator (`K` responses per block).
//! At the block boundary the agents gossip their `(x, ỹ)` pairs once, take a
//! gradient-ascent step `y ← mixed ỹ + η·Σ responses`, and replace the exact
//! projection back onto the working set with the Frank-Wolfe
//! pseudo-projection from [`crate::geometry::infeasible_project`].
//!
//! The five variants differ only in their round policy:
//!
//! * **first-order** — plays the case's playing map of `x_m`, queries a
//!   gradient at a point drawn from the case's rescaling law every round;
//! * **bandit** — plays `x_m + δv` on the δ-shrunk set and builds one-point
//!   gradient estimates from value queries at the played point;
//! * **semi-bandit** — plays the rescaled query point on one uniformly
//!   random round per inner block of `L` and queries a gradient there; the
//!   other rounds play the playing map with no query;
//! * **zeroth-order** — plays the playing map, queries values at
//!   δ-perturbed rescaled points (full information);
//! * **bandit-blocked** — one round per inner block plays *and* queries at
//!   the δ-perturbed rescaled point, the rest play the playing map.
//!
//! Three audits are wired into every run and turn violations into errors:
//! query-at-played-point (for the bandit-feedback variants), base-set
//! containment of every played and queried point (with `δ` slack for
//! δ-perturbed points), and the per-block residual bound
//! `‖ỹ − y‖ ≤ 2√(3ε) + 2ηKG`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    infeasible_project, loo_call_bound, ConvexBody, FeasibleSet, GeometryError, ShrunkBody,
    FEASIBILITY_TOL,
};
use crate::network::{NetworkError, WeightMatrix};
use crate::objective::{
    one_point_grad, FunctionCase, LinearizableSpec, Objective, ObjectiveError, OracleOrder,
    QueryOracle,
};
use crate::{derive_seed, CounterSnapshot, Counters};

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum AgentError {
    /// The block-length exponent is outside the variant's admissible range.
    #[error("theta {theta} outside [0, {max}] for the {variant} driver")]
    ThetaOutOfRange {
        variant: Variant,
        theta: f64,
        max: f64,
    },

    /// The driver cannot serve the requested function case.
    #[error("the {variant} driver does not support the {case} case")]
    IncompatibleCase {
        variant: Variant,
        case: FunctionCase,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid run input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Geometry(#[from] GeometryError),

    #[error(transparent)]
    Network(#[from] NetworkError),

    #[error(transparent)]
    Objective(#[from] ObjectiveError),

    /// A played or queried point left the base feasible set by more than the
    /// round's admissible slack.
    #[error(
        "containment audit failed: agent {agent}, round {t}: violation {violation} > slack {slack}"
    )]
    ContainmentViolated {
        agent: usize,
        t: u64,
        violation: f64,
        slack: f64,
    },

    /// A bandit-feedback variant queried away from its played point.
    #[error("trivial-query audit failed: agent {agent}, round {t}")]
    TrivialQueryViolated { agent: usize, t: u64 },

    /// The pseudo-projection drifted farther from the pre-projection vector
    /// than the per-block residual bound allows.
    #[error(
        "residual audit failed: agent {agent}, block {block}: residual {residual} > bound {bound}"
    )]
    ResidualViolated {
        agent: usize,
        block: u64,
        residual: f64,
        bound: f64,
    },
}

// ---------------------------------------------------------------------------
// Variants and schedules
// ---------------------------------------------------------------------------

/// The five online drivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Full-information gradient feedback, one boosted query per round.
    FirstOrder,
    /// Value feedback at the played point (monotone-general case only).
    Bandit,
    /// Gradient feedback at the played point, one query per inner block.
    SemiBandit,
    /// Value feedback at points the agent does not play (full information).
    ZerothOrder,
    /// Value feedback at the played point, one query per inner block.
    BanditBlocked,
}

impl Variant {
    /// Largest admissible block-length exponent.
    pub fn max_theta(self) -> f64 {
        match self {
            Variant::FirstOrder | Variant::Bandit | Variant::ZerothOrder => 1.0,
            Variant::SemiBandit => 2.0 / 3.0,
            Variant::BanditBlocked => 0.8,
        }
    }

    /// Whether the driver consumes value (zeroth-order) or gradient
    /// (first-order) oracles.
    pub fn oracle_order(self) -> OracleOrder {
        match self {
            Variant::FirstOrder | Variant::SemiBandit => OracleOrder::Gradient,
            Variant::Bandit | Variant::ZerothOrder | Variant::BanditBlocked => OracleOrder::Value,
        }
    }

    /// Whether the driver runs on the δ-shrunk working set.
    pub fn uses_smoothing(self) -> bool {
        matches!(
            self,
            Variant::Bandit | Variant::ZerothOrder | Variant::BanditBlocked
        )
    }

    /// Whether the case is admissible for this driver.
    pub fn supports_case(self, case: FunctionCase) -> bool {
        match self {
            Variant::FirstOrder => true,
            Variant::Bandit => case == FunctionCase::MonotoneGeneral,
            Variant::SemiBandit | Variant::ZerothOrder | Variant::BanditBlocked => matches!(
                case,
                FunctionCase::MonotoneOrigin | FunctionCase::NonmonotoneGeneral
            ),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Variant::FirstOrder => "first-order",
            Variant::Bandit => "bandit",
            Variant::SemiBandit => "semi-bandit",
            Variant::ZerothOrder => "zeroth-order",
            Variant::BanditBlocked => "bandit-blocked",
        };
        f.write_str(name)
    }
}

/// All per-run step sizes and block lengths, derived from the horizon and
/// the block-length exponent θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Schedule {
    pub variant: Variant,
    pub case: FunctionCase,
    pub theta: f64,
    /// Rounds requested by the caller; regret is accounted over these.
    pub t_requested: u64,
    /// Rounds actually simulated: `t_requested` rounded up to a multiple of
    /// `K·L`, with zero-reward padding rounds at the tail.
    pub t_padded: u64,
    /// Number of blocks, `t_padded / (K·L)`.
    pub blocks: u64,
    /// Rounds per block for the single-level variants; outer block count
    /// factor for the nested ones.
    pub k: u64,
    /// Inner block length (1 for the single-level variants).
    pub l: u64,
    /// Gradient step size.
    pub eta: f64,
    /// Pseudo-projection tolerance.
    pub eps: f64,
    /// Smoothing radius (0 for the unsmoothed variants).
    pub delta: f64,
}

impl Schedule {
    /// Builds the schedule for `variant`/`case` at exponent `theta` over
    /// `horizon` rounds.
    ///
    /// `bound_g` is the oracle bound entering the semi-bandit tolerance
    /// (the gradient bound G); the other variants derive their tolerances
    /// from `K`, `η`, and `δ` alone and ignore it.
    pub fn new(
        variant: Variant,
        case: FunctionCase,
        theta: f64,
        horizon: u64,
        bound_g: f64,
    ) -> Result<Self, AgentError> {
        if horizon == 0 {
            return Err(AgentError::InvalidInput(
                "horizon must be at least one round".into(),
            ));
        }
        if !theta.is_finite() || theta < 0.0 || theta > variant.max_theta() {
            return Err(AgentError::ThetaOutOfRange {
                variant,
                theta,
                max: variant.max_theta(),
            });
        }
        if !variant.supports_case(case) {
            return Err(AgentError::IncompatibleCase { variant, case });
        }
        if bound_g < 0.0 || !bound_g.is_finite() {
            return Err(AgentError::InvalidInput(format!(
                "oracle bound must be a finite non-negative scalar, got {bound_g}"
            )));
        }

        let t = horizon as f64;
        let (k, l, eta, eps, delta) = match variant {
            Variant::FirstOrder => {
                let k = ceil_power(t, 1.0 - theta);
                let eta = 1.0 / ((k as f64) * t).sqrt();
                let eps = (k as f64) * (k as f64) * eta * eta;
                (k, 1, eta, eps, 0.0)
            }
            Variant::Bandit | Variant::ZerothOrder => {
                let k = ceil_power(t, 1.0 - theta);
                let delta = t.powf(-theta / 4.0);
                let eta = delta / ((k as f64) * t).sqrt();
                let eps = (k as f64) * (k as f64) * eta * eta / (delta * delta);
                (k, 1, eta, eps, delta)
            }
            Variant::SemiBandit => {
                let k = ceil_power(t, 1.0 - 1.5 * theta);
                let l = ceil_power(t, 0.5 * theta);
                let eta = t.powf(theta - 1.0);
                let eps = (k as f64) * (k as f64) * eta * eta * bound_g * bound_g;
                (k, l, eta, eps, 0.0)
            }
            Variant::BanditBlocked => {
                let k = ceil_power(t, 1.0 - 1.25 * theta);
                let delta = t.powf(-theta / 4.0);
                let l = ceil_power(t, 0.25 * theta);
                let eta = t.powf(0.5 * theta - 1.0);
                let eps = (k as f64) * (k as f64) * eta * eta / (delta * delta);
                (k, l, eta, eps, delta)
            }
        };

        let block_len = k * l;
        let blocks = horizon.div_ceil(block_len);
        let t_padded = blocks * block_len;
        Ok(Self {
            variant,
            case,
            theta,
            t_requested: horizon,
            t_padded,
            blocks,
            k,
            l,
            eta,
            eps,
            delta,
        })
    }

    /// Rounds per block.
    pub fn block_len(&self) -> u64 {
        self.k * self.l
    }
}

/// `ceil(t^e)` with a round-to-nearest guard so that exact integer powers
/// (e.g. `10000^0.5`) do not spill over to the next integer through
/// floating-point noise.
fn ceil_power(t: f64, e: f64) -> u64 {
    let v = t.powf(e);
    let nearest = v.round();
    let snapped = if (v - nearest).abs() < 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        v.ceil()
    };
    (snapped as u64).max(1)
}

// ---------------------------------------------------------------------------
// Run inputs and report
// ---------------------------------------------------------------------------

/// Supplies the objective each agent is scored against at each round.
///
/// Implementations must be cheap to index: the driver asks for `(t, agent)`
/// pairs many times per round when computing network-average rewards.
pub trait ObjectiveProvider: Sync {
    fn dim(&self) -> usize;
    /// Objective for round `t` (0-based, `t < t_requested`) and `agent`.
    fn objective(&self, t: u64, agent: usize) -> &Objective;
}

/// Everything a driver needs for one run.
pub struct RunInputs<'a> {
    pub base_body: &'a ConvexBody,
    pub weights: &'a WeightMatrix,
    pub objectives: &'a dyn ObjectiveProvider,
    /// Case descriptor built over the base body.
    pub case_spec: &'a LinearizableSpec,
    pub schedule: Schedule,
    pub noise_sigma: f64,
    /// Clipping bound of the oracle responses (value bound for the
    /// zeroth-order drivers, gradient bound for the first-order ones).
    pub oracle_bound: f64,
    pub master_seed: u64,
    /// Explicit per-agent stream seeds; `None` derives them from
    /// `master_seed` and the agent index. Mainly useful for symmetry tests
    /// that permute the stream assignment across agents.
    pub stream_seeds: Option<&'a [u64]>,
}

/// Everything a run produces.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub variant: Variant,
    pub case: FunctionCase,
    pub schedule: Schedule,
    pub n_agents: usize,
    pub dim: usize,
    pub master_seed: u64,
    pub lambda2: f64,
    pub alpha: f64,
    pub beta: f64,
    /// `rewards[t][i]`: agent i's own objective at its played point,
    /// real (non-padding) rounds only.
    pub rewards: Vec<Vec<f64>>,
    /// `network_rewards[t][i]`: the network-average objective at agent i's
    /// played point — the quantity the regret definition scores.
    pub network_rewards: Vec<Vec<f64>>,
    pub counters: CounterSnapshot,
    /// Whether any query was allowed to differ from the played point.
    pub full_information: bool,
    /// Max over blocks and agents of (residual / residual bound); ≤ 1 when
    /// the residual audit holds with slack to spare.
    pub residual_max_ratio: f64,
    /// Sum over all projections of the per-call LOO budget.
    pub loo_bound_total: f64,
    /// Pseudo-projections that needed the circumscribed-ball pull-back.
    pub clamp_events: u64,
    /// Per-agent mean played point over the final quarter of real rounds.
    pub mean_play_final_quarter: Vec<Vec<f64>>,
}

// ---------------------------------------------------------------------------
// Driver internals
// ---------------------------------------------------------------------------

struct AgentState {
    x: Vec<f64>,
    y_tilde: Vec<f64>,
    rng: ChaCha8Rng,
    /// Σ of oracle contributions within the current block.
    acc: Vec<f64>,
    /// (t, own reward, network reward) for the block's real rounds.
    block_rewards: Vec<(u64, f64, f64)>,
    residual_max_ratio: f64,
    loo_bound_sum: f64,
    clamp_events: u64,
    play_sum: Vec<f64>,
    play_rounds: u64,
    error: Option<AgentError>,
}

/// Applies `f` to every agent state, in parallel when the `parallel`
/// feature is enabled. Results are deterministic either way because every
/// agent owns its random stream and writes only to its own state.
fn for_each_agent<F>(states: &mut [AgentState], f: F)
where
    F: Fn(usize, &mut AgentState) + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        states
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, st)| f(i, st));
    }
    #[cfg(not(feature = "parallel"))]
    for (i, st) in states.iter_mut().enumerate() {
        f(i, st);
    }
}

fn take_first_error(states: &mut [AgentState]) -> Result<(), AgentError> {
    for st in states.iter_mut() {
        if let Some(err) = st.error.take() {
            return Err(err);
        }
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Runs one experiment under `inputs.schedule`, dispatching on the variant.
///
/// The returned report is a pure function of the inputs: every agent draws
/// from a stream derived from `master_seed` and its index, so worker count
/// does not affect a single bit of the output.
pub fn run_schedule(inputs: &RunInputs<'_>) -> Result<RunReport, AgentError> {
    let sched = inputs.schedule;
    let n = inputs.weights.n_nodes();
    let d = inputs.base_body.dim();
    if inputs.case_spec.dim() != d {
        return Err(AgentError::DimensionMismatch(format!(
            "case descriptor has dim {}, body has {d}",
            inputs.case_spec.dim()
        )));
    }
    if inputs.objectives.dim() != d {
        return Err(AgentError::DimensionMismatch(format!(
            "objective provider has dim {}, body has {d}",
            inputs.objectives.dim()
        )));
    }
    if inputs.case_spec.case != sched.case {
        return Err(AgentError::InvalidInput(format!(
            "schedule case {} does not match descriptor case {}",
            sched.case, inputs.case_spec.case
        )));
    }

    let oracle = QueryOracle::new(
        sched.variant.oracle_order(),
        inputs.noise_sigma,
        inputs.oracle_bound,
    )?;

    // Working set: the base body, δ-shrunk for the smoothed variants.
    let shrunk: Option<ShrunkBody> = if sched.variant.uses_smoothing() {
        Some(inputs.base_body.shrink(sched.delta)?)
    } else {
        None
    };
    let working: &dyn FeasibleSet = match &shrunk {
        Some(s) => s,
        None => inputs.base_body,
    };

    let basis = inputs.base_body.span_basis();
    let smoothing_dim = inputs.base_body.affine_dim();
    // Single-response norm bound G: the clipped oracle bound for gradient
    // feedback, (k/δ)·B₀ for one-point estimates from value feedback.
    let g_single = match sched.variant.oracle_order() {
        OracleOrder::Gradient => inputs.oracle_bound,
        OracleOrder::Value => smoothing_dim as f64 / sched.delta * inputs.oracle_bound,
    };
    let residual_bound =
        2.0 * (3.0 * sched.eps).sqrt() + 2.0 * sched.eta * sched.k as f64 * g_single;

    let counters = Counters::new();
    let zero_objective = Objective::zero(d);
    let t_req = sched.t_requested;
    let final_quarter_from = 3 * t_req / 4;
    let trivial_query = match sched.variant {
        Variant::FirstOrder => sched.case == FunctionCase::MonotoneGeneral,
        Variant::Bandit | Variant::SemiBandit | Variant::BanditBlocked => true,
        Variant::ZerothOrder => false,
    };
    // Containment slack: δ-perturbed points may poke out of the base set by
    // the smoothing radius; everything else must be feasible up to rounding.
    let exact_slack = 2.0 * FEASIBILITY_TOL;
    let smoothed_slack = sched.delta * (1.0 + 1e-9) + 2.0 * FEASIBILITY_TOL;

    if let Some(streams) = inputs.stream_seeds {
        if streams.len() != n {
            return Err(AgentError::InvalidInput(format!(
                "{} stream seeds supplied for {n} agents",
                streams.len()
            )));
        }
    }
    let mut states: Vec<AgentState> = (0..n)
        .map(|i| AgentState {
            x: working.center().to_vec(),
            y_tilde: working.center().to_vec(),
            rng: ChaCha8Rng::seed_from_u64(match inputs.stream_seeds {
                Some(streams) => streams[i],
                None => derive_seed(inputs.master_seed, i as u64),
            }),
            acc: vec![0.0; d],
            block_rewards: Vec::with_capacity(sched.block_len() as usize),
            residual_max_ratio: 0.0,
            loo_bound_sum: 0.0,
            clamp_events: 0,
            play_sum: vec![0.0; d],
            play_rounds: 0,
            error: None,
        })
        .collect();

    let mut rewards = vec![vec![0.0; n]; t_req as usize];
    let mut network_rewards = vec![vec![0.0; n]; t_req as usize];

    let block_len = sched.block_len();
    for m in 0..sched.blocks {
        let t0 = m * block_len;

        // Phase A: every agent simulates the block's rounds independently.
        for_each_agent(&mut states, |agent, st| {
            if st.error.is_some() {
                return;
            }
            st.acc.iter_mut().for_each(|a| *a = 0.0);
            st.block_rewards.clear();
            'inner: for q in 0..sched.k {
                let query_slot = if sched.l > 1 {
                    st.rng.gen_range(0..sched.l)
                } else {
                    0
                };
                for r in 0..sched.l {
                    let t = t0 + q * sched.l + r;
                    let objective = if t < t_req {
                        inputs.objectives.objective(t, agent)
                    } else {
                        &zero_objective
                    };
                    let is_query_round = r == query_slot;

                    // Round policy: the played point, the queried point (if
                    // any), the accumulator contribution, and whether the
                    // points carry a δ perturbation.
                    let (played, queried, contribution, smoothed) = match sched.variant {
                        Variant::FirstOrder => {
                            let played = inputs.case_spec.playing_map(&st.x);
                            match inputs.case_spec.boosted_query(
                                &oracle,
                                objective,
                                &st.x,
                                &mut st.rng,
                                &counters,
                            ) {
                                Ok(b) => (played, Some(b.query_point), Some(b.sample), false),
                                Err(e) => {
                                    st.error = Some(e.into());
                                    break 'inner;
                                }
                            }
                        }
                        Variant::Bandit => {
                            let v = basis.sample_sphere(&mut st.rng);
                            let played: Vec<f64> =
                                st.x.iter()
                                    .zip(&v)
                                    .map(|(xi, vi)| xi + sched.delta * vi)
                                    .collect();
                            let o = oracle.query_value(objective, &played, &mut st.rng, &counters);
                            let est = one_point_grad(o, &v, smoothing_dim, sched.delta);
                            (played.clone(), Some(played), Some(est), true)
                        }
                        Variant::SemiBandit => {
                            if is_query_round {
                                let w = inputs.case_spec.sample_query_point(&st.x, &mut st.rng);
                                let g =
                                    oracle.query_gradient(objective, &w, &mut st.rng, &counters);
                                (w.clone(), Some(w), Some(g), false)
                            } else {
                                (inputs.case_spec.playing_map(&st.x), None, None, false)
                            }
                        }
                        Variant::ZerothOrder => {
                            let played = inputs.case_spec.playing_map(&st.x);
                            let w = inputs.case_spec.sample_query_point(&st.x, &mut st.rng);
                            let v = basis.sample_sphere(&mut st.rng);
                            let query: Vec<f64> = w
                                .iter()
                                .zip(&v)
                                .map(|(wi, vi)| wi + sched.delta * vi)
                                .collect();
                            let o = oracle.query_value(objective, &query, &mut st.rng, &counters);
                            let est = one_point_grad(o, &v, smoothing_dim, sched.delta);
                            (played, Some(query), Some(est), true)
                        }
                        Variant::BanditBlocked => {
                            if is_query_round {
                                let w = inputs.case_spec.sample_query_point(&st.x, &mut st.rng);
                                let v = basis.sample_sphere(&mut st.rng);
                                let query: Vec<f64> = w
                                    .iter()
                                    .zip(&v)
                                    .map(|(wi, vi)| wi + sched.delta * vi)
                                    .collect();
                                let o =
                                    oracle.query_value(objective, &query, &mut st.rng, &counters);
                                let est = one_point_grad(o, &v, smoothing_dim, sched.delta);
                                (query.clone(), Some(query), Some(est), true)
                            } else {
                                (inputs.case_spec.playing_map(&st.x), None, None, true)
                            }
                        }
                    };

                    // Audit: bandit-feedback variants must query exactly
                    // where they play.
                    if trivial_query {
                        if let Some(qp) = &queried {
                            if qp != &played {
                                st.error = Some(AgentError::TrivialQueryViolated { agent, t });
                                break 'inner;
                            }
                        }
                    }

                    // Audit: containment in the base set.
                    let slack = if smoothed {
                        smoothed_slack
                    } else {
                        exact_slack
                    };
                    let mut violation = inputs.base_body.violation(&played);
                    if let Some(qp) = &queried {
                        violation = violation.max(inputs.base_body.violation(qp));
                    }
                    if violation > slack {
                        st.error = Some(AgentError::ContainmentViolated {
                            agent,
                            t,
                            violation,
                            slack,
                        });
                        break 'inner;
                    }

                    if let Some(o) = contribution {
                        for (a, oi) in st.acc.iter_mut().zip(&o) {
                            *a += oi;
                        }
                    }

                    if t < t_req {
                        let own = objective.value(&played);
                        let mut net = 0.0;
                        for j in 0..n {
                            net += inputs.objectives.objective(t, j).value(&played);
                        }
                        net /= n as f64;
                        st.block_rewards.push((t, own, net));
                        if t >= final_quarter_from {
                            for (s, p) in st.play_sum.iter_mut().zip(&played) {
                                *s += p;
                            }
                            st.play_rounds += 1;
                        }
                    }
                }
            }
        });
        take_first_error(&mut states)?;

        for (i, st) in states.iter().enumerate() {
            for &(t, own, net) in &st.block_rewards {
                rewards[t as usize][i] = own;
                network_rewards[t as usize][i] = net;
            }
        }

        // Phase B: one communication round mixes the concatenated (x, ỹ).
        let stacked: Vec<Vec<f64>> = states
            .iter()
            .map(|st| {
                let mut s = Vec::with_capacity(2 * d);
                s.extend_from_slice(&st.x);
                s.extend_from_slice(&st.y_tilde);
                s
            })
            .collect();
        let mixed = inputs.weights.gossip(&stacked, &counters)?;

        // Phase C: ascent step and pseudo-projection, per agent.
        let eta = sched.eta;
        let eps = sched.eps;
        for_each_agent(&mut states, |agent, st| {
            if st.error.is_some() {
                return;
            }
            let mixed_x = &mixed[agent][..d];
            let mixed_y_tilde = &mixed[agent][d..];
            let y_next: Vec<f64> = mixed_y_tilde
                .iter()
                .zip(&st.acc)
                .map(|(yt, a)| yt + eta * a)
                .collect();
            st.loo_bound_sum += loo_call_bound(
                working.radius(),
                eps,
                mixed_x
                    .iter()
                    .zip(&y_next)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum(),
            );
            match infeasible_project(working, mixed_x, &y_next, eps, &counters) {
                Ok(ip) => {
                    let residual: f64 = norm(
                        &ip.y_tilde
                            .iter()
                            .zip(&y_next)
                            .map(|(a, b)| a - b)
                            .collect::<Vec<f64>>(),
                    );
                    if residual > residual_bound * (1.0 + 1e-12) + 1e-12 {
                        st.error = Some(AgentError::ResidualViolated {
                            agent,
                            block: m,
                            residual,
                            bound: residual_bound,
                        });
                        return;
                    }
                    st.residual_max_ratio = st
                        .residual_max_ratio
                        .max(residual / residual_bound.max(f64::MIN_POSITIVE));
                    if ip.clamped {
                        st.clamp_events += 1;
                    }
                    st.x = ip.x_feasible;
                    st.y_tilde = ip.y_tilde;
                }
                Err(e) => st.error = Some(e.into()),
            }
        });
        take_first_error(&mut states)?;
    }

    let mean_play_final_quarter = states
        .iter()
        .map(|st| {
            let c = st.play_rounds.max(1) as f64;
            st.play_sum.iter().map(|s| s / c).collect()
        })
        .collect();
    let residual_max_ratio = states
        .iter()
        .map(|st| st.residual_max_ratio)
        .fold(0.0_f64, f64::max);
    let loo_bound_total = states.iter().map(|st| st.loo_bound_sum).sum();
    let clamp_events = states.iter().map(|st| st.clamp_events).sum();

    Ok(RunReport {
        variant: sched.variant,
        case: sched.case,
        schedule: sched,
        n_agents: n,
        dim: d,
        master_seed: inputs.master_seed,
        lambda2: inputs.weights.lambda2(),
        alpha: inputs.case_spec.alpha,
        beta: inputs.case_spec.beta,
        rewards,
        network_rewards,
        counters: counters.snapshot(),
        full_information: !trivial_query,
        residual_max_ratio,
        loo_bound_total,
        clamp_events,
        mean_play_final_quarter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Topology, WeightMatrix};
    use crate::objective::QueryOracle;

    /// Fixed adversary: one objective for every (t, agent).
    struct Fixed {
        f: Objective,
    }

    impl ObjectiveProvider for Fixed {
        fn dim(&self) -> usize {
            self.f.dim()
        }
        fn objective(&self, _t: u64, _agent: usize) -> &Objective {
            &self.f
        }
    }

    fn cycle_weights(n: usize) -> WeightMatrix {
        let topo = Topology::cycle(n).unwrap();
        crate::network::metropolis_weights(&topo).unwrap()
    }

    fn run_small(
        variant: Variant,
        case: FunctionCase,
        theta: f64,
        horizon: u64,
        sigma: f64,
        f: Objective,
    ) -> Result<RunReport, AgentError> {
        let body = ConvexBody::axis_box(f.dim(), 0.0, 1.0).unwrap();
        let weights = cycle_weights(4);
        let case_spec = LinearizableSpec::for_case(case, 1.0, 1.0, &body).unwrap();
        let order = variant.oracle_order();
        let bound = QueryOracle::bound_for(order, sigma, std::iter::once(&f));
        let schedule = Schedule::new(variant, case, theta, horizon, bound)?;
        let provider = Fixed { f };
        run_schedule(&RunInputs {
            base_body: &body,
            weights: &weights,
            objectives: &provider,
            case_spec: &case_spec,
            schedule,
            noise_sigma: sigma,
            oracle_bound: bound,
            master_seed: 7,
            stream_seeds: None,
        })
    }

    fn monotone_instance(dim: usize, seed: u64) -> Objective {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Objective::random_monotone(dim, 0.0, 1.0, 1.0, &mut rng).unwrap()
    }

    fn nonmonotone_instance(dim: usize, seed: u64) -> Objective {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Objective::random_nonmonotone(dim, 0.0, 1.0, &mut rng).unwrap()
    }

    #[test]
    fn schedule_matches_the_closed_forms() {
        let s = Schedule::new(
            Variant::FirstOrder,
            FunctionCase::MonotoneGeneral,
            1.0,
            10_000,
            1.0,
        )
        .unwrap();
        assert_eq!((s.k, s.l, s.t_padded, s.blocks), (1, 1, 10_000, 10_000));
        assert!((s.eta - 1e-2).abs() < 1e-15);
        assert!((s.eps - 1e-4).abs() < 1e-18);

        let s = Schedule::new(
            Variant::FirstOrder,
            FunctionCase::MonotoneGeneral,
            0.5,
            10_000,
            1.0,
        )
        .unwrap();
        assert_eq!((s.k, s.t_padded, s.blocks), (100, 10_000, 100));
        assert!((s.eta - 1e-3).abs() < 1e-15);
        assert!((s.eps - 1e-2).abs() < 1e-15);
    }

    #[test]
    fn nested_schedules_pad_the_horizon() {
        let g = 3.0;
        let s = Schedule::new(
            Variant::SemiBandit,
            FunctionCase::MonotoneOrigin,
            2.0 / 3.0,
            10_000,
            g,
        )
        .unwrap();
        assert_eq!((s.k, s.l), (1, 22));
        assert_eq!(s.t_padded, 10_010);
        assert_eq!(s.blocks, 455);
        let eta = 10_000f64.powf(2.0 / 3.0 - 1.0);
        assert!((s.eta - eta).abs() < 1e-15);
        assert!((s.eps - eta * eta * g * g).abs() < 1e-15);

        let s = Schedule::new(
            Variant::BanditBlocked,
            FunctionCase::MonotoneOrigin,
            0.8,
            40_000,
            5.0,
        )
        .unwrap();
        assert_eq!((s.k, s.l), (1, 9));
        assert_eq!(s.t_padded, 40_005);
        let delta = 40_000f64.powf(-0.2);
        assert!((s.delta - delta).abs() < 1e-15);
        assert!((s.eta - 40_000f64.powf(-0.6)).abs() < 1e-15);
    }

    #[test]
    fn schedules_reject_out_of_range_exponents() {
        let err = Schedule::new(
            Variant::SemiBandit,
            FunctionCase::MonotoneOrigin,
            0.8,
            1000,
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, AgentError::ThetaOutOfRange { .. }));

        let err = Schedule::new(
            Variant::BanditBlocked,
            FunctionCase::MonotoneOrigin,
            0.9,
            1000,
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, AgentError::ThetaOutOfRange { .. }));

        let err = Schedule::new(
            Variant::FirstOrder,
            FunctionCase::MonotoneGeneral,
            -0.1,
            1000,
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, AgentError::ThetaOutOfRange { .. }));

        let err = Schedule::new(
            Variant::Bandit,
            FunctionCase::MonotoneOrigin,
            0.5,
            1000,
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, AgentError::IncompatibleCase { .. }));

        let err = Schedule::new(
            Variant::FirstOrder,
            FunctionCase::MonotoneGeneral,
            1.0,
            0,
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, AgentError::InvalidInput(_)));
    }

    #[test]
    fn zero_objectives_leave_rewards_and_iterates_flat() {
        let report = run_small(
            Variant::FirstOrder,
            FunctionCase::MonotoneGeneral,
            0.5,
            400,
            0.0,
            Objective::zero(2),
        )
        .unwrap();
        assert!(report
            .rewards
            .iter()
            .all(|row| row.iter().all(|&v| v == 0.0)));
        assert!(report
            .network_rewards
            .iter()
            .all(|row| row.iter().all(|&v| v == 0.0)));
        // With zero gradients the iterates never move off the center.
        for play in &report.mean_play_final_quarter {
            assert!((play[0] - 0.5).abs() < 1e-12 && (play[1] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn counters_are_exact_for_every_variant() {
        let cases = [
            (Variant::FirstOrder, FunctionCase::MonotoneOrigin, 0.5),
            (Variant::Bandit, FunctionCase::MonotoneGeneral, 0.8),
            (Variant::SemiBandit, FunctionCase::MonotoneOrigin, 0.6),
            (Variant::ZerothOrder, FunctionCase::NonmonotoneGeneral, 0.8),
            (Variant::BanditBlocked, FunctionCase::MonotoneOrigin, 0.8),
        ];
        for (variant, case, theta) in cases {
            let f = if case == FunctionCase::NonmonotoneGeneral {
                nonmonotone_instance(2, 5)
            } else {
                monotone_instance(2, 5)
            };
            let report = run_small(variant, case, theta, 600, 0.1, f).unwrap();
            let s = report.schedule;
            assert_eq!(
                report.counters.comm_rounds,
                s.t_padded / (s.k * s.l),
                "{variant}: communication counter"
            );
            assert_eq!(
                report.counters.oracle_queries,
                (s.t_padded / s.l) * report.n_agents as u64,
                "{variant}: query counter"
            );
            assert!(report.counters.loo_calls as f64 <= report.loo_bound_total);
            assert!(report.residual_max_ratio <= 1.0 + 1e-12, "{variant}");
        }
    }

    #[test]
    fn single_communication_round_when_block_spans_the_horizon() {
        let report = run_small(
            Variant::FirstOrder,
            FunctionCase::MonotoneGeneral,
            0.0,
            512,
            0.0,
            monotone_instance(2, 9),
        )
        .unwrap();
        assert_eq!(report.schedule.k, 512);
        assert_eq!(report.counters.comm_rounds, 1);
    }

    #[test]
    fn full_information_flag_tracks_the_feedback_model() {
        let fi = [
            (Variant::FirstOrder, FunctionCase::MonotoneOrigin, 0.5, true),
            (
                Variant::FirstOrder,
                FunctionCase::MonotoneGeneral,
                0.5,
                false,
            ),
            (Variant::Bandit, FunctionCase::MonotoneGeneral, 0.8, false),
            (
                Variant::SemiBandit,
                FunctionCase::MonotoneOrigin,
                0.6,
                false,
            ),
            (
                Variant::ZerothOrder,
                FunctionCase::MonotoneOrigin,
                0.8,
                true,
            ),
            (
                Variant::BanditBlocked,
                FunctionCase::MonotoneOrigin,
                0.8,
                false,
            ),
        ];
        for (variant, case, theta, expect) in fi {
            let report =
                run_small(variant, case, theta, 300, 0.0, monotone_instance(2, 3)).unwrap();
            assert_eq!(report.full_information, expect, "{variant}");
        }
    }

    #[test]
    fn identical_seeds_reproduce_identical_reports() {
        let a = run_small(
            Variant::ZerothOrder,
            FunctionCase::MonotoneOrigin,
            0.8,
            500,
            0.2,
            monotone_instance(2, 13),
        )
        .unwrap();
        let b = run_small(
            Variant::ZerothOrder,
            FunctionCase::MonotoneOrigin,
            0.8,
            500,
            0.2,
            monotone_instance(2, 13),
        )
        .unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn worker_count_does_not_change_a_single_bit() {
        let run = || {
            run_small(
                Variant::SemiBandit,
                FunctionCase::NonmonotoneGeneral,
                0.6,
                600,
                0.15,
                nonmonotone_instance(2, 17),
            )
            .unwrap()
        };
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(run);
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(8)
            .build()
            .unwrap()
            .install(run);
        assert_eq!(
            serde_json::to_string(&single).unwrap(),
            serde_json::to_string(&many).unwrap()
        );
    }

    #[test]
    fn lone_agent_converges_to_the_interior_maximizer() {
        // f(x) = <0.6·1, x> - ||x||²/2 has its maximum at 0.6·1, strictly
        // inside the unit box.
        let f = Objective::quadratic(vec![0.6, 0.6], vec![-1.0, 0.0, 0.0, -1.0], 1.0, 0.0, 1.0)
            .unwrap();
        let body = ConvexBody::axis_box(2, 0.0, 1.0).unwrap();
        let topo = Topology::complete(1).unwrap();
        let weights = crate::network::metropolis_weights(&topo).unwrap();
        let case_spec =
            LinearizableSpec::for_case(FunctionCase::MonotoneGeneral, 1.0, 1.0, &body).unwrap();
        let bound = QueryOracle::bound_for(OracleOrder::Gradient, 0.0, std::iter::once(&f));
        let schedule = Schedule::new(
            Variant::FirstOrder,
            FunctionCase::MonotoneGeneral,
            1.0,
            2000,
            bound,
        )
        .unwrap();
        let provider = Fixed { f };
        let report = run_schedule(&RunInputs {
            base_body: &body,
            weights: &weights,
            objectives: &provider,
            case_spec: &case_spec,
            schedule,
            noise_sigma: 0.0,
            oracle_bound: bound,
            master_seed: 1,
            stream_seeds: None,
        })
        .unwrap();
        let play = &report.mean_play_final_quarter[0];
        let dist = ((play[0] - 0.6).powi(2) + (play[1] - 0.6).powi(2)).sqrt();
        assert!(
            dist <= 0.05,
            "final-quarter mean play {play:?} is {dist} away"
        );
    }

    #[test]
    fn oversized_smoothing_radius_is_rejected() {
        // θ = 1 at a tiny horizon gives δ = 3^{-1/4} ≈ 0.76, exceeding the
        // unit box's interior radius of 0.5.
        let err = run_small(
            Variant::Bandit,
            FunctionCase::MonotoneGeneral,
            1.0,
            3,
            0.0,
            monotone_instance(2, 2),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            AgentError::Geometry(GeometryError::DeltaTooLarge { .. })
        ));
    }

    #[test]
    fn semibandit_queries_exactly_one_round_per_inner_block() {
        let report = run_small(
            Variant::SemiBandit,
            FunctionCase::MonotoneOrigin,
            0.6,
            700,
            0.0,
            monotone_instance(2, 8),
        )
        .unwrap();
        let s = report.schedule;
        assert!(s.l > 1, "schedule should have a nontrivial inner block");
        assert_eq!(
            report.counters.oracle_queries,
            (s.t_padded / s.l) * report.n_agents as u64
        );
    }

    #[test]
    fn mean_rewards_match_network_rewards_under_a_fixed_adversary() {
        let report = run_small(
            Variant::FirstOrder,
            FunctionCase::MonotoneOrigin,
            0.5,
            300,
            0.1,
            monotone_instance(2, 30),
        )
        .unwrap();
        for (own_row, net_row) in report.rewards.iter().zip(&report.network_rewards) {
            for (own, net) in own_row.iter().zip(net_row) {
                assert!((own - net).abs() < 1e-12);
            }
        }
    }
}
