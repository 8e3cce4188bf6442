//! Experiment orchestration.
//!
//! This module turns a JSON config into a full run: it builds the network,
//! the feasible set, the adversary's objective sequence, and the schedule,
//! dispatches to the driver, computes the offline comparator and per-agent
//! regret curves, and emits one CSV (per-round rows) plus one JSON summary
//! per run. [`run_sweep`] repeats [`run_experiment`] over a grid of
//! block-length exponents and horizons and fits the log–log scaling of
//! regret and of the communication/query/LOO counters.
//!
//! Everything is deterministic: a run is a pure function of the config and
//! the master seed, and the run id is a stable hash of both, so repeated
//! invocations overwrite their own files with identical bytes.

pub mod verify;

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    run_schedule, AgentError, ObjectiveProvider, RunInputs, RunReport, Schedule, Variant,
};
use crate::geometry::{BodyConfig, ConvexBody, FeasibleSet, GeometryError};
use crate::network::{metropolis_weights, NetworkError, Topology, TopologyConfig, WeightMatrix};
use crate::objective::{
    FunctionCase, LinearizableSpec, Objective, ObjectiveError, OracleOrder, QueryOracle,
};
use crate::{derive_seed, Counters};

/// Exact header line of every emitted CSV.
pub const CSV_HEADER: &str = "run_id,variant,case,theta,T,K,L,eta,eps,delta,N,agent,t,reward,\
                              cum_regret,comm_count,loo_count,query_count,seed";

/// Default lattice subdivisions per axis for the grid comparator.
pub const GRID_DIVISIONS: usize = 200;

/// Ascent steps of the Frank-Wolfe comparator fallback.
pub const COMPARATOR_FW_STEPS: usize = 10_000;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum HarnessError {
    /// A config field failed validation; the message names the field.
    #[error("invalid config: {0}")]
    ConfigInvalid(String),

    /// The comparator lattice is too coarse relative to the body.
    #[error("comparator grid spacing {spacing} exceeds a quarter of the interior radius {radius}")]
    ResolutionTooCoarse { spacing: f64, radius: f64 },

    #[error("agent {agent} out of range for {n_agents} agents")]
    AgentOutOfRange { agent: usize, n_agents: usize },

    /// Slope fits need at least four geometrically spaced horizons.
    #[error("slope fit needs at least 4 horizon points, got {0}")]
    TooFewPoints(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Agent(#[from] AgentError),

    #[error(transparent)]
    Geometry(#[from] GeometryError),

    #[error(transparent)]
    Network(#[from] NetworkError),

    #[error(transparent)]
    Objective(#[from] ObjectiveError),

    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization failure: {0}")]
    Json(#[from] serde_json::Error),
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

/// Objective-family block of the config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    /// Only `"quadratic"` is shipped.
    pub family: String,
    /// Seed of the pool-generation stream.
    pub seed: u64,
    /// Whether the pool is drawn from the monotone generator.
    pub monotone: bool,
    /// Weak-DR exponent of the pool (must be 1 for non-monotone pools).
    pub gamma: f64,
    /// Standard deviation of the oracle noise before clipping.
    pub noise_sigma: f64,
    /// 0 = value oracle, 1 = gradient oracle; must match the variant.
    pub oracle_order: u8,
    /// Curvature entering the monotone-general approximation factor.
    #[serde(default = "default_curvature")]
    pub curvature: f64,
}

fn default_curvature() -> f64 {
    1.0
}

/// How the adversary assigns pool members to (round, agent) slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversaryKind {
    /// One objective for every slot.
    Fixed,
    /// Cycles through the pool by round index.
    Rotating,
    /// Draws i.i.d. from the pool per slot.
    Stochastic,
}

impl fmt::Display for AdversaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            AdversaryKind::Fixed => "fixed",
            AdversaryKind::Rotating => "rotating",
            AdversaryKind::Stochastic => "stochastic",
        };
        f.write_str(name)
    }
}

/// Adversary block of the config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdversaryConfig {
    pub kind: AdversaryKind,
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    /// Stream seed of the stochastic slot assignment.
    #[serde(default)]
    pub seed: u64,
}

fn default_pool_size() -> usize {
    1
}

/// Algorithm block of the config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlgorithmConfig {
    pub variant: Variant,
    pub case: FunctionCase,
    pub theta: f64,
    #[serde(rename = "T")]
    pub horizon: u64,
}

/// Seed block of the config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedsConfig {
    pub master: u64,
}

/// Complete experiment description, deserialized from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub network: TopologyConfig,
    pub body: BodyConfig,
    pub objective: ObjectiveConfig,
    pub adversary: AdversaryConfig,
    pub algorithm: AlgorithmConfig,
    pub seeds: SeedsConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Field-level checks that do not require building anything.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |msg: String| Err(HarnessError::ConfigInvalid(msg));
        if self.objective.family != "quadratic" {
            return invalid(format!(
                "objective.family: only \"quadratic\" is available, got {:?}",
                self.objective.family
            ));
        }
        let order = OracleOrder::try_from(self.objective.oracle_order).map_err(|_| {
            HarnessError::ConfigInvalid(format!(
                "objective.oracle_order: must be 0 (value) or 1 (gradient), got {}",
                self.objective.oracle_order
            ))
        })?;
        let required = self.algorithm.variant.oracle_order();
        if order != required {
            return invalid(format!(
                "objective.oracle_order: the {} driver needs a {} oracle (oracle_order = {})",
                self.algorithm.variant,
                match required {
                    OracleOrder::Value => "value",
                    OracleOrder::Gradient => "gradient",
                },
                u8::from(required),
            ));
        }
        if !self.objective.monotone
            && matches!(
                self.algorithm.case,
                FunctionCase::MonotoneGeneral | FunctionCase::MonotoneOrigin
            )
        {
            return invalid(format!(
                "objective.monotone: the {} case requires a monotone pool",
                self.algorithm.case
            ));
        }
        if !self.objective.monotone && self.objective.gamma != 1.0 {
            return invalid(format!(
                "objective.gamma: the non-monotone generator is exact only at gamma = 1, got {}",
                self.objective.gamma
            ));
        }
        if !self.objective.noise_sigma.is_finite() || self.objective.noise_sigma < 0.0 {
            return invalid(format!(
                "objective.noise_sigma: must be finite and non-negative, got {}",
                self.objective.noise_sigma
            ));
        }
        if self.adversary.pool_size == 0 {
            return invalid("adversary.pool_size: must be at least 1".into());
        }
        if self.adversary.kind == AdversaryKind::Fixed && self.adversary.pool_size != 1 {
            return invalid(format!(
                "adversary.pool_size: the fixed adversary uses a single objective, got {}",
                self.adversary.pool_size
            ));
        }
        Ok(())
    }

    /// Builds every immutable piece of the experiment.
    pub fn prepare(&self) -> Result<Prepared, HarnessError> {
        self.validate()?;
        let topology = self.network.build()?;
        let weights = metropolis_weights(&topology)?;
        let body = ConvexBody::from_config(&self.body)?;
        let (lo, hi) = (body.coordinate_min(), body.coordinate_max());
        let mut pool_rng = ChaCha8Rng::seed_from_u64(self.objective.seed);
        let pool: Vec<Objective> = (0..self.adversary.pool_size)
            .map(|_| {
                if self.objective.monotone {
                    Objective::random_monotone(
                        body.dim(),
                        lo,
                        hi,
                        self.objective.gamma,
                        &mut pool_rng,
                    )
                } else {
                    Objective::random_nonmonotone(body.dim(), lo, hi, &mut pool_rng)
                }
            })
            .collect::<Result<_, _>>()?;
        let adversary = Adversary::new(
            self.adversary.kind,
            pool,
            topology.n_nodes(),
            self.adversary.seed,
        )?;
        let case_spec = LinearizableSpec::for_case(
            self.algorithm.case,
            self.objective.gamma,
            self.objective.curvature,
            &body,
        )?;
        let oracle_bound = QueryOracle::bound_for(
            self.algorithm.variant.oracle_order(),
            self.objective.noise_sigma,
            adversary.pool(),
        );
        let schedule = Schedule::new(
            self.algorithm.variant,
            self.algorithm.case,
            self.algorithm.theta,
            self.algorithm.horizon,
            oracle_bound,
        )?;
        Ok(Prepared {
            topology,
            weights,
            body,
            adversary,
            case_spec,
            schedule,
            oracle_bound,
        })
    }
}

/// The built experiment pieces, ready to run.
pub struct Prepared {
    pub topology: Topology,
    pub weights: WeightMatrix,
    pub body: ConvexBody,
    pub adversary: Adversary,
    pub case_spec: LinearizableSpec,
    pub schedule: Schedule,
    pub oracle_bound: f64,
}

// ---------------------------------------------------------------------------
// Adversaries
// ---------------------------------------------------------------------------

/// Assigns one pool objective to every (round, agent) slot.
pub struct Adversary {
    kind: AdversaryKind,
    pool: Vec<Objective>,
    n_agents: usize,
    seed: u64,
    dim: usize,
}

impl Adversary {
    pub fn new(
        kind: AdversaryKind,
        pool: Vec<Objective>,
        n_agents: usize,
        seed: u64,
    ) -> Result<Self, HarnessError> {
        if pool.is_empty() {
            return Err(HarnessError::InvalidArgument(
                "adversary pool must be non-empty".into(),
            ));
        }
        if n_agents == 0 {
            return Err(HarnessError::InvalidArgument(
                "adversary needs at least one agent".into(),
            ));
        }
        let dim = pool[0].dim();
        if pool.iter().any(|f| f.dim() != dim) {
            return Err(HarnessError::InvalidArgument(
                "adversary pool mixes objective dimensions".into(),
            ));
        }
        Ok(Self {
            kind,
            pool,
            n_agents,
            seed,
            dim,
        })
    }

    pub fn kind(&self) -> AdversaryKind {
        self.kind
    }

    pub fn pool(&self) -> &[Objective] {
        &self.pool
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    /// Pool index served at slot `(t, agent)`.
    fn pool_index(&self, t: u64, agent: usize) -> usize {
        match self.kind {
            AdversaryKind::Fixed => 0,
            AdversaryKind::Rotating => (t % self.pool.len() as u64) as usize,
            AdversaryKind::Stochastic => {
                let slot = t * self.n_agents as u64 + agent as u64;
                (derive_seed(self.seed, slot) % self.pool.len() as u64) as usize
            }
        }
    }

    /// Fraction of the first `horizon` rounds (over all agents) served by
    /// each pool member; sums to 1.
    pub fn realized_weights(&self, horizon: u64) -> Vec<f64> {
        let mut counts = vec![0u64; self.pool.len()];
        for t in 0..horizon {
            match self.kind {
                AdversaryKind::Fixed => counts[0] += self.n_agents as u64,
                AdversaryKind::Rotating => counts[self.pool_index(t, 0)] += self.n_agents as u64,
                AdversaryKind::Stochastic => {
                    for i in 0..self.n_agents {
                        counts[self.pool_index(t, i)] += 1;
                    }
                }
            }
        }
        let total = (horizon * self.n_agents as u64) as f64;
        counts.iter().map(|&c| c as f64 / total).collect()
    }

    /// Network-average objective value at `u` for each of the first
    /// `horizon` rounds — the comparator's per-round reward.
    pub fn per_round_network_value(&self, u: &[f64], horizon: u64) -> Vec<f64> {
        let pool_values: Vec<f64> = self.pool.iter().map(|f| f.value(u)).collect();
        (0..horizon)
            .map(|t| {
                let sum: f64 = (0..self.n_agents)
                    .map(|i| pool_values[self.pool_index(t, i)])
                    .sum();
                sum / self.n_agents as f64
            })
            .collect()
    }
}

impl ObjectiveProvider for Adversary {
    fn dim(&self) -> usize {
        self.dim
    }

    fn objective(&self, t: u64, agent: usize) -> &Objective {
        &self.pool[self.pool_index(t, agent)]
    }
}

// ---------------------------------------------------------------------------
// Offline comparator
// ---------------------------------------------------------------------------

/// How the comparator point was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparatorMode {
    /// Exhaustive lattice search with one local refinement (dim ≤ 3).
    Grid,
    /// Frank-Wolfe ascent from the center; a certified lower bound only.
    FrankWolfe,
}

/// The best fixed point in hindsight and its per-round values.
#[derive(Debug, Clone, Serialize)]
pub struct Comparator {
    pub u_star: Vec<f64>,
    pub mode: ComparatorMode,
    /// Horizon-averaged network value at `u_star`.
    pub mean_value: f64,
    /// Network value at `u_star` per round (length = horizon).
    #[serde(skip)]
    pub value_per_round: Vec<f64>,
}

/// The horizon-averaged objective: a single quadratic because the family is
/// closed under convex combinations.
struct Mixture {
    dim: usize,
    linear: Vec<f64>,
    quad: Vec<f64>,
    constant: f64,
}

impl Mixture {
    fn new(adversary: &Adversary, horizon: u64) -> Self {
        let dim = adversary.dim();
        let weights = adversary.realized_weights(horizon);
        let mut linear = vec![0.0; dim];
        let mut quad = vec![0.0; dim * dim];
        let mut constant = 0.0;
        for (w, f) in weights.iter().zip(adversary.pool()) {
            for (acc, a) in linear.iter_mut().zip(f.linear_coefficients()) {
                *acc += w * a;
            }
            for (acc, h) in quad.iter_mut().zip(f.interaction_coefficients()) {
                *acc += w * h;
            }
            constant += w * f.offset();
        }
        Self {
            dim,
            linear,
            quad,
            constant,
        }
    }

    fn value(&self, u: &[f64]) -> f64 {
        let mut v = self.constant;
        for i in 0..self.dim {
            v += self.linear[i] * u[i];
            let row = &self.quad[i * self.dim..(i + 1) * self.dim];
            let hu: f64 = row.iter().zip(u).map(|(h, uj)| h * uj).sum();
            v += 0.5 * u[i] * hu;
        }
        v
    }

    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| {
                let row = &self.quad[i * self.dim..(i + 1) * self.dim];
                self.linear[i] + row.iter().zip(u).map(|(h, uj)| h * uj).sum::<f64>()
            })
            .collect()
    }
}

/// Finds the best fixed point in hindsight over the realized sequence.
///
/// Bodies of dimension ≤ 3 are searched exhaustively on a lattice of the
/// given spacing (then refined once locally at a tenth of the spacing);
/// higher dimensions fall back to Frank-Wolfe ascent, whose result is a
/// lower bound on the true comparator value and is flagged as such.
pub fn offline_best(
    adversary: &Adversary,
    horizon: u64,
    body: &ConvexBody,
    spacing: f64,
) -> Result<Comparator, HarnessError> {
    let mode = if body.dim() <= 3 {
        ComparatorMode::Grid
    } else {
        ComparatorMode::FrankWolfe
    };
    offline_best_with_mode(adversary, horizon, body, spacing, mode)
}

/// [`offline_best`] with the search mode forced; used to cross-validate the
/// two modes against each other.
pub fn offline_best_with_mode(
    adversary: &Adversary,
    horizon: u64,
    body: &ConvexBody,
    spacing: f64,
    mode: ComparatorMode,
) -> Result<Comparator, HarnessError> {
    if horizon == 0 {
        return Err(HarnessError::InvalidArgument(
            "comparator needs at least one round".into(),
        ));
    }
    if adversary.dim() != body.dim() {
        return Err(HarnessError::InvalidArgument(format!(
            "adversary dim {} does not match body dim {}",
            adversary.dim(),
            body.dim()
        )));
    }
    let mixture = Mixture::new(adversary, horizon);
    let u_star = match mode {
        ComparatorMode::Grid => grid_argmax(&mixture, body, spacing)?,
        ComparatorMode::FrankWolfe => frank_wolfe_argmax(&mixture, body),
    };
    let value_per_round = adversary.per_round_network_value(&u_star, horizon);
    let mean_value = value_per_round.iter().sum::<f64>() / horizon as f64;
    Ok(Comparator {
        u_star,
        mode,
        mean_value,
        value_per_round,
    })
}

fn grid_argmax(
    mixture: &Mixture,
    body: &ConvexBody,
    spacing: f64,
) -> Result<Vec<f64>, HarnessError> {
    if spacing <= 0.0 || !spacing.is_finite() {
        return Err(HarnessError::InvalidArgument(format!(
            "grid spacing must be positive, got {spacing}"
        )));
    }
    if spacing > body.interior_radius() / 4.0 {
        return Err(HarnessError::ResolutionTooCoarse {
            spacing,
            radius: body.interior_radius(),
        });
    }
    let d = body.dim();
    let (lo, hi) = (body.coordinate_min(), body.coordinate_max());
    let steps = ((hi - lo) / spacing).ceil() as usize;
    let cell = (hi - lo) / steps as f64;

    let mut best_value = f64::NEG_INFINITY;
    let mut best = body.center().to_vec();
    let mut point = vec![0.0; d];
    let per_axis = steps + 1;
    let total = per_axis.pow(d as u32);
    for flat in 0..total {
        let mut rest = flat;
        for coord in point.iter_mut() {
            *coord = lo + (rest % per_axis) as f64 * cell;
            rest /= per_axis;
        }
        if body.violation(&point) > 1e-9 {
            continue;
        }
        let v = mixture.value(&point);
        if v > best_value {
            best_value = v;
            best.copy_from_slice(&point);
        }
    }

    // One local refinement: a 21-point-per-axis lattice of a tenth of the
    // cell size around the incumbent.
    let fine = cell / 10.0;
    let coarse_best = best.clone();
    let fine_total = 21usize.pow(d as u32);
    for flat in 0..fine_total {
        let mut rest = flat;
        for (i, coord) in point.iter_mut().enumerate() {
            let offset = (rest % 21) as f64 - 10.0;
            *coord = (coarse_best[i] + offset * fine).clamp(lo, hi);
            rest /= 21;
        }
        if body.violation(&point) > 1e-9 {
            continue;
        }
        let v = mixture.value(&point);
        if v > best_value {
            best_value = v;
            best.copy_from_slice(&point);
        }
    }
    Ok(best)
}

fn frank_wolfe_argmax(mixture: &Mixture, body: &ConvexBody) -> Vec<f64> {
    let scratch = Counters::new();
    let mut x = body.center().to_vec();
    let mut best = x.clone();
    let mut best_value = mixture.value(&x);
    let mut mean = vec![0.0; x.len()];
    for step in 0..COMPARATOR_FW_STEPS {
        let grad = mixture.gradient(&x);
        let vertex = body.loo(&grad, &scratch);
        let gamma = 2.0 / (step as f64 + 2.0);
        for (xi, vi) in x.iter_mut().zip(&vertex) {
            *xi += gamma * (vi - *xi);
        }
        let v = mixture.value(&x);
        if v > best_value {
            best_value = v;
            best.copy_from_slice(&x);
        }
        for (mi, xi) in mean.iter_mut().zip(&x) {
            *mi += xi / COMPARATOR_FW_STEPS as f64;
        }
    }
    if mixture.value(&mean) > best_value {
        best.copy_from_slice(&mean);
    }
    best
}

// ---------------------------------------------------------------------------
// Regret and scaling fits
// ---------------------------------------------------------------------------

/// Cumulative discounted-comparator regret curve for one agent.
///
/// Entry `t` (0-based) is
/// `alpha · Σ_{s ≤ t} comparator(s) − Σ_{s ≤ t} network_reward(s, agent)`,
/// with the comparator fixed over the full horizon.
pub fn alpha_regret(
    report: &RunReport,
    alpha: f64,
    comparator: &Comparator,
    agent: usize,
) -> Result<Vec<f64>, HarnessError> {
    if agent >= report.n_agents {
        return Err(HarnessError::AgentOutOfRange {
            agent,
            n_agents: report.n_agents,
        });
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(HarnessError::InvalidArgument(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    let horizon = report.schedule.t_requested as usize;
    if comparator.value_per_round.len() != horizon {
        return Err(HarnessError::InvalidArgument(format!(
            "comparator covers {} rounds, report covers {horizon}",
            comparator.value_per_round.len()
        )));
    }
    let mut curve = Vec::with_capacity(horizon);
    let mut cum = 0.0;
    for t in 0..horizon {
        cum += alpha * comparator.value_per_round[t] - report.network_rewards[t][agent];
        curve.push(cum);
    }
    Ok(curve)
}

/// Least-squares fit of `log(value)` against `log(horizon)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Set when any value was below 1 and was clamped before taking logs
    /// (the non-positive-regret fallback).
    pub clamped: bool,
}

/// Fits the scaling exponent of `values` over `horizons`.
///
/// Values below 1 (including non-positive regrets, which a discounted
/// comparator can produce) are clamped to 1 and flagged.
pub fn fit_loglog_slope(horizons: &[u64], values: &[f64]) -> Result<SlopeFit, HarnessError> {
    if horizons.len() != values.len() {
        return Err(HarnessError::InvalidArgument(format!(
            "{} horizons vs {} values",
            horizons.len(),
            values.len()
        )));
    }
    if horizons.len() < 4 {
        return Err(HarnessError::TooFewPoints(horizons.len()));
    }
    if horizons.windows(2).any(|w| w[0] >= w[1]) || horizons[0] == 0 {
        return Err(HarnessError::InvalidArgument(
            "horizons must be positive and strictly increasing".into(),
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(HarnessError::InvalidArgument(
            "values must be finite".into(),
        ));
    }
    let clamped = values.iter().any(|&v| v < 1.0);
    let n = horizons.len() as f64;
    let xs: Vec<f64> = horizons.iter().map(|&h| (h as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|&v| v.max(1.0).ln()).collect();
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x) * (x - mean_x)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let slope = sxy / sxx;
    Ok(SlopeFit {
        slope,
        intercept: mean_y - slope * mean_x,
        clamped,
    })
}

// ---------------------------------------------------------------------------
// Run execution and emission
// ---------------------------------------------------------------------------

/// A completed in-memory run: the report, the comparator, and per-agent
/// regret curves.
pub struct ExecutedRun {
    pub run_id: String,
    pub master_seed: u64,
    pub prepared: Prepared,
    pub report: RunReport,
    pub comparator: Comparator,
    pub regret_curves: Vec<Vec<f64>>,
}

impl ExecutedRun {
    /// Mean over agents of the final cumulative regret.
    pub fn mean_final_regret(&self) -> f64 {
        let sum: f64 = self
            .regret_curves
            .iter()
            .map(|c| *c.last().unwrap_or(&0.0))
            .sum();
        sum / self.regret_curves.len() as f64
    }
}

/// Stable hash of the canonical config serialization and the master seed;
/// doubles as the run id and the output file stem.
fn run_id(config: &ExperimentConfig, master_seed: u64) -> Result<String, HarnessError> {
    let canonical = serde_json::to_string(config)?;
    let mut h = derive_seed(master_seed, 0x9e37_79b9_7f4a_7c15);
    for &b in canonical.as_bytes() {
        h = derive_seed(h, b as u64);
    }
    Ok(format!("{h:016x}"))
}

/// Runs the configured experiment in memory: build, dispatch, comparator,
/// regret curves. No files are touched.
pub fn execute(config: &ExperimentConfig, master_seed: u64) -> Result<ExecutedRun, HarnessError> {
    let prepared = config.prepare()?;
    let report = run_schedule(&RunInputs {
        base_body: &prepared.body,
        weights: &prepared.weights,
        objectives: &prepared.adversary,
        case_spec: &prepared.case_spec,
        schedule: prepared.schedule,
        noise_sigma: config.objective.noise_sigma,
        oracle_bound: prepared.oracle_bound,
        master_seed,
        stream_seeds: None,
    })?;
    let spacing =
        (prepared.body.coordinate_max() - prepared.body.coordinate_min()) / GRID_DIVISIONS as f64;
    let comparator = offline_best(
        &prepared.adversary,
        config.algorithm.horizon,
        &prepared.body,
        spacing,
    )?;
    let alpha = prepared.case_spec.alpha;
    let regret_curves: Vec<Vec<f64>> = (0..report.n_agents)
        .map(|i| alpha_regret(&report, alpha, &comparator, i))
        .collect::<Result<_, _>>()?;
    Ok(ExecutedRun {
        run_id: run_id(config, master_seed)?,
        master_seed,
        prepared,
        report,
        comparator,
        regret_curves,
    })
}

/// Paths produced by [`run_experiment`].
pub struct RunArtifacts {
    pub executed: ExecutedRun,
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
}

/// Summary written next to each CSV.
#[derive(Serialize)]
struct RunSummary<'a> {
    run_id: &'a str,
    master_seed: u64,
    config: &'a ExperimentConfig,
    schedule: Schedule,
    lambda2: f64,
    alpha: f64,
    beta: f64,
    comm_count: u64,
    loo_count: u64,
    query_count: u64,
    full_information: bool,
    residual_max_ratio: f64,
    loo_bound_total: f64,
    clamp_events: u64,
    comparator_mode: ComparatorMode,
    comparator_point: &'a [f64],
    comparator_mean_value: f64,
    final_regret_per_agent: Vec<f64>,
    mean_final_regret: f64,
}

/// Runs the experiment and writes `<run_id>.csv` (one row per agent and
/// round) plus `<run_id>.json` (the run summary) under `out_dir`.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
    master_seed: u64,
) -> Result<RunArtifacts, HarnessError> {
    let executed = execute(config, master_seed)?;
    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(format!("{}.csv", executed.run_id));
    let json_path = out_dir.join(format!("{}.json", executed.run_id));
    write_csv(&csv_path, &executed)?;
    write_summary(&json_path, config, &executed)?;
    Ok(RunArtifacts {
        executed,
        csv_path,
        json_path,
    })
}

fn write_csv(path: &Path, executed: &ExecutedRun) -> Result<(), HarnessError> {
    let report = &executed.report;
    let s = &report.schedule;
    let counters = &report.counters;
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{CSV_HEADER}")?;
    let prefix = format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        executed.run_id,
        s.variant,
        s.case,
        s.theta,
        s.t_requested,
        s.k,
        s.l,
        s.eta,
        s.eps,
        s.delta,
        report.n_agents,
    );
    let suffix = format!(
        "{},{},{},{}",
        counters.comm_rounds, counters.loo_calls, counters.oracle_queries, executed.master_seed,
    );
    for agent in 0..report.n_agents {
        let curve = &executed.regret_curves[agent];
        for (t, curve_t) in curve.iter().enumerate().take(s.t_requested as usize) {
            writeln!(
                out,
                "{prefix},{agent},{},{},{curve_t},{suffix}",
                t + 1,
                report.rewards[t][agent],
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

fn write_summary(
    path: &Path,
    config: &ExperimentConfig,
    executed: &ExecutedRun,
) -> Result<(), HarnessError> {
    let report = &executed.report;
    let final_regret: Vec<f64> = executed
        .regret_curves
        .iter()
        .map(|c| *c.last().unwrap_or(&0.0))
        .collect();
    let summary = RunSummary {
        run_id: &executed.run_id,
        master_seed: executed.master_seed,
        config,
        schedule: report.schedule,
        lambda2: report.lambda2,
        alpha: report.alpha,
        beta: report.beta,
        comm_count: report.counters.comm_rounds,
        loo_count: report.counters.loo_calls,
        query_count: report.counters.oracle_queries,
        full_information: report.full_information,
        residual_max_ratio: report.residual_max_ratio,
        loo_bound_total: report.loo_bound_total,
        clamp_events: report.clamp_events,
        comparator_mode: executed.comparator.mode,
        comparator_point: &executed.comparator.u_star,
        comparator_mean_value: executed.comparator.mean_value,
        mean_final_regret: executed.mean_final_regret(),
        final_regret_per_agent: final_regret,
    };
    fs::write(path, serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// One completed sweep job.
#[derive(Debug, Clone, Serialize)]
pub struct SweepJob {
    pub theta: f64,
    pub horizon: u64,
    pub replicate: u64,
    pub master_seed: u64,
    pub run_id: String,
    pub k: u64,
    pub l: u64,
    pub comm_count: u64,
    pub query_count: u64,
    pub loo_count: u64,
    pub mean_final_regret: f64,
    pub residual_max_ratio: f64,
    pub clamp_events: u64,
}

/// Scaling fits for one exponent across the swept horizons.
#[derive(Debug, Clone, Serialize)]
pub struct ThetaFit {
    pub theta: f64,
    pub horizons: Vec<u64>,
    /// Mean over replicates and agents of the final regret, per horizon.
    pub mean_final_regrets: Vec<f64>,
    pub regret: SlopeFit,
    pub comm: SlopeFit,
    pub query: SlopeFit,
    pub loo: SlopeFit,
}

/// Everything a sweep produces.
#[derive(Serialize)]
pub struct SweepOutcome {
    pub jobs: Vec<SweepJob>,
    /// Present when at least four horizons were swept.
    pub fits: Vec<ThetaFit>,
    #[serde(skip)]
    pub summary_path: PathBuf,
}

/// Runs the full θ × horizon × replicate grid, emits per-run files, and
/// writes `sweep_summary.json` with the per-θ scaling fits.
///
/// Replicate `r` runs with master seed `seeds.master + r`, so sweeps are as
/// reproducible as single runs.
pub fn run_sweep(
    config: &ExperimentConfig,
    thetas: &[f64],
    horizons: &[u64],
    replicates: u64,
    out_dir: &Path,
) -> Result<SweepOutcome, HarnessError> {
    if thetas.is_empty() || horizons.is_empty() || replicates == 0 {
        return Err(HarnessError::InvalidArgument(
            "sweep needs at least one theta, one horizon, and one replicate".into(),
        ));
    }
    let mut jobs = Vec::new();
    let mut fits = Vec::new();
    for &theta in thetas {
        let mut mean_regrets = Vec::with_capacity(horizons.len());
        let mut comms = Vec::with_capacity(horizons.len());
        let mut queries = Vec::with_capacity(horizons.len());
        let mut loos = Vec::with_capacity(horizons.len());
        for &horizon in horizons {
            let mut job_config = config.clone();
            job_config.algorithm.theta = theta;
            job_config.algorithm.horizon = horizon;
            let mut regret_acc = 0.0;
            let mut point = (0, 0, 0, 0, 0);
            for replicate in 0..replicates {
                let master_seed = config.seeds.master + replicate;
                let artifacts = run_experiment(&job_config, out_dir, master_seed)?;
                let run = &artifacts.executed;
                let report = &run.report;
                regret_acc += run.mean_final_regret();
                point = (
                    report.schedule.k,
                    report.schedule.l,
                    report.counters.comm_rounds,
                    report.counters.oracle_queries,
                    report.counters.loo_calls,
                );
                jobs.push(SweepJob {
                    theta,
                    horizon,
                    replicate,
                    master_seed,
                    run_id: run.run_id.clone(),
                    k: report.schedule.k,
                    l: report.schedule.l,
                    comm_count: report.counters.comm_rounds,
                    query_count: report.counters.oracle_queries,
                    loo_count: report.counters.loo_calls,
                    mean_final_regret: run.mean_final_regret(),
                    residual_max_ratio: report.residual_max_ratio,
                    clamp_events: report.clamp_events,
                });
            }
            mean_regrets.push(regret_acc / replicates as f64);
            comms.push(point.2 as f64);
            queries.push(point.3 as f64);
            loos.push(point.4 as f64);
        }
        if horizons.len() >= 4 {
            fits.push(ThetaFit {
                theta,
                horizons: horizons.to_vec(),
                mean_final_regrets: mean_regrets.clone(),
                regret: fit_loglog_slope(horizons, &mean_regrets)?,
                comm: fit_loglog_slope(horizons, &comms)?,
                query: fit_loglog_slope(horizons, &queries)?,
                loo: fit_loglog_slope(horizons, &loos)?,
            });
        }
    }
    fs::create_dir_all(out_dir)?;
    let summary_path = out_dir.join("sweep_summary.json");
    let outcome = SweepOutcome {
        jobs,
        fits,
        summary_path: summary_path.clone(),
    };
    fs::write(&summary_path, serde_json::to_string_pretty(&outcome)?)?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn base_config_json() -> String {
        r#"{
            "network": {"kind": "complete", "n": 2},
            "body": {"kind": "box", "dim": 2, "lo": 0.0, "hi": 1.0},
            "objective": {
                "family": "quadratic",
                "seed": 11,
                "monotone": true,
                "gamma": 1.0,
                "noise_sigma": 0.05,
                "oracle_order": 1
            },
            "adversary": {"kind": "fixed", "pool_size": 1},
            "algorithm": {"variant": "first-order", "case": "monotone-general", "theta": 1.0, "T": 300},
            "seeds": {"master": 42}
        }"#
        .to_string()
    }

    fn base_config() -> ExperimentConfig {
        ExperimentConfig::from_json(&base_config_json()).unwrap()
    }

    fn fixed_adversary(f: Objective, n_agents: usize) -> Adversary {
        Adversary::new(AdversaryKind::Fixed, vec![f], n_agents, 0).unwrap()
    }

    #[test]
    fn config_parses_and_field_errors_name_the_field() {
        let config = base_config();
        assert_eq!(config.network.n_nodes(), 2);
        assert_eq!(config.algorithm.horizon, 300);
        assert_eq!(config.objective.curvature, 1.0);

        let cases = [
            (r#""family": "quadratic""#, r#""family": "cubic""#, "family"),
            (
                r#""oracle_order": 1"#,
                r#""oracle_order": 0"#,
                "oracle_order",
            ),
            (
                r#""oracle_order": 1"#,
                r#""oracle_order": 3"#,
                "oracle_order",
            ),
            (r#""monotone": true"#, r#""monotone": false"#, "monotone"),
            (
                r#""kind": "fixed", "pool_size": 1"#,
                r#""kind": "fixed", "pool_size": 2"#,
                "pool_size",
            ),
        ];
        for (from, to, field) in cases {
            let text = base_config_json().replace(from, to);
            let err = ExperimentConfig::from_json(&text).unwrap_err();
            let msg = err.to_string();
            assert!(
                msg.contains(field),
                "error for {to:?} should name {field}: {msg}"
            );
        }

        // Non-monotone pools are generated at gamma = 1 only.
        let text = base_config_json()
            .replace(r#""monotone": true"#, r#""monotone": false"#)
            .replace(r#""gamma": 1.0"#, r#""gamma": 0.5"#)
            .replace(
                r#""case": "monotone-general""#,
                r#""case": "nonmonotone-general""#,
            );
        let err = ExperimentConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("gamma"), "{err}");
    }

    #[test]
    fn adversary_kinds_assign_slots_as_documented() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pool: Vec<Objective> = (0..3)
            .map(|_| Objective::random_monotone(2, 0.0, 1.0, 1.0, &mut rng).unwrap())
            .collect();

        let fixed = Adversary::new(AdversaryKind::Fixed, pool[..1].to_vec(), 4, 0).unwrap();
        assert!(std::ptr::eq(fixed.objective(0, 0), fixed.objective(99, 3)));

        let rotating = Adversary::new(AdversaryKind::Rotating, pool.clone(), 4, 0).unwrap();
        for t in 0..9 {
            let expect = &rotating.pool()[(t % 3) as usize];
            assert!(std::ptr::eq(rotating.objective(t, 1), expect));
            // Every agent sees the same objective in a given round.
            assert!(std::ptr::eq(
                rotating.objective(t, 0),
                rotating.objective(t, 3)
            ));
        }
        // Rotation over T = 10 rounds serves index 0 four times, 1/2 thrice.
        let w = rotating.realized_weights(10);
        assert!((w[0] - 0.4).abs() < 1e-15);
        assert!((w[1] - 0.3).abs() < 1e-15 && (w[2] - 0.3).abs() < 1e-15);

        let stochastic = Adversary::new(AdversaryKind::Stochastic, pool, 4, 7).unwrap();
        let w = stochastic.realized_weights(500);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // All pool members get served, roughly uniformly.
        assert!(w.iter().all(|&wi| wi > 0.2), "weights {w:?}");
        // Slot assignment is deterministic.
        assert!(std::ptr::eq(
            stochastic.objective(123, 2),
            stochastic.objective(123, 2)
        ));
        // per-round values are consistent with the slot assignment.
        let u = vec![0.5, 0.5];
        let per_round = stochastic.per_round_network_value(&u, 20);
        for (t, &v) in per_round.iter().enumerate() {
            let direct: f64 = (0..4)
                .map(|i| stochastic.objective(t as u64, i).value(&u))
                .sum::<f64>()
                / 4.0;
            assert!((v - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_comparator_finds_the_vertex_optimum_of_a_linear_objective() {
        let f = Objective::quadratic(vec![0.7, -0.3], vec![0.0; 4], 1.0, 0.0, 1.0).unwrap();
        let body = ConvexBody::axis_box(2, 0.0, 1.0).unwrap();
        let adversary = fixed_adversary(f, 2);
        let comparator = offline_best(&adversary, 10, &body, 0.005).unwrap();
        assert_eq!(comparator.mode, ComparatorMode::Grid);
        assert!((comparator.u_star[0] - 1.0).abs() < 1e-12);
        assert!(comparator.u_star[1].abs() < 1e-12);
        // Value = 0.7 plus the non-negativity offset 0.3.
        assert!((comparator.mean_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_comparator_finds_an_interior_optimum_within_one_cell() {
        // f(x) = <0.6·1, x> - ||x||² peaks at 0.3·1.
        let f = Objective::quadratic(vec![0.6, 0.6], vec![-2.0, 0.0, 0.0, -2.0], 1.0, 0.0, 1.0)
            .unwrap();
        let body = ConvexBody::axis_box(2, 0.0, 1.0).unwrap();
        let adversary = fixed_adversary(f, 1);
        let comparator = offline_best(&adversary, 5, &body, 0.005).unwrap();
        for coord in &comparator.u_star {
            assert!((coord - 0.3).abs() <= 0.005, "u* = {:?}", comparator.u_star);
        }
    }

    #[test]
    fn grid_and_frank_wolfe_comparators_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pool: Vec<Objective> = (0..2)
            .map(|_| Objective::random_monotone(2, 0.0, 1.0, 1.0, &mut rng).unwrap())
            .collect();
        let body = ConvexBody::axis_box(2, 0.0, 1.0).unwrap();
        let adversary = Adversary::new(AdversaryKind::Rotating, pool, 3, 0).unwrap();
        let grid =
            offline_best_with_mode(&adversary, 50, &body, 0.005, ComparatorMode::Grid).unwrap();
        let fw = offline_best_with_mode(&adversary, 50, &body, 0.005, ComparatorMode::FrankWolfe)
            .unwrap();
        assert!(
            (grid.mean_value - fw.mean_value).abs() < 1e-3,
            "grid {} vs frank-wolfe {}",
            grid.mean_value,
            fw.mean_value
        );
        // The exhaustive mode can only win.
        assert!(grid.mean_value >= fw.mean_value - 1e-12);
    }

    #[test]
    fn grid_comparator_dominates_every_lattice_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = Objective::random_monotone(2, 0.0, 1.0, 1.0, &mut rng).unwrap();
        let body = ConvexBody::axis_box(2, 0.0, 1.0).unwrap();
        let adversary = fixed_adversary(f, 2);
        let comparator = offline_best(&adversary, 8, &body, 0.01).unwrap();
        let mixture_value =
            |u: &[f64]| adversary.per_round_network_value(u, 8).iter().sum::<f64>() / 8.0;
        use rand::Rng;
        for _ in 0..200 {
            let u = vec![
                (rng.gen_range(0..=100) as f64) * 0.01,
                (rng.gen_range(0..=100) as f64) * 0.01,
            ];
            assert!(mixture_value(&u) <= comparator.mean_value + 1e-9);
        }
    }

    #[test]
    fn too_coarse_a_grid_is_rejected() {
        let f = Objective::zero(2);
        let body = ConvexBody::axis_box(2, 0.0, 1.0).unwrap();
        let adversary = fixed_adversary(f, 1);
        // Interior radius 0.5, so anything above 0.125 is too coarse.
        let err = offline_best(&adversary, 5, &body, 0.2).unwrap_err();
        assert!(matches!(err, HarnessError::ResolutionTooCoarse { .. }));
    }

    /// Builds a synthetic report whose every agent plays the given point.
    fn synthetic_report(
        adversary: &Adversary,
        played: &[f64],
        horizon: u64,
        n_agents: usize,
    ) -> RunReport {
        let schedule = Schedule::new(
            Variant::FirstOrder,
            FunctionCase::MonotoneGeneral,
            1.0,
            horizon,
            1.0,
        )
        .unwrap();
        let per_round = adversary.per_round_network_value(played, horizon);
        let network_rewards: Vec<Vec<f64>> = per_round.iter().map(|&v| vec![v; n_agents]).collect();
        RunReport {
            variant: schedule.variant,
            case: schedule.case,
            schedule,
            n_agents,
            dim: played.len(),
            master_seed: 0,
            lambda2: 0.0,
            alpha: 1.0,
            beta: 1.0,
            rewards: network_rewards.clone(),
            network_rewards,
            counters: Counters::new().snapshot(),
            full_information: false,
            residual_max_ratio: 0.0,
            loo_bound_total: 0.0,
            clamp_events: 0,
            mean_play_final_quarter: vec![played.to_vec(); n_agents],
        }
    }

    #[test]
    fn playing_the_comparator_gives_zero_regret_and_worse_points_grow_linearly() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let f = Objective::random_monotone(2, 0.0, 1.0, 1.0, &mut rng).unwrap();
        let body = ConvexBody::axis_box(2, 0.0, 1.0).unwrap();
        let adversary = fixed_adversary(f, 2);
        let comparator = offline_best(&adversary, 40, &body, 0.005).unwrap();

        let at_best = synthetic_report(&adversary, &comparator.u_star, 40, 2);
        let curve = alpha_regret(&at_best, 1.0, &comparator, 0).unwrap();
        assert!(curve.iter().all(|r| r.abs() < 1e-9), "curve {curve:?}");

        let worse = synthetic_report(&adversary, &[0.0, 0.0], 40, 2);
        let curve = alpha_regret(&worse, 1.0, &comparator, 1).unwrap();
        let gap = comparator.mean_value - adversary.objective(0, 0).value(&[0.0, 0.0]);
        assert!(gap > 1e-3, "test setup needs a real gap, got {gap}");
        for (t, r) in curve.iter().enumerate() {
            assert!((r - (t + 1) as f64 * gap).abs() < 1e-9);
        }
    }

    #[test]
    fn regret_rejects_out_of_range_agents_and_bad_alpha() {
        let f = Objective::zero(2);
        let adversary = fixed_adversary(f, 2);
        let comparator = offline_best(
            &adversary,
            10,
            &ConvexBody::axis_box(2, 0.0, 1.0).unwrap(),
            0.01,
        )
        .unwrap();
        let report = synthetic_report(&adversary, &[0.5, 0.5], 10, 2);
        assert!(matches!(
            alpha_regret(&report, 1.0, &comparator, 2).unwrap_err(),
            HarnessError::AgentOutOfRange {
                agent: 2,
                n_agents: 2
            }
        ));
        assert!(matches!(
            alpha_regret(&report, 0.0, &comparator, 0).unwrap_err(),
            HarnessError::InvalidArgument(_)
        ));
    }

    #[test]
    fn slope_fit_recovers_exact_power_laws() {
        let horizons = [2500u64, 5000, 10_000, 20_000];
        let half: Vec<f64> = horizons.iter().map(|&t| 3.0 * (t as f64).sqrt()).collect();
        let fit = fit_loglog_slope(&horizons, &half).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-9);
        assert!(!fit.clamped);

        let linear: Vec<f64> = horizons.iter().map(|&t| 2.0 * t as f64).collect();
        let fit = fit_loglog_slope(&horizons, &linear).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-9);

        // Non-positive regrets clamp to 1 and set the flag.
        let with_zero = [0.0, 8.0, 16.0, 32.0];
        let fit = fit_loglog_slope(&horizons, &with_zero).unwrap();
        assert!(fit.clamped);
        assert!(fit.slope.is_finite());

        assert!(matches!(
            fit_loglog_slope(&horizons[..3], &half[..3]).unwrap_err(),
            HarnessError::TooFewPoints(3)
        ));
    }

    #[test]
    fn csv_header_is_the_documented_one() {
        assert_eq!(
            CSV_HEADER,
            "run_id,variant,case,theta,T,K,L,eta,eps,delta,N,agent,t,reward,cum_regret,\
             comm_count,loo_count,query_count,seed"
        );
    }

    #[test]
    fn run_experiment_emits_stable_well_formed_files() {
        let config = base_config();
        let dir_a = tempdir().unwrap();
        let dir_b = tempdir().unwrap();
        let a = run_experiment(&config, dir_a.path(), config.seeds.master).unwrap();
        let b = run_experiment(&config, dir_b.path(), config.seeds.master).unwrap();
        assert_eq!(a.executed.run_id, b.executed.run_id);

        let bytes_a = fs::read(&a.csv_path).unwrap();
        let bytes_b = fs::read(&b.csv_path).unwrap();
        assert_eq!(bytes_a, bytes_b, "reruns must be byte-identical");

        let text = String::from_utf8(bytes_a).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 2 * 300, "one row per agent per round");
        for row in &rows {
            assert_eq!(row.split(',').count(), 19);
        }
        // A different seed changes the id and the contents.
        let c = run_experiment(&config, dir_a.path(), 777).unwrap();
        assert_ne!(c.executed.run_id, a.executed.run_id);

        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&a.json_path).unwrap()).unwrap();
        assert_eq!(summary["run_id"].as_str(), Some(a.executed.run_id.as_str()));
        assert_eq!(summary["schedule"]["t_requested"].as_u64(), Some(300));
        assert!(summary["final_regret_per_agent"].as_array().unwrap().len() == 2);
    }

    #[test]
    fn swapping_agent_streams_on_a_two_node_complete_graph_swaps_the_curves() {
        // With two agents on the complete graph the mixing weights are all
        // 1/2 and two-term sums commute exactly, so relabeling the agents
        // (equivalently, swapping their random streams) must swap the
        // reward matrices and regret curves bit for bit.
        let config = base_config();
        let prepared = config.prepare().unwrap();
        let master = 99;
        let streams = [crate::derive_seed(master, 0), crate::derive_seed(master, 1)];
        let swapped = [streams[1], streams[0]];
        let run = |seeds: &[u64]| {
            run_schedule(&RunInputs {
                base_body: &prepared.body,
                weights: &prepared.weights,
                objectives: &prepared.adversary,
                case_spec: &prepared.case_spec,
                schedule: prepared.schedule,
                noise_sigma: config.objective.noise_sigma,
                oracle_bound: prepared.oracle_bound,
                master_seed: master,
                stream_seeds: Some(seeds),
            })
            .unwrap()
        };
        let a = run(&streams);
        let b = run(&swapped);
        for t in 0..config.algorithm.horizon as usize {
            assert_eq!(a.rewards[t][0].to_bits(), b.rewards[t][1].to_bits());
            assert_eq!(a.rewards[t][1].to_bits(), b.rewards[t][0].to_bits());
            assert_eq!(
                a.network_rewards[t][0].to_bits(),
                b.network_rewards[t][1].to_bits()
            );
        }
    }

    #[test]
    fn sweep_emits_jobs_fits_and_a_summary() {
        let mut config = base_config();
        config.algorithm.horizon = 100;
        let dir = tempdir().unwrap();
        let outcome = run_sweep(&config, &[1.0], &[100, 200, 400, 800], 1, dir.path()).unwrap();
        assert_eq!(outcome.jobs.len(), 4);
        assert_eq!(outcome.fits.len(), 1);
        // θ = 1 ⇒ K = 1 ⇒ one gossip per round: the comm count *is* the
        // horizon and its fitted exponent is exactly 1.
        let fit = &outcome.fits[0];
        assert!((fit.comm.slope - 1.0).abs() < 1e-9);
        for job in &outcome.jobs {
            assert_eq!(job.comm_count, job.horizon);
            assert!(dir.path().join(format!("{}.csv", job.run_id)).exists());
        }
        assert!(outcome.summary_path.exists());
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&outcome.summary_path).unwrap()).unwrap();
        assert_eq!(summary["jobs"].as_array().unwrap().len(), 4);
    }
}
