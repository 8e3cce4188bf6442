//! Quadratic reward objectives, noisy query oracles, and the linearization
//! machinery that turns up-concave maximization into a linear feedback game.
//!
//! The shipped family is f(x) = ⟨a, x⟩ + ½·xᵀHx + b₀ with H symmetric and
//! entrywise non-positive, which makes ∇f entrywise antitone (continuous
//! diminishing returns) and hence f concave along non-negative directions.
//! Each instance certifies its own non-negativity offset, monotonicity flag,
//! and gradient/value bounds by interval arithmetic over a padded coordinate
//! hull, so query points slightly outside the feasible set (rescaled or
//! smoothed queries) stay covered by the certified constants.
//!
//! A [`LinearizableSpec`] describes how one of the three supported function
//! classes is reduced to linear feedback: it fixes the approximation factor
//! `alpha`, the linearization weight `beta`, the playing map `h`, and the
//! randomized query-point law whose mean gradient realizes the linearizing
//! direction. [`LinearizableSpec::boosted_grad_exact`] evaluates that mean by
//! Gauss-Legendre quadrature and serves as the reference for unbiasedness and
//! margin tests.

use std::fmt;
use std::sync::atomic::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ConvexBody, SubspaceBasis};
use crate::quadrature::GaussLegendre;
use crate::{gaussian, Counters};

/// Padding added around the coordinate hull when certifying value/gradient
/// bounds, so rescaled and δ-smoothed query points remain covered.
pub const BOUND_PAD: f64 = 1.0;

/// Noise quantile kept inside the oracle clipping bound; clipping at six
/// standard deviations keeps the induced bias near 1e-9 relative scale.
pub const CLIP_SIGMAS: f64 = 6.0;

/// Default node count for the quadrature reference gradient.
pub const BOOSTED_QUAD_NODES: usize = 256;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum ObjectiveError {
    /// Mismatched vector/matrix dimensions.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A scalar parameter outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The requested function case is incompatible with the feasible set.
    #[error("{case} case requires {requirement}")]
    CaseUnsupported {
        case: FunctionCase,
        requirement: String,
    },
}

// ---------------------------------------------------------------------------
// Quadratic objective family
// ---------------------------------------------------------------------------

/// A quadratic reward function with certified bounds.
///
/// Instances are immutable and freely shareable across agent workers; all
/// certified constants are computed once at construction.
#[derive(Debug, Clone)]
pub struct Objective {
    dim: usize,
    /// Linear term `a`.
    linear: Vec<f64>,
    /// Row-major symmetric matrix `H` with non-positive entries.
    quad: Vec<f64>,
    /// Constant `b₀`, chosen at construction so f ≥ 0 on the certified hull.
    offset: f64,
    /// Whether ∇f ≥ 0 entrywise on the certified hull.
    monotone: bool,
    /// Declared weak-up-concavity level in (0, 1].
    gamma: f64,
    /// Upper bound on ‖∇f‖₂ over the padded hull.
    lipschitz_m1: f64,
    /// Gradient-Lipschitz constant (Frobenius norm of H).
    smoothness_l: f64,
    /// Upper bound on |f| over the padded hull.
    value_bound: f64,
    /// Certified coordinate hull (extended to include 0 so that rescaled
    /// query segments toward the origin stay certified).
    cert_lo: f64,
    cert_hi: f64,
}

impl Objective {
    /// Builds a quadratic objective over the coordinate hull
    /// `[hull_lo, hull_hi]` (the per-coordinate range of the feasible set).
    ///
    /// The constant term is chosen as the smallest value that certifies
    /// f ≥ 0 on the hull extended to include the origin; value and gradient
    /// bounds are certified on the hull inflated by [`BOUND_PAD`].
    pub fn quadratic(
        linear: Vec<f64>,
        quad: Vec<f64>,
        gamma: f64,
        hull_lo: f64,
        hull_hi: f64,
    ) -> Result<Self, ObjectiveError> {
        let dim = linear.len();
        if quad.len() != dim * dim {
            return Err(ObjectiveError::DimensionMismatch(format!(
                "quadratic matrix has {} entries, expected {}",
                quad.len(),
                dim * dim
            )));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(ObjectiveError::InvalidParameter(format!(
                "gamma must lie in (0, 1], got {gamma}"
            )));
        }
        if hull_hi <= hull_lo || !hull_lo.is_finite() || !hull_hi.is_finite() {
            return Err(ObjectiveError::InvalidParameter(format!(
                "coordinate hull [{hull_lo}, {hull_hi}] is empty or not finite"
            )));
        }
        if linear.iter().chain(quad.iter()).any(|v| !v.is_finite()) {
            return Err(ObjectiveError::InvalidParameter(
                "objective coefficients must be finite".into(),
            ));
        }
        for i in 0..dim {
            for j in 0..dim {
                let hij = quad[i * dim + j];
                if hij > 0.0 {
                    return Err(ObjectiveError::InvalidParameter(format!(
                        "quadratic entry ({i}, {j}) = {hij} must be non-positive"
                    )));
                }
                if (hij - quad[j * dim + i]).abs() > 1e-12 {
                    return Err(ObjectiveError::InvalidParameter(format!(
                        "quadratic matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }

        let cert_lo = hull_lo.min(0.0);
        let cert_hi = hull_hi.max(0.0);
        let abs_h_sum: f64 = quad.iter().map(|h| h.abs()).sum();
        let cmax = cert_lo.abs().max(cert_hi.abs());

        // Smallest constant certifying f >= 0 on the certified hull: bound
        // the linear term coordinatewise and the quadratic term by its
        // entrywise absolute sum.
        let linear_floor: f64 = linear.iter().map(|&a| (a * cert_lo).min(a * cert_hi)).sum();
        let floor = linear_floor - 0.5 * abs_h_sum * cmax * cmax;
        let offset = (-floor).max(0.0);

        // Monotone iff every coordinate of the gradient stays non-negative;
        // with H <= 0 the minimum over the hull is attained at cert_hi.
        let monotone = (0..dim).all(|i| {
            let row_sum: f64 = quad[i * dim..(i + 1) * dim].iter().sum();
            linear[i] + row_sum * cert_hi >= 0.0
        });

        let pad_max = (cert_lo - BOUND_PAD).abs().max((cert_hi + BOUND_PAD).abs());
        let grad_sq: f64 = (0..dim)
            .map(|i| {
                let row_abs: f64 = quad[i * dim..(i + 1) * dim].iter().map(|h| h.abs()).sum();
                let g = linear[i].abs() + row_abs * pad_max;
                g * g
            })
            .sum();
        let lipschitz_m1 = grad_sq.sqrt();
        let smoothness_l = quad.iter().map(|h| h * h).sum::<f64>().sqrt();
        let abs_a_sum: f64 = linear.iter().map(|a| a.abs()).sum();
        let value_bound = abs_a_sum * pad_max + 0.5 * abs_h_sum * pad_max * pad_max + offset;

        Ok(Self {
            dim,
            linear,
            quad,
            offset,
            monotone,
            gamma,
            lipschitz_m1,
            smoothness_l,
            value_bound,
            cert_lo,
            cert_hi,
        })
    }

    /// The identically-zero objective, used for schedule padding rounds.
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            linear: vec![0.0; dim],
            quad: vec![0.0; dim * dim],
            offset: 0.0,
            monotone: true,
            gamma: 1.0,
            lipschitz_m1: 0.0,
            smoothness_l: 0.0,
            value_bound: 0.0,
            cert_lo: 0.0,
            cert_hi: 1.0,
        }
    }

    /// Draws a monotone instance: every gradient coordinate stays positive on
    /// the hull because the linear term dominates the certified row sums.
    pub fn random_monotone<R: Rng + ?Sized>(
        dim: usize,
        hull_lo: f64,
        hull_hi: f64,
        gamma: f64,
        rng: &mut R,
    ) -> Result<Self, ObjectiveError> {
        let quad = random_interaction_matrix(dim, rng);
        let cert_hi = hull_hi.max(0.0);
        let linear: Vec<f64> = (0..dim)
            .map(|i| {
                let row_abs: f64 = quad[i * dim..(i + 1) * dim].iter().map(|h| h.abs()).sum();
                (1.0 + rng.gen_range(0.0..1.0)) * row_abs * cert_hi
            })
            .collect();
        Self::quadratic(linear, quad, gamma, hull_lo, hull_hi)
    }

    /// Draws a non-monotone instance: the linear term is kept strictly below
    /// the certified row sums, so the gradient turns negative near the upper
    /// corner of the hull.
    pub fn random_nonmonotone<R: Rng + ?Sized>(
        dim: usize,
        hull_lo: f64,
        hull_hi: f64,
        rng: &mut R,
    ) -> Result<Self, ObjectiveError> {
        let quad = random_interaction_matrix(dim, rng);
        let cert_hi = hull_hi.max(0.0);
        let linear: Vec<f64> = (0..dim)
            .map(|i| {
                let row_abs: f64 = quad[i * dim..(i + 1) * dim].iter().map(|h| h.abs()).sum();
                rng.gen_range(0.0..0.8) * row_abs * cert_hi
            })
            .collect();
        Self::quadratic(linear, quad, 1.0, hull_lo, hull_hi)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Upper bound on ‖∇f‖₂ over the padded hull.
    pub fn lipschitz_m1(&self) -> f64 {
        self.lipschitz_m1
    }

    /// Gradient-Lipschitz constant.
    pub fn smoothness_l(&self) -> f64 {
        self.smoothness_l
    }

    /// Upper bound on |f| over the padded hull.
    pub fn value_bound(&self) -> f64 {
        self.value_bound
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Linear coefficients `a`.
    pub fn linear_coefficients(&self) -> &[f64] {
        &self.linear
    }

    /// Row-major interaction matrix `H`.
    pub fn interaction_coefficients(&self) -> &[f64] {
        &self.quad
    }

    /// Certified coordinate hull (includes the origin).
    pub fn certified_hull(&self) -> (f64, f64) {
        (self.cert_lo, self.cert_hi)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let mut quad_part = 0.0;
        for i in 0..self.dim {
            let row = &self.quad[i * self.dim..(i + 1) * self.dim];
            let hx: f64 = row.iter().zip(x).map(|(h, xj)| h * xj).sum();
            quad_part += x[i] * hx;
        }
        let linear_part: f64 = self.linear.iter().zip(x).map(|(a, xi)| a * xi).sum();
        linear_part + 0.5 * quad_part + self.offset
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|i| {
                let row = &self.quad[i * self.dim..(i + 1) * self.dim];
                let hx: f64 = row.iter().zip(x).map(|(h, xj)| h * xj).sum();
                self.linear[i] + hx
            })
            .collect()
    }
}

/// Symmetric matrix with entries drawn from -[0.2, 1.2]/d: strictly negative
/// so the non-monotone generator cannot degenerate to a constant gradient,
/// and scaled by dimension so row sums stay O(1).
fn random_interaction_matrix<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    let mut quad = vec![0.0; dim * dim];
    let scale = 1.0 / dim as f64;
    for i in 0..dim {
        for j in i..dim {
            let h = -rng.gen_range(0.2..1.2) * scale;
            quad[i * dim + j] = h;
            quad[j * dim + i] = h;
        }
    }
    quad
}

// ---------------------------------------------------------------------------
// Noisy query oracles
// ---------------------------------------------------------------------------

/// Which quantity a query oracle returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum OracleOrder {
    /// Zeroth order: scalar function values.
    Value,
    /// First order: gradient vectors.
    Gradient,
}

impl TryFrom<u8> for OracleOrder {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Self::Value),
            1 => Ok(Self::Gradient),
            other => Err(format!("oracle order must be 0 or 1, got {other}")),
        }
    }
}

impl From<OracleOrder> for u8 {
    fn from(order: OracleOrder) -> u8 {
        match order {
            OracleOrder::Value => 0,
            OracleOrder::Gradient => 1,
        }
    }
}

/// A noisy value or gradient oracle with a hard response bound.
///
/// Responses are the exact quantity plus isotropic Gaussian noise, then
/// clipped to `bound`; with `bound` at least [`CLIP_SIGMAS`] standard
/// deviations above the certified supremum, the clipping bias is far below
/// every test tolerance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QueryOracle {
    pub order: OracleOrder,
    pub sigma: f64,
    pub bound: f64,
}

impl QueryOracle {
    pub fn new(order: OracleOrder, sigma: f64, bound: f64) -> Result<Self, ObjectiveError> {
        if sigma < 0.0 || !sigma.is_finite() {
            return Err(ObjectiveError::InvalidParameter(format!(
                "noise sigma must be a finite non-negative scalar, got {sigma}"
            )));
        }
        if bound < 0.0 || !bound.is_finite() {
            return Err(ObjectiveError::InvalidParameter(format!(
                "oracle bound must be a finite non-negative scalar, got {bound}"
            )));
        }
        Ok(Self {
            order,
            sigma,
            bound,
        })
    }

    /// Smallest bound covering every objective in a pool: the certified
    /// supremum of the returned quantity plus [`CLIP_SIGMAS`]·σ of headroom.
    pub fn bound_for<'a>(
        order: OracleOrder,
        sigma: f64,
        objectives: impl IntoIterator<Item = &'a Objective>,
    ) -> f64 {
        let sup = objectives
            .into_iter()
            .map(|f| match order {
                OracleOrder::Value => f.value_bound(),
                OracleOrder::Gradient => f.lipschitz_m1(),
            })
            .fold(0.0_f64, f64::max);
        sup + CLIP_SIGMAS * sigma
    }

    /// Noisy function value at `w`, clipped to `[-bound, bound]`.
    pub fn query_value<R: Rng + ?Sized>(
        &self,
        f: &Objective,
        w: &[f64],
        rng: &mut R,
        counters: &Counters,
    ) -> f64 {
        debug_assert_eq!(self.order, OracleOrder::Value);
        counters.oracle_queries.fetch_add(1, Ordering::Relaxed);
        let resp = f.value(w) + self.sigma * gaussian(rng);
        resp.clamp(-self.bound, self.bound)
    }

    /// Noisy gradient at `w`, rescaled onto the bound ball if it lands
    /// outside.
    pub fn query_gradient<R: Rng + ?Sized>(
        &self,
        f: &Objective,
        w: &[f64],
        rng: &mut R,
        counters: &Counters,
    ) -> Vec<f64> {
        debug_assert_eq!(self.order, OracleOrder::Gradient);
        counters.oracle_queries.fetch_add(1, Ordering::Relaxed);
        let mut resp = f.gradient(w);
        if self.sigma > 0.0 {
            for r in &mut resp {
                *r += self.sigma * gaussian(rng);
            }
        }
        let norm = resp.iter().map(|r| r * r).sum::<f64>().sqrt();
        if norm > self.bound {
            let scale = self.bound / norm;
            for r in &mut resp {
                *r *= scale;
            }
        }
        resp
    }
}

// ---------------------------------------------------------------------------
// Rescaling laws
// ---------------------------------------------------------------------------

/// Inverse CDF of the rescaling law for monotone objectives over sets
/// containing the origin.
pub fn z_mono_origin_inverse_cdf(gamma: f64, u: f64) -> f64 {
    let e = (-gamma).exp();
    1.0 + (u * (1.0 - e) + e).ln() / gamma
}

/// CDF of the monotone-origin rescaling law.
pub fn z_mono_origin_cdf(gamma: f64, z: f64) -> f64 {
    let e = (-gamma).exp();
    ((gamma * (z - 1.0)).exp() - e) / (1.0 - e)
}

/// Density of the monotone-origin rescaling law.
pub fn z_mono_origin_density(gamma: f64, z: f64) -> f64 {
    let e = (-gamma).exp();
    gamma * (gamma * (z - 1.0)).exp() / (1.0 - e)
}

/// Draws from the monotone-origin rescaling law by inverse transform.
pub fn sample_z_mono_origin<R: Rng + ?Sized>(gamma: f64, rng: &mut R) -> f64 {
    debug_assert!(gamma > 0.0 && gamma <= 1.0);
    z_mono_origin_inverse_cdf(gamma, rng.gen::<f64>())
}

/// Inverse CDF of the rescaling law for non-monotone objectives.
pub fn z_nonmono_inverse_cdf(u: f64) -> f64 {
    2.0 * (1.0 - 1.0 / (1.0 + 3.0 * u).sqrt())
}

/// CDF of the non-monotone rescaling law.
pub fn z_nonmono_cdf(z: f64) -> f64 {
    let t = 1.0 - 0.5 * z;
    (1.0 / (t * t) - 1.0) / 3.0
}

/// Density of the non-monotone rescaling law.
pub fn z_nonmono_density(z: f64) -> f64 {
    let t = 1.0 - 0.5 * z;
    1.0 / (3.0 * t * t * t)
}

/// Draws from the non-monotone rescaling law by inverse transform.
pub fn sample_z_nonmono<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    z_nonmono_inverse_cdf(rng.gen::<f64>())
}

/// Kolmogorov-Smirnov statistic of a sample against an analytic CDF.
///
/// Sorts the sample in place and returns the supremum gap between the
/// empirical and analytic CDFs.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    assert!(!samples.is_empty(), "KS statistic of an empty sample");
    samples.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample"));
    let n = samples.len() as f64;
    let mut gap = 0.0_f64;
    for (i, &x) in samples.iter().enumerate() {
        let c = cdf(x);
        gap = gap
            .max((c - i as f64 / n).abs())
            .max((c - (i + 1) as f64 / n).abs());
    }
    gap
}

// ---------------------------------------------------------------------------
// Function cases and linearization
// ---------------------------------------------------------------------------

/// The three supported function classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FunctionCase {
    /// Monotone objectives over a general feasible set; linearized through
    /// the curvature-weighted gradient at the played point.
    MonotoneGeneral,
    /// Monotone objectives over a set containing the origin; linearized
    /// through gradients at randomly rescaled points z∗x.
    MonotoneOrigin,
    /// Non-monotone objectives; linearized through gradients on the segment
    /// between the set's minimum-norm anchor and x.
    NonmonotoneGeneral,
}

impl fmt::Display for FunctionCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::MonotoneGeneral => "monotone-general",
            Self::MonotoneOrigin => "monotone-origin",
            Self::NonmonotoneGeneral => "nonmonotone-general",
        };
        f.write_str(name)
    }
}

/// How a function case is reduced to linear feedback: the approximation
/// factor `alpha`, linearization weight `beta`, playing map, and query law.
#[derive(Debug, Clone, Serialize)]
pub struct LinearizableSpec {
    pub case: FunctionCase,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Curvature parameter entering the monotone-general factors.
    pub curvature: f64,
    /// Minimum-sup-norm anchor (non-monotone case only).
    anchor: Option<Vec<f64>>,
    dim: usize,
}

impl LinearizableSpec {
    /// Builds the descriptor for `case` over `body`.
    ///
    /// The non-monotone anchor defaults to the body's minimum-sup-norm
    /// point; use [`LinearizableSpec::with_anchor`] to override it.
    pub fn for_case(
        case: FunctionCase,
        gamma: f64,
        curvature: f64,
        body: &ConvexBody,
    ) -> Result<Self, ObjectiveError> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(ObjectiveError::InvalidParameter(format!(
                "gamma must lie in (0, 1], got {gamma}"
            )));
        }
        if curvature < 0.0 || !curvature.is_finite() {
            return Err(ObjectiveError::InvalidParameter(format!(
                "curvature must be a finite non-negative scalar, got {curvature}"
            )));
        }
        let dim = body.dim();
        let mut spec = Self {
            case,
            alpha: 0.0,
            beta: 0.0,
            gamma,
            curvature,
            anchor: None,
            dim,
        };
        match case {
            FunctionCase::MonotoneGeneral => {
                let denom = 1.0 + curvature * gamma * gamma;
                spec.alpha = gamma * gamma / denom;
                spec.beta = gamma / denom;
            }
            FunctionCase::MonotoneOrigin => {
                if !body.contains_origin() {
                    return Err(ObjectiveError::CaseUnsupported {
                        case,
                        requirement: "a feasible set containing the origin".into(),
                    });
                }
                let factor = 1.0 - (-gamma).exp();
                spec.alpha = factor;
                spec.beta = factor / gamma;
            }
            FunctionCase::NonmonotoneGeneral => {
                spec = spec.with_anchor(body.min_sup_norm_point())?;
            }
        }
        Ok(spec)
    }

    /// Overrides the non-monotone anchor and recomputes `alpha`.
    pub fn with_anchor(mut self, anchor: Vec<f64>) -> Result<Self, ObjectiveError> {
        if self.case != FunctionCase::NonmonotoneGeneral {
            return Err(ObjectiveError::InvalidParameter(
                "anchor applies only to the non-monotone case".into(),
            ));
        }
        if anchor.len() != self.dim {
            return Err(ObjectiveError::DimensionMismatch(format!(
                "anchor has dimension {}, body has {}",
                anchor.len(),
                self.dim
            )));
        }
        let sup_norm = anchor.iter().map(|a| a.abs()).fold(0.0_f64, f64::max);
        if sup_norm >= 1.0 {
            return Err(ObjectiveError::InvalidParameter(format!(
                "non-monotone case requires an anchor with sup norm < 1, got {sup_norm}"
            )));
        }
        self.alpha = (1.0 - sup_norm) / 4.0;
        self.beta = 3.0 / 8.0;
        self.anchor = Some(anchor);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn anchor(&self) -> Option<&[f64]> {
        self.anchor.as_deref()
    }

    /// The playing map `h`: identity for the monotone cases, midpoint toward
    /// the anchor for the non-monotone case.
    pub fn playing_map(&self, x: &[f64]) -> Vec<f64> {
        match self.case {
            FunctionCase::MonotoneGeneral | FunctionCase::MonotoneOrigin => x.to_vec(),
            FunctionCase::NonmonotoneGeneral => {
                let anchor = self.anchor.as_ref().expect("anchor set at construction");
                x.iter()
                    .zip(anchor)
                    .map(|(xi, ai)| 0.5 * (xi + ai))
                    .collect()
            }
        }
    }

    /// The query point for rescaling factor `z`.
    pub fn query_point(&self, x: &[f64], z: f64) -> Vec<f64> {
        match self.case {
            FunctionCase::MonotoneGeneral => x.to_vec(),
            FunctionCase::MonotoneOrigin => x.iter().map(|xi| z * xi).collect(),
            FunctionCase::NonmonotoneGeneral => {
                let anchor = self.anchor.as_ref().expect("anchor set at construction");
                x.iter()
                    .zip(anchor)
                    .map(|(xi, ai)| 0.5 * z * (xi - ai) + ai)
                    .collect()
            }
        }
    }

    /// Density of the rescaling law on [0, 1] (constant 1 when the case
    /// queries at x itself).
    pub fn query_density(&self, z: f64) -> f64 {
        match self.case {
            FunctionCase::MonotoneGeneral => 1.0,
            FunctionCase::MonotoneOrigin => z_mono_origin_density(self.gamma, z),
            FunctionCase::NonmonotoneGeneral => z_nonmono_density(z),
        }
    }

    /// Samples a query point from the case's rescaling law.
    pub fn sample_query_point<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        match self.case {
            FunctionCase::MonotoneGeneral => x.to_vec(),
            FunctionCase::MonotoneOrigin => {
                let z = sample_z_mono_origin(self.gamma, rng);
                self.query_point(x, z)
            }
            FunctionCase::NonmonotoneGeneral => {
                let z = sample_z_nonmono(rng);
                self.query_point(x, z)
            }
        }
    }

    /// One boosted gradient sample: queries the first-order oracle at a
    /// point drawn from the rescaling law, so the mean response equals the
    /// linearizing direction at `x`.
    pub fn boosted_query<R: Rng + ?Sized>(
        &self,
        oracle: &QueryOracle,
        f: &Objective,
        x: &[f64],
        rng: &mut R,
        counters: &Counters,
    ) -> Result<BoostedSample, ObjectiveError> {
        if x.len() != self.dim || f.dim() != self.dim {
            return Err(ObjectiveError::DimensionMismatch(format!(
                "boosted query: spec dim {}, point dim {}, objective dim {}",
                self.dim,
                x.len(),
                f.dim()
            )));
        }
        let query_point = self.sample_query_point(x, rng);
        let sample = oracle.query_gradient(f, &query_point, rng, counters);
        Ok(BoostedSample {
            sample,
            query_point,
        })
    }

    /// Deterministic quadrature of the mean boosted gradient; the reference
    /// oracle for unbiasedness and margin tests.
    pub fn boosted_grad_exact(&self, f: &Objective, x: &[f64], n_quad: usize) -> Vec<f64> {
        assert!(n_quad >= 64, "reference quadrature needs at least 64 nodes");
        if self.case == FunctionCase::MonotoneGeneral {
            return f.gradient(x);
        }
        let rule = GaussLegendre::new(n_quad);
        let mut acc = vec![0.0; self.dim];
        for (z, w) in rule.nodes_on(0.0, 1.0) {
            let point = self.query_point(x, z);
            let grad = f.gradient(&point);
            let scale = w * self.query_density(z);
            for (a, g) in acc.iter_mut().zip(&grad) {
                *a += scale * g;
            }
        }
        acc
    }

    /// Margin of the upper-linearization inequality at `(x, y)`:
    /// β·⟨𝔤(x), y − x⟩ − (α·f(y) − f(h(x))), non-negative (up to numerics)
    /// for every valid case/objective pairing.
    pub fn check_linearizable(&self, f: &Objective, x: &[f64], y: &[f64], n_quad: usize) -> f64 {
        let grad = self.boosted_grad_exact(f, x, n_quad);
        let inner: f64 = grad
            .iter()
            .zip(x.iter().zip(y))
            .map(|(g, (xi, yi))| g * (yi - xi))
            .sum();
        let played = self.playing_map(x);
        self.beta * inner - (self.alpha * f.value(y) - f.value(&played))
    }
}

/// A boosted gradient sample together with the point it was queried at, so
/// drivers can audit trivial-query (bandit) feedback.
#[derive(Debug, Clone)]
pub struct BoostedSample {
    pub sample: Vec<f64>,
    pub query_point: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Smoothing estimators
// ---------------------------------------------------------------------------

/// One-point gradient estimate (k/δ)·o·v from a single value sample `o` at a
/// δ-perturbed point along unit direction `v`.
pub fn one_point_grad(o: f64, v: &[f64], k: usize, delta: f64) -> Vec<f64> {
    assert!(delta > 0.0, "smoothing radius must be positive");
    let scale = k as f64 / delta * o;
    v.iter().map(|vi| scale * vi).collect()
}

/// Monte-Carlo estimate of the δ-smoothed value: the average of f over a
/// δ-ball of the sampling subspace centered at `x`. Test-only reference.
pub fn smoothed_value_mc<R: Rng + ?Sized>(
    f: &Objective,
    x: &[f64],
    delta: f64,
    basis: &SubspaceBasis,
    n: usize,
    rng: &mut R,
) -> f64 {
    assert!(n > 0, "smoothed value needs at least one sample");
    let mut acc = 0.0;
    for _ in 0..n {
        let v = basis.sample_ball(rng);
        let point: Vec<f64> = x.iter().zip(&v).map(|(xi, vi)| xi + delta * vi).collect();
        acc += f.value(&point);
    }
    acc / n as f64
}
