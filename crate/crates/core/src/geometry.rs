//! Feasible sets, linear-optimization oracles, set shrinking, and the
//! infeasible-projection routine that replaces Euclidean projection.
//!
//! Every set exposes only a linear optimization oracle (LOO): given a
//! direction, return a maximizing vertex. The infeasible projection trades
//! exact projection for a Frank-Wolfe descent on the squared distance,
//! returning a feasible point plus a pseudo-projection that is provably no
//! farther from any feasible point than the input was.

use std::sync::atomic::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{gaussian, Counters};

/// Feasibility slack used by containment checks and audits.
pub const FEASIBILITY_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum GeometryError {
    /// Shrinking by `delta` would empty the interior (`delta >= r`).
    #[error("shrink amount {delta} must lie in [0, {interior_radius}) for this set")]
    DeltaTooLarge { delta: f64, interior_radius: f64 },

    /// The Frank-Wolfe loop hit its call cap; signals a construction bug.
    #[error("infeasible projection exceeded its call cap of {cap} LOO calls")]
    IterationCapExceeded { cap: u64 },

    /// A subspace basis with zero vectors cannot be sampled.
    #[error("degenerate subspace basis: {0}")]
    DegenerateBasis(String),

    /// Mismatched vector dimensions.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Malformed set parameters or infeasible inputs.
    #[error("invalid geometry input: {0}")]
    InvalidInput(String),
}

// ---------------------------------------------------------------------------
// Convex bodies
// ---------------------------------------------------------------------------

/// Parameter block for the two built-in set families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BodyKind {
    /// Axis-aligned box `[lo, hi]^d`.
    AxisBox { lo: f64, hi: f64 },
    /// Budget simplex `{ x >= lo * 1, sum_i (x_i - lo) <= budget }`.
    Simplex { lo: f64, budget: f64 },
}

/// A compact convex feasible set with precomputed geometric data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexBody {
    dim: usize,
    kind: BodyKind,
    /// Circumradius: `max { ||x|| : x in body }`.
    radius: f64,
    /// Center of a maximal inscribed ball.
    center: Vec<f64>,
    /// Radius of that inscribed ball (within the affine hull).
    interior_radius: f64,
    /// Dimension of the affine hull (both families are full-dimensional).
    affine_dim: usize,
    contains_origin: bool,
}

impl ConvexBody {
    /// Axis-aligned box `[lo, hi]^d`.
    pub fn axis_box(dim: usize, lo: f64, hi: f64) -> Result<Self, GeometryError> {
        if dim == 0 {
            return Err(GeometryError::InvalidInput(
                "dimension must be positive".into(),
            ));
        }
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(GeometryError::InvalidInput(format!(
                "box bounds must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        let mid = 0.5 * (lo + hi);
        Ok(Self {
            dim,
            kind: BodyKind::AxisBox { lo, hi },
            radius: (dim as f64).sqrt() * lo.abs().max(hi.abs()),
            center: vec![mid; dim],
            interior_radius: 0.5 * (hi - lo),
            affine_dim: dim,
            contains_origin: lo <= 0.0 && hi >= 0.0,
        })
    }

    /// Budget simplex `{ x >= lo * 1, sum_i (x_i - lo) <= budget }`.
    ///
    /// The inscribed ball sits at the Chebyshev center `(lo + t) * 1` with
    /// `t = budget / (d + sqrt(d))`, equidistant from every facet.
    pub fn simplex(dim: usize, lo: f64, budget: f64) -> Result<Self, GeometryError> {
        if dim == 0 {
            return Err(GeometryError::InvalidInput(
                "dimension must be positive".into(),
            ));
        }
        if !(lo.is_finite() && budget.is_finite()) || budget <= 0.0 {
            return Err(GeometryError::InvalidInput(format!(
                "simplex budget must be positive, got {budget}"
            )));
        }
        let d = dim as f64;
        let t = budget / (d + d.sqrt());
        let base_vertex_norm = lo.abs() * d.sqrt();
        let bump_vertex_norm = ((d - 1.0) * lo * lo + (lo + budget) * (lo + budget)).sqrt();
        Ok(Self {
            dim,
            kind: BodyKind::Simplex { lo, budget },
            radius: base_vertex_norm.max(bump_vertex_norm),
            center: vec![lo + t; dim],
            interior_radius: t,
            affine_dim: dim,
            contains_origin: lo <= 0.0 && -lo * d <= budget,
        })
    }

    /// Builds the body described by a config block.
    pub fn from_config(config: &BodyConfig) -> Result<Self, GeometryError> {
        match config.kind.as_str() {
            "box" => {
                let hi = config.hi.ok_or_else(|| {
                    GeometryError::InvalidInput("box config requires `hi`".into())
                })?;
                Self::axis_box(config.dim, config.lo, hi)
            }
            "simplex" => {
                let budget = config.budget.ok_or_else(|| {
                    GeometryError::InvalidInput("simplex config requires `budget`".into())
                })?;
                Self::simplex(config.dim, config.lo, budget)
            }
            other => Err(GeometryError::InvalidInput(format!(
                "unknown body kind {other:?} (expected \"box\" or \"simplex\")"
            ))),
        }
    }

    pub fn kind(&self) -> &BodyKind {
        &self.kind
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest coordinate value attained anywhere in the body; used to size
    /// objective bounds.
    pub fn coordinate_max(&self) -> f64 {
        match self.kind {
            BodyKind::AxisBox { hi, .. } => hi,
            BodyKind::Simplex { lo, budget } => lo + budget,
        }
    }

    /// Smallest coordinate value attained anywhere in the body.
    pub fn coordinate_min(&self) -> f64 {
        match self.kind {
            BodyKind::AxisBox { lo, .. } => lo,
            BodyKind::Simplex { lo, .. } => lo,
        }
    }

    /// The point of minimal sup-norm, used as the anchor for the
    /// non-monotone transform. For both families this is `lo * 1`.
    pub fn min_sup_norm_point(&self) -> Vec<f64> {
        match self.kind {
            BodyKind::AxisBox { lo, .. } => vec![lo; self.dim],
            BodyKind::Simplex { lo, .. } => vec![lo; self.dim],
        }
    }

    /// Shrinks the body toward its interior center by `delta`, returning the
    /// affine image `(1 - delta/r) * body + (delta/r) * center`.
    pub fn shrink(&self, delta: f64) -> Result<ShrunkBody, GeometryError> {
        if !(delta.is_finite() && delta >= 0.0) || delta >= self.interior_radius {
            return Err(GeometryError::DeltaTooLarge {
                delta,
                interior_radius: self.interior_radius,
            });
        }
        let s = delta / self.interior_radius;
        // Both families are closed under this affine map, so the shrunk set
        // is represented exactly by remapped parameters of the same family.
        let inner = match self.kind {
            BodyKind::AxisBox { lo, hi } => {
                let mid = 0.5 * (lo + hi);
                Self::axis_box(self.dim, (1.0 - s) * lo + s * mid, (1.0 - s) * hi + s * mid)?
            }
            BodyKind::Simplex { lo, budget } => {
                let t = budget / (self.dim as f64 + (self.dim as f64).sqrt());
                Self::simplex(self.dim, lo + s * t, (1.0 - s) * budget)?
            }
        };
        Ok(ShrunkBody {
            base: self.clone(),
            inner,
            delta,
        })
    }

    /// Orthonormal basis of the affine hull's direction space. Both built-in
    /// families are full-dimensional, so this is the standard basis.
    pub fn span_basis(&self) -> SubspaceBasis {
        SubspaceBasis::standard(self.dim)
    }
}

/// Config block for feasible sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BodyConfig {
    pub kind: String,
    pub dim: usize,
    pub lo: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
}

// ---------------------------------------------------------------------------
// The feasible-set interface shared by bodies and their shrunk images
// ---------------------------------------------------------------------------

/// Interface required of a feasible set by the drivers: a linear
/// optimization oracle plus basic geometric data.
pub trait FeasibleSet: Sync {
    fn dim(&self) -> usize;

    /// Maximizes `<dir, x>` over the set, returning a vertex. Ties are broken
    /// toward the lexicographically smallest maximizing vertex. Increments
    /// the shared LOO counter.
    fn loo(&self, dir: &[f64], counters: &Counters) -> Vec<f64>;

    /// Largest constraint violation of `x` (zero when feasible).
    fn violation(&self, x: &[f64]) -> f64;

    /// Circumradius `max ||x||` over the set.
    fn radius(&self) -> f64;

    /// Center of a maximal inscribed ball.
    fn center(&self) -> &[f64];

    /// Radius of the maximal inscribed ball.
    fn interior_radius(&self) -> f64;

    /// Dimension of the affine hull.
    fn affine_dim(&self) -> usize;

    fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.violation(x) <= tol
    }
}

impl FeasibleSet for ConvexBody {
    fn dim(&self) -> usize {
        self.dim
    }

    fn loo(&self, dir: &[f64], counters: &Counters) -> Vec<f64> {
        assert_eq!(dir.len(), self.dim, "direction dimension mismatch");
        counters.loo_calls.fetch_add(1, Ordering::Relaxed);
        match self.kind {
            BodyKind::AxisBox { lo, hi } => {
                // Coordinates separate; a zero component keeps the lower
                // bound, which yields the lexicographically smallest
                // maximizing vertex.
                dir.iter().map(|&g| if g > 0.0 { hi } else { lo }).collect()
            }
            BodyKind::Simplex { lo, budget } => {
                let mut best = 0usize;
                for (i, &g) in dir.iter().enumerate() {
                    // `>=` moves ties to the largest index, whose bump vertex
                    // is lexicographically smallest.
                    if g >= dir[best] {
                        best = i;
                    }
                }
                let mut out = vec![lo; self.dim];
                if dir[best] > 0.0 {
                    out[best] += budget;
                }
                out
            }
        }
    }

    fn violation(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        let mut worst: f64 = 0.0;
        match self.kind {
            BodyKind::AxisBox { lo, hi } => {
                for &xi in x {
                    worst = worst.max(lo - xi).max(xi - hi);
                }
            }
            BodyKind::Simplex { lo, budget } => {
                let mut excess = -budget;
                for &xi in x {
                    worst = worst.max(lo - xi);
                    excess += xi - lo;
                }
                worst = worst.max(excess);
            }
        }
        worst.max(0.0)
    }

    fn radius(&self) -> f64 {
        self.radius
    }

    fn center(&self) -> &[f64] {
        &self.center
    }

    fn interior_radius(&self) -> f64 {
        self.interior_radius
    }

    fn affine_dim(&self) -> usize {
        self.affine_dim
    }
}

impl ConvexBody {
    pub fn contains_origin(&self) -> bool {
        self.contains_origin
    }
}

// ---------------------------------------------------------------------------
// Shrunk bodies
// ---------------------------------------------------------------------------

/// Affine image `(1 - delta/r) * base + (delta/r) * center` of a base body.
///
/// Every point of the shrunk set keeps a `delta`-ball (within the affine
/// hull) inside the base set, which is what makes smoothed play feasible.
#[derive(Debug, Clone)]
pub struct ShrunkBody {
    base: ConvexBody,
    /// The shrunk set itself, represented exactly in the same family.
    inner: ConvexBody,
    delta: f64,
}

impl ShrunkBody {
    pub fn base(&self) -> &ConvexBody {
        &self.base
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// The shrunk set as a plain body (same family, remapped parameters).
    pub fn as_body(&self) -> &ConvexBody {
        &self.inner
    }
}

impl FeasibleSet for ShrunkBody {
    fn dim(&self) -> usize {
        self.inner.dim
    }

    fn loo(&self, dir: &[f64], counters: &Counters) -> Vec<f64> {
        self.inner.loo(dir, counters)
    }

    fn violation(&self, x: &[f64]) -> f64 {
        self.inner.violation(x)
    }

    fn radius(&self) -> f64 {
        self.inner.radius
    }

    fn center(&self) -> &[f64] {
        &self.inner.center
    }

    fn interior_radius(&self) -> f64 {
        self.inner.interior_radius
    }

    fn affine_dim(&self) -> usize {
        self.inner.affine_dim
    }
}

// ---------------------------------------------------------------------------
// Infeasible projection
// ---------------------------------------------------------------------------

/// Output of [`infeasible_project`].
#[derive(Debug, Clone, PartialEq)]
pub struct IpResult {
    /// Feasible iterate `x`.
    pub x_feasible: Vec<f64>,
    /// Pseudo-projection `y~` with `||x - y~||^2 <= 3 eps` and
    /// `||y~ - z|| <= ||y0 - z||` for every feasible `z`.
    pub y_tilde: Vec<f64>,
    /// LOO calls consumed by this invocation.
    pub loo_calls: u64,
    /// Whether `y~` was pulled back onto the circumscribed ball.
    pub clamped: bool,
}

/// Upper bound on the LOO calls one projection may consume, as a function of
/// the set circumradius, the tolerance, and the squared start distance
/// `||x0 - y0||^2`.
pub fn loo_call_bound(radius: f64, eps: f64, dist_sq: f64) -> f64 {
    let sweeps = (27.0 * radius * radius / eps - 2.0).ceil().max(1.0);
    let phases = (dist_sq * (dist_sq - eps) / (4.0 * eps * eps) + 1.0).max(1.0);
    sweeps * phases
}

/// Frank-Wolfe pseudo-projection of `y0` onto a feasible set, started from a
/// feasible `x0`.
///
/// Runs line-searched Frank-Wolfe descent on `phi(w) = ||w - y0||^2` until
/// either the iterate is `3 eps`-close to `y0` or the Frank-Wolfe gap
/// certifies `<y0 - w, z - w> <= eps` for every feasible `z`; in the latter
/// case the pseudo-projection is interpolated between `w` and `y0` so that
/// no feasible point gets farther away. The pseudo-projection is finally
/// pulled onto the circumscribed ball (projection onto a ball containing the
/// set cannot break either guarantee).
pub fn infeasible_project(
    set: &dyn FeasibleSet,
    x0: &[f64],
    y0: &[f64],
    eps: f64,
    counters: &Counters,
) -> Result<IpResult, GeometryError> {
    let dim = set.dim();
    if x0.len() != dim || y0.len() != dim {
        return Err(GeometryError::DimensionMismatch(format!(
            "projection inputs have dims {} and {}, set has {dim}",
            x0.len(),
            y0.len()
        )));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(GeometryError::InvalidInput(format!(
            "projection tolerance must be positive, got {eps}"
        )));
    }
    if !set.contains(x0, FEASIBILITY_TOL) {
        return Err(GeometryError::InvalidInput(format!(
            "projection start point violates the set by {}",
            set.violation(x0)
        )));
    }

    let start_dist_sq = dist_sq(x0, y0);
    let cap_f = loo_call_bound(set.radius(), eps, start_dist_sq);
    let cap = if cap_f >= u64::MAX as f64 {
        u64::MAX
    } else {
        cap_f as u64
    };

    let mut w = x0.to_vec();
    let mut calls = 0u64;
    loop {
        let d_sq = dist_sq(&w, y0);
        if d_sq <= 3.0 * eps {
            // Close enough: y0 itself serves as the pseudo-projection.
            return Ok(finish(set, w, y0.to_vec(), calls));
        }
        if calls >= cap {
            return Err(GeometryError::IterationCapExceeded { cap });
        }
        let u: Vec<f64> = y0.iter().zip(&w).map(|(y, wi)| y - wi).collect();
        let v = set.loo(&u, counters);
        calls += 1;
        let vw: Vec<f64> = v.iter().zip(&w).map(|(vi, wi)| vi - wi).collect();
        let gap = dot(&u, &vw);
        if gap <= eps {
            // Gap certificate: every feasible z satisfies <u, z - w> <= eps,
            // so interpolating toward y0 by sigma keeps all feasible points
            // at least as close as they were to y0.
            let sigma = (2.0 * eps / d_sq - 1.0).max(0.0);
            let y_tilde: Vec<f64> = w
                .iter()
                .zip(y0)
                .map(|(wi, yi)| wi + sigma * (yi - wi))
                .collect();
            return Ok(finish(set, w, y_tilde, calls));
        }
        // Exact line search for the quadratic phi along w -> v, clipped to
        // the segment.
        let denom = dot(&vw, &vw);
        let step = (gap / denom).clamp(0.0, 1.0);
        for (wi, d) in w.iter_mut().zip(&vw) {
            *wi += step * d;
        }
    }
}

/// Clamp the pseudo-projection onto the circumscribed ball and package the
/// result. Projection onto a ball containing the set is a contraction toward
/// every feasible point, so both postconditions survive.
fn finish(
    set: &dyn FeasibleSet,
    x_feasible: Vec<f64>,
    mut y_tilde: Vec<f64>,
    calls: u64,
) -> IpResult {
    let radius = set.radius();
    let norm = y_tilde.iter().map(|v| v * v).sum::<f64>().sqrt();
    let clamped = norm > radius;
    if clamped {
        let scale = radius / norm;
        for v in y_tilde.iter_mut() {
            *v *= scale;
        }
    }
    IpResult {
        x_feasible,
        y_tilde,
        loo_calls: calls,
        clamped,
    }
}

// ---------------------------------------------------------------------------
// Subspace sampling
// ---------------------------------------------------------------------------

/// Orthonormal basis of a linear subspace, used to sample directions within
/// the affine hull of a feasible set.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    ambient_dim: usize,
    vectors: Vec<Vec<f64>>,
}

impl SubspaceBasis {
    /// Standard basis of the full space.
    pub fn standard(dim: usize) -> Self {
        let vectors = (0..dim)
            .map(|i| {
                let mut e = vec![0.0; dim];
                e[i] = 1.0;
                e
            })
            .collect();
        Self {
            ambient_dim: dim,
            vectors,
        }
    }

    /// Wraps explicit basis vectors after validating orthonormality
    /// (Gram matrix within `1e-10` of the identity).
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self, GeometryError> {
        if vectors.is_empty() {
            return Err(GeometryError::DegenerateBasis("no basis vectors".into()));
        }
        let ambient_dim = vectors[0].len();
        if ambient_dim == 0 {
            return Err(GeometryError::DegenerateBasis(
                "zero-dimensional ambient space".into(),
            ));
        }
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != ambient_dim {
                return Err(GeometryError::DimensionMismatch(format!(
                    "basis vector {i} has dim {}, expected {ambient_dim}",
                    v.len()
                )));
            }
            for (j, u) in vectors.iter().enumerate().take(i + 1) {
                let g = dot(v, u);
                let target = if i == j { 1.0 } else { 0.0 };
                if (g - target).abs() > 1e-10 {
                    return Err(GeometryError::InvalidInput(format!(
                        "basis is not orthonormal: <v{i}, v{j}> = {g}"
                    )));
                }
            }
        }
        Ok(Self {
            ambient_dim,
            vectors,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// Subspace dimension `k`.
    pub fn k(&self) -> usize {
        self.vectors.len()
    }

    /// Uniform sample from the unit sphere of the subspace: a standard
    /// Gaussian in basis coordinates, normalized, then mapped out.
    pub fn sample_sphere<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let k = self.k();
        let mut coeffs = vec![0.0; k];
        loop {
            let mut norm_sq = 0.0;
            for c in coeffs.iter_mut() {
                *c = gaussian(rng);
                norm_sq += *c * *c;
            }
            let norm = norm_sq.sqrt();
            if norm > 1e-12 {
                for c in coeffs.iter_mut() {
                    *c /= norm;
                }
                break;
            }
        }
        self.combine(&coeffs)
    }

    /// Uniform sample from the unit ball of the subspace (sphere direction
    /// scaled by `U^{1/k}`).
    pub fn sample_ball<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let k = self.k() as f64;
        let mut v = self.sample_sphere(rng);
        let scale: f64 = rng.gen_range(0.0..1.0f64).powf(1.0 / k);
        for x in v.iter_mut() {
            *x *= scale;
        }
        v
    }

    fn combine(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ambient_dim];
        for (c, v) in coeffs.iter().zip(&self.vectors) {
            for (o, vi) in out.iter_mut().zip(v) {
                *o += c * vi;
            }
        }
        out
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn dist_sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}
