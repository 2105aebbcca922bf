//! Branching process specifications: motion law, branching rate and
//! offspring law, plus the built-in Brownian and finite-type instances.
//!
//! Offspring laws have finite support so that size-biasing and the exact
//! combinatorial oracles can enumerate them. Location-dependent rates are
//! admitted only with a declared global bound, which the thinning sampler
//! needs.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::eigen::{principal_eigenpair, SquareMatrix};
pub use crate::tree::Point;
use crate::tree::PathRecord;

/// Normalization tolerance for offspring pmfs.
pub const PMF_TOL: f64 = 1e-12;
/// Zero-row-sum tolerance for generator matrices.
pub const GENERATOR_TOL: f64 = 1e-12;
/// Tolerance on the invariant measure: `‖π Q‖_∞ ≤ INVARIANT_TOL`.
pub const INVARIANT_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("offspring pmf must sum to 1 within {PMF_TOL} (sum = {0})")]
    PmfNotNormalized(f64),
    #[error("offspring pmf entries must be finite and nonnegative")]
    PmfInvalidEntry,
    #[error("offspring pmf must have at least one entry")]
    PmfEmpty,
    #[error("variances must be strictly positive and finite")]
    NonPositiveVariance,
    #[error("branching rates must be finite and nonnegative")]
    InvalidRate,
    #[error("rate bound must be positive and finite")]
    InvalidRateBound,
    #[error("temperature must be strictly positive")]
    InvalidTemperature,
    #[error("generator must be square with nonnegative off-diagonals and zero row sums")]
    InvalidGenerator,
    #[error("generator has no strictly positive invariant measure (reducible?)")]
    NoInvariantMeasure,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("path record does not cover the requested interval up to t = {0}")]
    PathTooShort(f64),
}

// ---------------------------------------------------------------------------
// Offspring laws
// ---------------------------------------------------------------------------

/// Probability mass function of the offspring count `A` on `0..=k_max`.
/// A particle that dies is replaced by `1 + A` children, so `A = 0` still
/// means one child: these trees never die out.
#[derive(Clone, Debug, PartialEq)]
pub struct Pmf {
    probs: Vec<f64>,
}

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self, ModelError> {
        if probs.is_empty() {
            return Err(ModelError::PmfEmpty);
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(ModelError::PmfInvalidEntry);
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PMF_TOL {
            return Err(ModelError::PmfNotNormalized(sum));
        }
        Ok(Pmf { probs })
    }

    /// `A = 1` almost surely: strictly binary branching.
    pub fn binary() -> Self {
        Pmf {
            probs: vec![0.0, 1.0],
        }
    }

    /// `A = 0` or `A = 2` with equal probability (mean one).
    pub fn zero_or_two() -> Self {
        Pmf {
            probs: vec![0.5, 0.0, 0.5],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn k_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum()
    }

    /// Size-biased law: `(1+k) p_k / (1+m)`. Sums to one by construction.
    pub fn size_biased(&self) -> Pmf {
        let denom = 1.0 + self.mean();
        let probs = self
            .probs
            .iter()
            .enumerate()
            .map(|(k, p)| (1.0 + k as f64) * p / denom)
            .collect();
        Pmf { probs }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (k, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return k as u32;
            }
        }
        self.k_max() as u32
    }
}

/// Offspring law of a model: one pmf everywhere, one per type, or a bounded
/// general callable (pure, so replicate workers can share it).
#[derive(Clone)]
pub enum OffspringSpec {
    Constant(Pmf),
    PerType(Vec<Pmf>),
    General {
        f: Arc<dyn Fn(Point) -> Pmf + Send + Sync>,
        k_max: usize,
    },
}

impl fmt::Debug for OffspringSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OffspringSpec::Constant(p) => write!(f, "Constant({p:?})"),
            OffspringSpec::PerType(v) => write!(f, "PerType({v:?})"),
            OffspringSpec::General { k_max, .. } => write!(f, "General {{ k_max: {k_max} }}"),
        }
    }
}

impl OffspringSpec {
    pub fn pmf_at(&self, p: Point) -> Pmf {
        match self {
            OffspringSpec::Constant(pmf) => pmf.clone(),
            OffspringSpec::PerType(v) => v[p.ty].clone(),
            OffspringSpec::General { f, .. } => f(p),
        }
    }

    pub fn mean_at(&self, p: Point) -> f64 {
        match self {
            OffspringSpec::Constant(pmf) => pmf.mean(),
            OffspringSpec::PerType(v) => v[p.ty].mean(),
            OffspringSpec::General { f, .. } => f(p).mean(),
        }
    }

    /// Upper bound on the offspring mean over the state space.
    pub fn mean_bound(&self) -> f64 {
        match self {
            OffspringSpec::Constant(pmf) => pmf.mean(),
            OffspringSpec::PerType(v) => v.iter().map(Pmf::mean).fold(0.0, f64::max),
            OffspringSpec::General { k_max, .. } => *k_max as f64,
        }
    }

    /// True when the law depends on the location only through the type.
    pub fn is_type_resolved(&self) -> bool {
        !matches!(self, OffspringSpec::General { .. })
    }

    fn validate(&self, n_types: usize) -> Result<(), ModelError> {
        match self {
            OffspringSpec::Constant(_) => Ok(()),
            OffspringSpec::PerType(v) => {
                if v.len() != n_types {
                    return Err(ModelError::Dimension(format!(
                        "offspring law covers {} types, model has {n_types}",
                        v.len()
                    )));
                }
                Ok(())
            }
            OffspringSpec::General { k_max, .. } => {
                if *k_max == 0 {
                    return Err(ModelError::PmfEmpty);
                }
                Ok(())
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Branching rates
// ---------------------------------------------------------------------------

/// Branching rate of a model. General callables must declare a global upper
/// bound; unbounded rates are rejected at validation.
#[derive(Clone)]
pub enum RateSpec {
    Constant(f64),
    PerType(Vec<f64>),
    General {
        f: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
        r_max: f64,
    },
}

impl fmt::Debug for RateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateSpec::Constant(r) => write!(f, "Constant({r})"),
            RateSpec::PerType(v) => write!(f, "PerType({v:?})"),
            RateSpec::General { r_max, .. } => write!(f, "General {{ r_max: {r_max} }}"),
        }
    }
}

impl RateSpec {
    pub fn at(&self, p: Point) -> f64 {
        match self {
            RateSpec::Constant(r) => *r,
            RateSpec::PerType(v) => v[p.ty],
            RateSpec::General { f, .. } => f(p),
        }
    }

    pub fn upper_bound(&self) -> f64 {
        match self {
            RateSpec::Constant(r) => *r,
            RateSpec::PerType(v) => v.iter().cloned().fold(0.0, f64::max),
            RateSpec::General { r_max, .. } => *r_max,
        }
    }

    /// True when the rate depends on the location only through the type, so
    /// it is piecewise constant along a stored path.
    pub fn is_type_resolved(&self) -> bool {
        !matches!(self, RateSpec::General { .. })
    }

    fn validate(&self, n_types: usize) -> Result<(), ModelError> {
        match self {
            RateSpec::Constant(r) => {
                if !r.is_finite() || *r < 0.0 {
                    return Err(ModelError::InvalidRate);
                }
                Ok(())
            }
            RateSpec::PerType(v) => {
                if v.len() != n_types {
                    return Err(ModelError::Dimension(format!(
                        "rate covers {} types, model has {n_types}",
                        v.len()
                    )));
                }
                if v.iter().any(|r| !r.is_finite() || *r < 0.0) {
                    return Err(ModelError::InvalidRate);
                }
                Ok(())
            }
            RateSpec::General { r_max, .. } => {
                if !r_max.is_finite() || *r_max <= 0.0 {
                    return Err(ModelError::InvalidRateBound);
                }
                Ok(())
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Motion laws and the model record
// ---------------------------------------------------------------------------

/// Spatial motion of a single particle.
///
/// The finite-type variant moves the type as a Markov chain with generator
/// `theta Q` and diffuses the spatial coordinate with instantaneous variance
/// `variance[y]` in type `y` (increments of standard deviation
/// `sqrt(variance[y] dt)`, matching the generator `variance/2 d²/dx²`).
#[derive(Clone, Debug, PartialEq)]
pub enum MotionLaw {
    /// Unit-variance Brownian motion with constant drift.
    Bbm { drift: f64 },
    /// Typed diffusion: type chain with Q-matrix `theta * q` and invariant
    /// measure `pi`; per-type spatial variance.
    FiniteType {
        variance: Vec<f64>,
        theta: f64,
        q: Vec<Vec<f64>>,
        pi: Vec<f64>,
    },
    /// Deterministic test motion: zero variance, constant drift.
    Degenerate { drift: f64 },
}

impl MotionLaw {
    pub fn n_types(&self) -> usize {
        match self {
            MotionLaw::Bbm { .. } | MotionLaw::Degenerate { .. } => 1,
            MotionLaw::FiniteType { variance, .. } => variance.len(),
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        match self {
            MotionLaw::Bbm { drift } | MotionLaw::Degenerate { drift } => {
                if !drift.is_finite() {
                    return Err(ModelError::InvalidRate);
                }
                Ok(())
            }
            MotionLaw::FiniteType {
                variance,
                theta,
                q,
                pi,
            } => {
                let n = variance.len();
                if n == 0 {
                    return Err(ModelError::InvalidGenerator);
                }
                if variance.iter().any(|a| !a.is_finite() || *a <= 0.0) {
                    return Err(ModelError::NonPositiveVariance);
                }
                if !theta.is_finite() || *theta <= 0.0 {
                    return Err(ModelError::InvalidTemperature);
                }
                if q.len() != n || q.iter().any(|row| row.len() != n) {
                    return Err(ModelError::InvalidGenerator);
                }
                for (i, row) in q.iter().enumerate() {
                    let sum: f64 = row.iter().sum();
                    if sum.abs() > GENERATOR_TOL {
                        return Err(ModelError::InvalidGenerator);
                    }
                    for (j, &v) in row.iter().enumerate() {
                        if !v.is_finite() || (i != j && v < 0.0) {
                            return Err(ModelError::InvalidGenerator);
                        }
                    }
                }
                if pi.len() != n {
                    return Err(ModelError::Dimension("invariant measure length".into()));
                }
                // pi Q = 0 within tolerance.
                for j in 0..n {
                    let dot: f64 = (0..n).map(|i| pi[i] * q[i][j]).sum();
                    if dot.abs() > INVARIANT_TOL {
                        return Err(ModelError::NoInvariantMeasure);
                    }
                }
                Ok(())
            }
        }
    }
}

/// Full specification of a branching Markov process.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub motion: MotionLaw,
    pub rate: RateSpec,
    pub offspring: OffspringSpec,
}

impl ModelSpec {
    pub fn new(
        motion: MotionLaw,
        rate: RateSpec,
        offspring: OffspringSpec,
    ) -> Result<Self, ModelError> {
        motion.validate()?;
        rate.validate(motion.n_types())?;
        offspring.validate(motion.n_types())?;
        Ok(ModelSpec {
            motion,
            rate,
            offspring,
        })
    }

    pub fn n_types(&self) -> usize {
        self.motion.n_types()
    }

    /// Mean offspring per type; requires a type-resolved offspring law.
    pub fn mean_by_type(&self) -> Result<Vec<f64>, ModelError> {
        if !self.offspring.is_type_resolved() {
            return Err(ModelError::Dimension(
                "offspring law is not type-resolved".into(),
            ));
        }
        Ok((0..self.n_types())
            .map(|ty| self.offspring.mean_at(Point { x: 0.0, ty }))
            .collect())
    }

    /// Rate per type; requires a type-resolved rate.
    pub fn rate_by_type(&self) -> Result<Vec<f64>, ModelError> {
        if !self.rate.is_type_resolved() {
            return Err(ModelError::Dimension("rate is not type-resolved".into()));
        }
        Ok((0..self.n_types())
            .map(|ty| self.rate.at(Point { x: 0.0, ty }))
            .collect())
    }
}

/// Driftless unit-variance branching Brownian motion with constant rate.
pub fn bbm_model(r: f64, offspring: Pmf) -> Result<ModelSpec, ModelError> {
    if !r.is_finite() || r < 0.0 {
        return Err(ModelError::InvalidRate);
    }
    ModelSpec::new(
        MotionLaw::Bbm { drift: 0.0 },
        RateSpec::Constant(r),
        OffspringSpec::Constant(offspring),
    )
}

/// Deterministic drift motion (zero variance) with constant branching rate.
pub fn degenerate_model(drift: f64, r: f64, offspring: Pmf) -> Result<ModelSpec, ModelError> {
    ModelSpec::new(
        MotionLaw::Degenerate { drift },
        RateSpec::Constant(r),
        OffspringSpec::Constant(offspring),
    )
}

/// Binary-branching typed diffusion: per-type variance and rate, type chain
/// with Q-matrix `theta * q`. The invariant measure is computed from `q`.
pub fn finite_type_model(
    variance: &[f64],
    rates: &[f64],
    theta: f64,
    q: Vec<Vec<f64>>,
) -> Result<ModelSpec, ModelError> {
    let n = variance.len();
    if rates.len() != n {
        return Err(ModelError::Dimension(format!(
            "{} rates for {n} types",
            rates.len()
        )));
    }
    let pi = invariant_measure(&q)?;
    ModelSpec::new(
        MotionLaw::FiniteType {
            variance: variance.to_vec(),
            theta,
            q,
            pi,
        },
        RateSpec::PerType(rates.to_vec()),
        OffspringSpec::Constant(Pmf::binary()),
    )
}

/// Strictly positive solution of `pi Q = 0`, normalized to sum 1: the Perron
/// vector of the transposed generator.
fn invariant_measure(q: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
    let n = q.len();
    if n == 0 || q.iter().any(|row| row.len() != n) {
        return Err(ModelError::InvalidGenerator);
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let m = SquareMatrix::from_rows(q).map_err(|_| ModelError::InvalidGenerator)?;
    let (_, v) =
        principal_eigenpair(&m.transpose()).map_err(|_| ModelError::NoInvariantMeasure)?;
    let sum: f64 = v.iter().sum();
    Ok(v.into_iter().map(|x| x / sum).collect())
}

/// The size-biased offspring law at a location.
pub fn size_biased_pmf(offspring: &OffspringSpec, at: Point) -> Pmf {
    offspring.pmf_at(at).size_biased()
}

// ---------------------------------------------------------------------------
// Path integrals
// ---------------------------------------------------------------------------

/// `(∫ R ds, ∫ m·R ds)` along a stored path from its start up to `t`.
///
/// Exact for type-resolved rates and offspring laws (the integrand is
/// piecewise constant between breakpoints); trapezoidal on the stored grid
/// when either ingredient is a general callable, which biases the estimate at
/// the grid resolution.
pub fn rate_and_mean_along(
    model: &ModelSpec,
    path: &PathRecord,
    t: f64,
) -> Result<(f64, f64), ModelError> {
    if t < path.start_time() || t > path.end_time() {
        return Err(ModelError::PathTooShort(t));
    }
    if t == path.start_time() {
        return Ok((0.0, 0.0));
    }
    // Effectively constant in space and type: closed form. One-type
    // per-type specs count, so the one-type model reduces to the plain
    // Brownian one bit for bit.
    let const_rate = match &model.rate {
        RateSpec::Constant(r) => Some(*r),
        RateSpec::PerType(v) if v.len() == 1 => Some(v[0]),
        _ => None,
    };
    let const_mean = match &model.offspring {
        OffspringSpec::Constant(pmf) => Some(pmf.mean()),
        OffspringSpec::PerType(v) if v.len() == 1 => Some(v[0].mean()),
        _ => None,
    };
    if let (Some(r), Some(m)) = (const_rate, const_mean) {
        let span = t - path.start_time();
        return Ok((r * span, m * r * span));
    }
    let piecewise = model.rate.is_type_resolved() && model.offspring.is_type_resolved();
    let mut int_r = 0.0;
    let mut int_mr = 0.0;
    let pts: Vec<(f64, Point)> = path.breakpoints().collect();
    for w in pts.windows(2) {
        let (t0, p0) = w[0];
        let (t1, p1) = w[1];
        if t0 >= t {
            break;
        }
        let hi = t1.min(t);
        let h = hi - t0;
        if piecewise {
            let r = model.rate.at(p0);
            let m = model.offspring.mean_at(p0);
            int_r += r * h;
            int_mr += m * r * h;
        } else {
            let (r0, r1) = (model.rate.at(p0), model.rate.at(p1));
            let (m0, m1) = (model.offspring.mean_at(p0), model.offspring.mean_at(p1));
            int_r += 0.5 * (r0 + r1) * h;
            int_mr += 0.5 * (m0 * r0 + m1 * r1) * h;
        }
    }
    Ok((int_r, int_mr))
}
