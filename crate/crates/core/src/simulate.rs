//! Forward samplers for the three laws of the branching process.
//!
//! * `P`: the plain branching law. Every particle diffuses, fissions at the
//!   model rate along its own path (a Cox process), and is replaced by
//!   `1 + A` children at its death location.
//! * `P~`: the same trees with a distinguished spine chosen uniformly at each
//!   fission.
//! * `Q~`: the spine-changed law. The spine is simulated first — tilted
//!   motion, fission at the accelerated rate `(1+m)R`, size-biased offspring,
//!   a uniform choice of which child continues the spine — and every
//!   non-spine child then seeds an independent plain subtree from its birth
//!   space-time point. The construction mirrors the product decomposition of
//!   the changed measure term by term.
//!
//! Per-node randomness is keyed by `(seed, replicate, label hash)`, so
//! construction order does not matter and identical configurations yield
//! bit-identical trees.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use thiserror::Error;

use crate::eigen::{MartingaleSpec, ZetaForm};
use crate::model::{ModelError, ModelSpec, MotionLaw, RateSpec};
use crate::stream::{self, derive_rng};
use crate::tree::{Label, MarkedTree, NodeMark, PathRecord, Point, Spine, TreeError};

/// Default storage resolution of Brownian segments.
pub const DEFAULT_GRID_STEP: f64 = 1.0 / 64.0;
/// Default explosion guard: supercritical populations grow exponentially in
/// the horizon, so the sampler refuses to build beyond this many nodes.
pub const DEFAULT_NODE_CAP: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("node cap of {0} exceeded while growing the tree")]
    Explosion(usize),
    #[error("measure and model are inconsistent: {0}")]
    InconsistentSpec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Which law to sample under. The spine-changed law carries the martingale
/// specification that drives the spine's tilted motion.
#[derive(Clone, Debug)]
pub enum Measure {
    P,
    PTilde,
    QTilde(MartingaleSpec),
}

impl Measure {
    pub fn tag(&self) -> &'static str {
        match self {
            Measure::P => "p",
            Measure::PTilde => "ptilde",
            Measure::QTilde(_) => "qtilde",
        }
    }
}

/// One simulation request: model, law, horizon, storage grid and stream key.
#[derive(Clone, Debug)]
pub struct SimConfig {
    pub model: ModelSpec,
    pub measure: Measure,
    pub t_max: f64,
    pub grid_step: f64,
    pub seed: u64,
    pub replicate: u64,
    pub node_cap: usize,
    pub start: Point,
}

impl SimConfig {
    pub fn new(model: ModelSpec, measure: Measure, t_max: f64, seed: u64) -> Self {
        SimConfig {
            model,
            measure,
            t_max,
            grid_step: DEFAULT_GRID_STEP,
            seed,
            replicate: 0,
            node_cap: DEFAULT_NODE_CAP,
            start: Point { x: 0.0, ty: 0 },
        }
    }

    pub fn with_replicate(mut self, replicate: u64) -> Self {
        self.replicate = replicate;
        self
    }

    pub fn with_start(mut self, start: Point) -> Self {
        self.start = start;
        self
    }

    pub fn with_grid_step(mut self, grid_step: f64) -> Self {
        self.grid_step = grid_step;
        self
    }

    pub fn with_node_cap(mut self, node_cap: usize) -> Self {
        self.node_cap = node_cap;
        self
    }

    fn validate(&self) -> Result<(), SimError> {
        let t_max_ok = self.t_max.is_finite() && self.t_max > 0.0;
        if !t_max_ok {
            return Err(SimError::InconsistentSpec("t_max must be positive".into()));
        }
        let grid_ok = self.grid_step > 0.0;
        if !grid_ok {
            return Err(SimError::InconsistentSpec(
                "grid step must be positive".into(),
            ));
        }
        if self.start.ty >= self.model.n_types() {
            return Err(SimError::InconsistentSpec(format!(
                "start type {} out of range for {} types",
                self.start.ty,
                self.model.n_types()
            )));
        }
        if let Measure::QTilde(spec) = &self.measure {
            check_spec_against_model(spec, &self.model)?;
        }
        Ok(())
    }
}

/// A martingale spec is usable with a model when the functional form matches
/// the motion law (and the type dimensions agree).
pub fn check_spec_against_model(spec: &MartingaleSpec, model: &ModelSpec) -> Result<(), SimError> {
    match (&spec.form, &model.motion) {
        (ZetaForm::Bbm, MotionLaw::Bbm { .. }) => Ok(()),
        (ZetaForm::FiniteType { v, .. }, MotionLaw::FiniteType { variance, .. }) => {
            if v.len() != variance.len() {
                Err(SimError::InconsistentSpec(format!(
                    "martingale covers {} types, model has {}",
                    v.len(),
                    variance.len()
                )))
            } else {
                Ok(())
            }
        }
        (form, motion) => Err(SimError::InconsistentSpec(format!(
            "martingale form {form:?} does not match motion {motion:?}"
        ))),
    }
}

// ---------------------------------------------------------------------------
// Effective single-particle dynamics
// ---------------------------------------------------------------------------

/// Lowered motion parameters shared by every model kind, so that e.g. the
/// one-type typed diffusion and plain Brownian motion follow the exact same
/// code path (and draw sequence).
#[derive(Clone, Debug)]
struct Dynamics {
    drift: Vec<f64>,
    variance: Vec<f64>,
    /// Off-diagonal jump rates; `jump[i][j]` for `j != i`.
    jump: Vec<Vec<f64>>,
    /// Total exit rate per type.
    exit: Vec<f64>,
    /// Zero-variance deterministic motion: positions are computed in closed
    /// form instead of by accumulation.
    degenerate: bool,
}

impl Dynamics {
    fn plain(motion: &MotionLaw) -> Dynamics {
        match motion {
            MotionLaw::Bbm { drift } => Dynamics {
                drift: vec![*drift],
                variance: vec![1.0],
                jump: vec![vec![0.0]],
                exit: vec![0.0],
                degenerate: false,
            },
            MotionLaw::Degenerate { drift } => Dynamics {
                drift: vec![*drift],
                variance: vec![0.0],
                jump: vec![vec![0.0]],
                exit: vec![0.0],
                degenerate: true,
            },
            MotionLaw::FiniteType {
                variance, theta, q, ..
            } => {
                let n = variance.len();
                let mut jump = vec![vec![0.0; n]; n];
                let mut exit = vec![0.0; n];
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            jump[i][j] = theta * q[i][j];
                            exit[i] += jump[i][j];
                        }
                    }
                }
                Dynamics {
                    drift: vec![0.0; n],
                    variance: variance.clone(),
                    jump,
                    exit,
                    degenerate: false,
                }
            }
        }
    }

    /// Dynamics of the spine under the changed measure: the single-particle
    /// law tilted by the martingale functional. For Brownian motion this adds
    /// drift `lambda`; for the typed diffusion it adds spatial drift
    /// `lambda * a(y)` and reweights the jump rates by `v(j)/v(y)` (the
    /// h-transform of the type chain by the eigenvector).
    fn tilted(motion: &MotionLaw, spec: &MartingaleSpec) -> Result<Dynamics, SimError> {
        let mut dyn_ = Dynamics::plain(motion);
        match (&spec.form, motion) {
            (ZetaForm::Bbm, MotionLaw::Bbm { .. }) => {
                dyn_.drift[0] += spec.lambda;
                Ok(dyn_)
            }
            (ZetaForm::FiniteType { v, .. }, MotionLaw::FiniteType { variance, .. }) => {
                if v.len() != variance.len() {
                    return Err(SimError::InconsistentSpec(
                        "martingale/model type count mismatch".into(),
                    ));
                }
                let n = variance.len();
                for y in 0..n {
                    dyn_.drift[y] = spec.lambda * variance[y];
                    dyn_.exit[y] = 0.0;
                    for j in 0..n {
                        if j != y {
                            dyn_.jump[y][j] *= v[j] / v[y];
                            dyn_.exit[y] += dyn_.jump[y][j];
                        }
                    }
                }
                Ok(dyn_)
            }
            _ => Err(SimError::InconsistentSpec(
                "tilted dynamics need a matching martingale form".into(),
            )),
        }
    }
}

/// Fission intensity along a path.
#[derive(Clone)]
enum Intensity {
    /// No fission at all (single-particle samplers).
    None,
    /// Piecewise-constant in the type: exact inversion sampling.
    TypeResolved(Vec<f64>),
    /// General bounded rate: Lewis-Shedler thinning against the bound.
    General {
        f: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
        bound: f64,
    },
}

/// Builds the fission intensity for a model; `accelerated` multiplies the
/// rate by `1 + m(x)` (the spine's rate under the changed measure).
fn fission_intensity(model: &ModelSpec, accelerated: bool) -> Intensity {
    let type_resolved = model.rate.is_type_resolved()
        && (!accelerated || model.offspring.is_type_resolved());
    if type_resolved {
        let n = model.n_types();
        let values = (0..n)
            .map(|ty| {
                let p = Point { x: 0.0, ty };
                let base = model.rate.at(p);
                if accelerated {
                    (1.0 + model.offspring.mean_at(p)) * base
                } else {
                    base
                }
            })
            .collect();
        Intensity::TypeResolved(values)
    } else {
        let rate = model.rate.clone();
        let offspring = model.offspring.clone();
        let bound = if accelerated {
            (1.0 + model.offspring.mean_bound()) * model.rate.upper_bound()
        } else {
            model.rate.upper_bound()
        };
        Intensity::General {
            f: Arc::new(move |p: Point| {
                let base = rate.at(p);
                if accelerated {
                    (1.0 + offspring.mean_at(p)) * base
                } else {
                    base
                }
            }),
            bound,
        }
    }
}

// ---------------------------------------------------------------------------
// The particle engine
// ---------------------------------------------------------------------------

struct SegmentOutcome {
    path: PathRecord,
    /// Fission time and location, or `None` when the horizon was reached.
    fission: Option<(f64, Point)>,
}

/// Smallest grid multiple strictly greater than `t`.
fn next_grid_time(t: f64, step: f64) -> f64 {
    let mut k = (t / step).floor() + 1.0;
    while k * step <= t {
        k += 1.0;
    }
    k * step
}

/// Simulates one particle from `(birth, start)` until fission or the
/// horizon, recording breakpoints at grid times, type switches, thinning
/// proposals and the endpoint.
///
/// Draw order is chronological and fixed: the inversion target (if any) and
/// the initial holding/proposal clocks first, then one draw per event.
fn simulate_segment<R: Rng>(
    dynamics: &Dynamics,
    intensity: &Intensity,
    birth: f64,
    start: Point,
    t_max: f64,
    grid_step: f64,
    rng: &mut R,
) -> SegmentOutcome {
    let mut path = PathRecord::new(birth, start);
    let mut t = birth;
    let mut p = start;

    // Cumulative-hazard target for inversion sampling.
    let mut hazard_acc = 0.0;
    let mut hazard_target = f64::INFINITY;
    if let Intensity::TypeResolved(_) = intensity {
        let e: f64 = Exp1.sample(rng);
        hazard_target = e;
    }
    // First thinning proposal.
    let mut next_proposal = f64::INFINITY;
    if let Intensity::General { bound, .. } = intensity {
        let e: f64 = Exp1.sample(rng);
        next_proposal = t + e / bound;
    }
    // Holding clock of the birth type.
    let mut next_switch = if dynamics.exit[p.ty] > 0.0 {
        let e: f64 = Exp1.sample(rng);
        t + e / dynamics.exit[p.ty]
    } else {
        f64::INFINITY
    };

    loop {
        let next_grid = next_grid_time(t, grid_step);
        let t_next = t_max.min(next_grid).min(next_switch).min(next_proposal);

        // Exact inversion: does the hazard reach its target on this stretch?
        if let Intensity::TypeResolved(rates) = intensity {
            let rho = rates[p.ty];
            if rho > 0.0 && t_next > t {
                let reach = hazard_acc + rho * (t_next - t);
                if reach >= hazard_target {
                    let t_f = (t + (hazard_target - hazard_acc) / rho).min(t_next);
                    if t_f > t {
                        advance_motion(dynamics, &mut p, t, t_f, birth, start, rng);
                        path.push(t_f, p);
                    }
                    return SegmentOutcome {
                        path,
                        fission: Some((t_f.max(t), p)),
                    };
                }
                hazard_acc = reach;
            }
        }

        // Zero-length stretches (a clock landing exactly on `t`) process
        // their event without advancing the motion.
        if t_next > t {
            advance_motion(dynamics, &mut p, t, t_next, birth, start, rng);
            path.push(t_next, p);
        }

        if t_next >= t_max {
            return SegmentOutcome {
                path,
                fission: None,
            };
        }
        if t_next == next_proposal {
            if let Intensity::General { f, bound } = intensity {
                let u: f64 = rng.gen();
                if u * *bound < f(p) {
                    return SegmentOutcome {
                        path,
                        fission: Some((t_next, p)),
                    };
                }
                let e: f64 = Exp1.sample(rng);
                next_proposal = t_next + e / bound;
            }
        }
        if t_next == next_switch {
            let new_ty = sample_jump(&dynamics.jump[p.ty], p.ty, rng);
            p.ty = new_ty;
            // The segment to the right of the switch carries the new type.
            path.replace_end_point(p);
            next_switch = if dynamics.exit[p.ty] > 0.0 {
                let e: f64 = Exp1.sample(rng);
                t_next + e / dynamics.exit[p.ty]
            } else {
                f64::INFINITY
            };
        }
        t = t_next;
    }
}

fn advance_motion<R: Rng>(
    dynamics: &Dynamics,
    p: &mut Point,
    t_from: f64,
    t_to: f64,
    birth: f64,
    start: Point,
    rng: &mut R,
) {
    if t_to <= t_from {
        return;
    }
    if dynamics.degenerate {
        // Closed form from the segment start avoids accumulation error.
        p.x = start.x + dynamics.drift[p.ty] * (t_to - birth);
        return;
    }
    let h = t_to - t_from;
    let z: f64 = StandardNormal.sample(rng);
    p.x += dynamics.drift[p.ty] * h + (dynamics.variance[p.ty] * h).sqrt() * z;
}

fn sample_jump<R: Rng>(rates: &[f64], from: usize, rng: &mut R) -> usize {
    let total: f64 = rates.iter().sum();
    let u: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (j, &r) in rates.iter().enumerate() {
        if j == from {
            continue;
        }
        acc += r;
        if u < acc {
            return j;
        }
    }
    // Numerical edge: fall back to the last positive-rate target.
    rates
        .iter()
        .enumerate()
        .filter(|(j, &r)| *j != from && r > 0.0)
        .map(|(j, _)| j)
        .next_back()
        .unwrap_or(from)
}

fn node_rng(seed: u64, replicate: u64, label: &Label) -> rand_chacha::ChaCha8Rng {
    derive_rng(seed, &[stream::CTX_NODE, replicate, label.stream_hash()])
}

// ---------------------------------------------------------------------------
// Tree samplers
// ---------------------------------------------------------------------------

struct Budget {
    used: usize,
    cap: usize,
}

impl Budget {
    fn charge(&mut self) -> Result<(), SimError> {
        self.used += 1;
        if self.used > self.cap {
            Err(SimError::Explosion(self.cap))
        } else {
            Ok(())
        }
    }
}

/// Grows a plain subtree rooted at `root_label` from its birth space-time
/// point, inserting nodes into `nodes`. Randomness is keyed per node label.
#[allow(clippy::too_many_arguments)]
fn grow_plain_subtree(
    model: &ModelSpec,
    dynamics: &Dynamics,
    intensity: &Intensity,
    config: &SimConfig,
    stream_replicate: u64,
    root_label: Label,
    birth: f64,
    start: Point,
    budget: &mut Budget,
    nodes: &mut BTreeMap<Label, NodeMark>,
) -> Result<(), SimError> {
    let mut queue: VecDeque<(Label, f64, Point)> = VecDeque::new();
    queue.push_back((root_label, birth, start));
    while let Some((label, birth, start)) = queue.pop_front() {
        budget.charge()?;
        let mut rng = node_rng(config.seed, stream_replicate, &label);
        let outcome = simulate_segment(
            dynamics,
            intensity,
            birth,
            start,
            config.t_max,
            config.grid_step,
            &mut rng,
        );
        match outcome.fission {
            Some((t_f, p_f)) => {
                let a = model.offspring.pmf_at(p_f).sample(&mut rng);
                for j in 1..=(1 + a) {
                    queue.push_back((label.child(j), t_f, p_f));
                }
                nodes.insert(label, NodeMark::new(birth, t_f, Some(a), outcome.path));
            }
            None => {
                nodes.insert(
                    label,
                    NodeMark::new(birth, f64::INFINITY, None, outcome.path),
                );
            }
        }
    }
    Ok(())
}

/// Samples a tree under the plain branching law `P`.
pub fn simulate_tree_p(config: &SimConfig) -> Result<MarkedTree, SimError> {
    config.validate()?;
    if matches!(config.measure, Measure::QTilde(_)) {
        return Err(SimError::InconsistentSpec(
            "simulate_tree_p samples under P; use simulate_q_tilde".into(),
        ));
    }
    let dynamics = Dynamics::plain(&config.model.motion);
    let intensity = fission_intensity(&config.model, false);
    let mut nodes = BTreeMap::new();
    let mut budget = Budget {
        used: 0,
        cap: config.node_cap,
    };
    grow_plain_subtree(
        &config.model,
        &dynamics,
        &intensity,
        config,
        config.replicate,
        Label::root(),
        0.0,
        config.start,
        &mut budget,
        &mut nodes,
    )?;
    Ok(MarkedTree::from_parts(0.0, config.start, config.t_max, nodes))
}

/// Chooses a spine by walking down from the root, picking uniformly among
/// the `1 + A` children at each fission. Together with [`simulate_tree_p`]
/// this realizes the law of the tree with a uniformly distinguished line of
/// descent.
pub fn attach_uniform_spine<R: Rng>(tree: &MarkedTree, rng: &mut R) -> Result<Spine, SimError> {
    let mut cur = Label::root();
    loop {
        let mark = tree.node(&cur)?;
        match mark.offspring() {
            None => break,
            Some(a) => {
                let j = rng.gen_range(1..=(1 + a));
                cur = cur.child(j);
            }
        }
    }
    Ok(Spine::from_tip(cur))
}

/// Samples `(tree, spine)` under the spined plain law `P~`.
pub fn simulate_p_tilde(config: &SimConfig) -> Result<(MarkedTree, Spine), SimError> {
    let tree = simulate_tree_p(config)?;
    let mut rng = derive_rng(
        config.seed,
        &[stream::CTX_SPINE_CHOICE, config.replicate],
    );
    let spine = attach_uniform_spine(&tree, &mut rng)?;
    Ok((tree, spine))
}

// ---------------------------------------------------------------------------
// The spine-changed law
// ---------------------------------------------------------------------------

/// One fission on the spine: when, where, how many offspring, and which
/// child index continues the spine.
#[derive(Clone, Debug, PartialEq)]
pub struct SpineFission {
    pub time: f64,
    pub location: Point,
    pub offspring: u32,
    pub chosen: u32,
}

/// The spine's own realization under the changed measure: its full path and
/// its fission record. This is exactly the information the spine-path
/// filtration carries, and it is all the spine decomposition may read.
#[derive(Clone, Debug, PartialEq)]
pub struct SpineSkeleton {
    pub path: PathRecord,
    pub fissions: Vec<SpineFission>,
}

impl SpineSkeleton {
    /// Labels of the spine nodes implied by the chosen child indices.
    pub fn spine_labels(&self) -> Vec<Label> {
        let mut out = vec![Label::root()];
        for f in &self.fissions {
            out.push(out.last().unwrap().child(f.chosen));
        }
        out
    }
}

/// Simulates the spine alone under the changed measure: tilted motion,
/// fission at rate `(1+m)R` along it, size-biased offspring, uniform choice
/// of the continuing child.
pub fn simulate_spine_skeleton(config: &SimConfig) -> Result<SpineSkeleton, SimError> {
    config.validate()?;
    let Measure::QTilde(spec) = &config.measure else {
        return Err(SimError::InconsistentSpec(
            "spine skeletons exist under the changed measure only".into(),
        ));
    };
    let dynamics = Dynamics::tilted(&config.model.motion, spec)?;
    let intensity = fission_intensity(&config.model, true);

    let mut path: Option<PathRecord> = None;
    let mut fissions = Vec::new();
    let mut label = Label::root();
    let mut birth = 0.0;
    let mut start = config.start;
    let mut guard = 0usize;
    loop {
        guard += 1;
        if guard > config.node_cap {
            return Err(SimError::Explosion(config.node_cap));
        }
        let mut rng = node_rng(config.seed, config.replicate, &label);
        let outcome = simulate_segment(
            &dynamics,
            &intensity,
            birth,
            start,
            config.t_max,
            config.grid_step,
            &mut rng,
        );
        match &mut path {
            None => path = Some(outcome.path),
            Some(acc) => acc.extend_with(&outcome.path),
        }
        match outcome.fission {
            Some((t_f, p_f)) => {
                let a = config
                    .model
                    .offspring
                    .pmf_at(p_f)
                    .size_biased()
                    .sample(&mut rng);
                let chosen = rng.gen_range(1..=(1 + a));
                fissions.push(SpineFission {
                    time: t_f,
                    location: p_f,
                    offspring: a,
                    chosen,
                });
                label = label.child(chosen);
                birth = t_f;
                start = p_f;
            }
            None => break,
        }
    }
    Ok(SpineSkeleton {
        path: path.unwrap(),
        fissions,
    })
}

/// Assembles a full tree around a fixed spine skeleton: every non-spine
/// child of a spine fission seeds an independent plain subtree from its
/// birth point. `subtree_replicate` keys the subtree randomness, so nested
/// resampling can hold the skeleton fixed while redrawing the bushes.
pub fn tree_from_skeleton(
    config: &SimConfig,
    skeleton: &SpineSkeleton,
    subtree_replicate: u64,
) -> Result<(MarkedTree, Spine), SimError> {
    config.validate()?;
    let dynamics = Dynamics::plain(&config.model.motion);
    let intensity = fission_intensity(&config.model, false);
    let mut nodes = BTreeMap::new();
    let mut budget = Budget {
        used: 0,
        cap: config.node_cap,
    };

    let spine_labels = skeleton.spine_labels();
    // Spine nodes: segments of the skeleton path between fissions.
    for (k, label) in spine_labels.iter().enumerate() {
        budget.charge()?;
        let birth = if k == 0 {
            0.0
        } else {
            skeleton.fissions[k - 1].time
        };
        let (fission, offspring, end) = if k < skeleton.fissions.len() {
            let f = &skeleton.fissions[k];
            (f.time, Some(f.offspring), f.time)
        } else {
            (f64::INFINITY, None, config.t_max)
        };
        let seg = skeleton.path.window(birth, end)?;
        nodes.insert(label.clone(), NodeMark::new(birth, fission, offspring, seg));
    }
    // Non-spine children grow plain subtrees.
    for (k, f) in skeleton.fissions.iter().enumerate() {
        for j in 1..=(1 + f.offspring) {
            if j == f.chosen {
                continue;
            }
            grow_plain_subtree(
                &config.model,
                &dynamics,
                &intensity,
                config,
                subtree_replicate,
                spine_labels[k].child(j),
                f.time,
                f.location,
                &mut budget,
                &mut nodes,
            )?;
        }
    }
    let tree = MarkedTree::from_parts(0.0, config.start, config.t_max, nodes);
    let spine = Spine::from_tip(spine_labels.last().unwrap().clone());
    Ok((tree, spine))
}

/// Samples `(tree, spine)` under the spine-changed law: the spine first,
/// then independent plain subtrees hanging off it.
pub fn simulate_q_tilde(config: &SimConfig) -> Result<(MarkedTree, Spine), SimError> {
    let skeleton = simulate_spine_skeleton(config)?;
    tree_from_skeleton(config, &skeleton, config.replicate)
}

/// Dispatches on the configured measure.
pub fn simulate(config: &SimConfig) -> Result<(MarkedTree, Option<Spine>), SimError> {
    match &config.measure {
        Measure::P => Ok((simulate_tree_p(config)?, None)),
        Measure::PTilde => {
            let (tree, spine) = simulate_p_tilde(config)?;
            Ok((tree, Some(spine)))
        }
        Measure::QTilde(_) => {
            let (tree, spine) = simulate_q_tilde(config)?;
            Ok((tree, Some(spine)))
        }
    }
}

// ---------------------------------------------------------------------------
// Single-particle samplers
// ---------------------------------------------------------------------------

/// Law of a lone particle: the plain single-particle motion, or the same
/// motion tilted by a martingale functional.
#[derive(Clone, Debug)]
pub enum ParticleLaw {
    Plain,
    Tilted(MartingaleSpec),
}

/// Simulates one particle's path (no branching) over `[0, t_max]`.
pub fn simulate_single_particle(
    model: &ModelSpec,
    law: &ParticleLaw,
    t_max: f64,
    grid_step: f64,
    seed: u64,
    replicate: u64,
    start: Point,
) -> Result<PathRecord, SimError> {
    let dynamics = match law {
        ParticleLaw::Plain => Dynamics::plain(&model.motion),
        ParticleLaw::Tilted(spec) => Dynamics::tilted(&model.motion, spec)?,
    };
    let mut rng = derive_rng(seed, &[stream::CTX_PARTICLE, replicate]);
    let outcome = simulate_segment(
        &dynamics,
        &Intensity::None,
        0.0,
        start,
        t_max,
        grid_step,
        &mut rng,
    );
    Ok(outcome.path)
}

/// First arrival of a Cox process with the model's rate along a stored path:
/// exact inversion for type-resolved rates, thinning against the declared
/// bound otherwise. Returns `None` when no arrival occurs before the record
/// ends.
pub fn first_cox_arrival<R: Rng>(
    rate: &RateSpec,
    path: &PathRecord,
    rng: &mut R,
) -> Option<f64> {
    match rate {
        RateSpec::Constant(_) | RateSpec::PerType(_) => {
            let target: f64 = Exp1.sample(rng);
            let mut acc = 0.0;
            let pts: Vec<(f64, Point)> = path.breakpoints().collect();
            for w in pts.windows(2) {
                let (t0, p0) = w[0];
                let (t1, _) = w[1];
                let rho = rate.at(p0);
                if rho <= 0.0 {
                    continue;
                }
                let reach = acc + rho * (t1 - t0);
                if reach >= target {
                    return Some(t0 + (target - acc) / rho);
                }
                acc = reach;
            }
            None
        }
        RateSpec::General { f, r_max } => {
            let mut t = path.start_time();
            loop {
                let e: f64 = Exp1.sample(rng);
                t += e / r_max;
                if t > path.end_time() {
                    return None;
                }
                let p = path.position_at(t).ok()?;
                let u: f64 = rng.gen();
                if u * r_max < f(p) {
                    return Some(t);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{bbm_model, degenerate_model, finite_type_model, Pmf};

    fn bbm_config(r: f64, t_max: f64, seed: u64) -> SimConfig {
        SimConfig::new(
            bbm_model(r, Pmf::binary()).unwrap(),
            Measure::P,
            t_max,
            seed,
        )
    }

    #[test]
    fn zero_rate_single_root() {
        let config = bbm_config(0.0, 2.0, 1);
        let tree = simulate_tree_p(&config).unwrap();
        assert_eq!(tree.len(), 1);
        assert_eq!(tree.alive_at(1.9).unwrap(), vec![Label::root()]);
        assert!(tree.validate().is_empty());
    }

    #[test]
    fn simulated_trees_are_valid_and_deterministic() {
        for rep in 0..20 {
            let config = bbm_config(1.0, 2.0, 99).with_replicate(rep);
            let tree = simulate_tree_p(&config).unwrap();
            assert!(tree.validate().is_empty(), "replicate {rep}");
            let again = simulate_tree_p(&config).unwrap();
            assert_eq!(tree, again);
        }
        // Different replicates differ.
        let a = simulate_tree_p(&bbm_config(1.0, 2.0, 99).with_replicate(0)).unwrap();
        let b = simulate_tree_p(&bbm_config(1.0, 2.0, 99).with_replicate(1)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn degenerate_motion_is_linear() {
        let c = 0.75;
        let model = degenerate_model(c, 1.0, Pmf::binary()).unwrap();
        let config = SimConfig::new(model, Measure::P, 2.0, 5);
        let tree = simulate_tree_p(&config).unwrap();
        for t in [0.25, 0.5, 1.0, 1.5, 1.9375] {
            for u in tree.alive_at(t).unwrap() {
                let p = tree.path_point_at(&u, t).unwrap();
                assert!(
                    (p.x - c * t).abs() <= 1e-9,
                    "position {} at t={t}, expected {}",
                    p.x,
                    c * t
                );
            }
        }
    }

    #[test]
    fn mean_population_matches_growth_ode() {
        // Binary BBM, r = 1, t = 1: E|N_1| = e (growth rate m·r).
        let reps = 20_000u64;
        let mut sum = 0.0;
        for rep in 0..reps {
            let config = bbm_config(1.0, 1.0, 7).with_replicate(rep);
            let tree = simulate_tree_p(&config).unwrap();
            sum += tree.alive_at(1.0 - 1e-12).unwrap().len() as f64;
        }
        let mean = sum / reps as f64;
        // Var |N_1| = e^2 - e for the Yule process; 4 standard errors.
        let se = ((1.0f64.exp().powi(2) - 1.0f64.exp()) / reps as f64).sqrt();
        let e = 1.0f64.exp();
        assert!(
            (mean - e).abs() <= 4.0 * se,
            "mean {mean} vs {e} (se {se})"
        );
    }

    #[test]
    fn bbm_and_one_type_model_agree_bitwise() {
        // The one-type typed diffusion with unit variance must reduce to
        // plain branching Brownian motion on every sampler output, bit for
        // bit, given the same streams.
        let lambda = 0.5;
        let bbm_model_ = bbm_model(0.7, Pmf::binary()).unwrap();
        let ft_model = finite_type_model(&[1.0], &[0.7], 1.0, vec![vec![0.0]]).unwrap();
        let bbm_spec = crate::eigen::MartingaleSpec::bbm(lambda);
        let ft_spec = crate::eigen::MartingaleSpec::for_finite_type(&ft_model, lambda).unwrap();
        for rep in 0..8 {
            // Plain law.
            let a = simulate_tree_p(
                &SimConfig::new(bbm_model_.clone(), Measure::P, 2.0, 123).with_replicate(rep),
            )
            .unwrap();
            let b = simulate_tree_p(
                &SimConfig::new(ft_model.clone(), Measure::P, 2.0, 123).with_replicate(rep),
            )
            .unwrap();
            assert_eq!(a, b, "plain law, replicate {rep}");
            // Shared-form evaluation on the shared trees is bit-identical.
            let za = crate::martingale::eval_z(&bbm_spec, &bbm_model_, &a, 1.5).unwrap();
            let zb = crate::martingale::eval_z(&bbm_spec, &ft_model, &b, 1.5).unwrap();
            assert_eq!(za.value(), zb.value());
            // Spined plain law.
            let (ta, sa) = simulate_p_tilde(
                &SimConfig::new(bbm_model_.clone(), Measure::PTilde, 2.0, 124)
                    .with_replicate(rep),
            )
            .unwrap();
            let (tb, sb) = simulate_p_tilde(
                &SimConfig::new(ft_model.clone(), Measure::PTilde, 2.0, 124)
                    .with_replicate(rep),
            )
            .unwrap();
            assert_eq!(ta, tb);
            assert_eq!(sa, sb);
            // Changed law: the tilted one-type dynamics reduce to drift
            // lambda, so even the spine-first construction matches bitwise.
            let (qa, qsa) = simulate_q_tilde(
                &SimConfig::new(
                    bbm_model_.clone(),
                    Measure::QTilde(bbm_spec.clone()),
                    2.0,
                    125,
                )
                .with_replicate(rep),
            )
            .unwrap();
            let (qb, qsb) = simulate_q_tilde(
                &SimConfig::new(ft_model.clone(), Measure::QTilde(ft_spec.clone()), 2.0, 125)
                    .with_replicate(rep),
            )
            .unwrap();
            assert_eq!(qa, qb);
            assert_eq!(qsa, qsb);
        }
    }

    #[test]
    fn non_spine_subtrees_follow_the_plain_law() {
        // Under the changed measure, each non-spine child grows a plain-law
        // subtree: its alive count at the horizon is an unbiased sample of
        // e^{r (t_max - s)} for its birth time s. Paired z-test.
        use crate::eigen::MartingaleSpec;
        let r = 1.0;
        let t_max = 2.0;
        let model = bbm_model(r, Pmf::binary()).unwrap();
        let mut diffs = Vec::new();
        for rep in 0..4_000u64 {
            let config = SimConfig::new(
                model.clone(),
                Measure::QTilde(MartingaleSpec::bbm(0.5)),
                t_max,
                606,
            )
            .with_replicate(rep);
            let (tree, spine) = simulate_q_tilde(&config).unwrap();
            // First spine fission, if any: its non-spine children.
            let Some(first) = spine
                .labels()
                .iter()
                .find(|u| tree.node(u).unwrap().offspring().is_some())
            else {
                continue;
            };
            let mark = tree.node(first).unwrap();
            let s = mark.fission();
            let spine_child = &spine.labels()[first.depth() + 1];
            for j in 1..=(1 + mark.offspring().unwrap()) {
                let child = first.child(j);
                if &child == spine_child {
                    continue;
                }
                let sub = tree.extract_subtree(&child).unwrap();
                let leaves = sub
                    .iter()
                    .filter(|(_, m)| m.offspring().is_none())
                    .count() as f64;
                diffs.push(leaves - (r * (t_max - s)).exp());
            }
        }
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!(n > 1_000.0, "not enough subtree samples");
        assert!(mean.abs() <= 4.0 * se, "subtree mean bias {mean}, se {se}");
    }

    #[test]
    fn type_holding_times_are_exponential() {
        // Holding time in type y is exponential with rate theta |Q(y,y)|.
        let theta = 1.5;
        let q = vec![vec![-2.0, 2.0], vec![0.5, -0.5]];
        let model = finite_type_model(&[1.0, 1.0], &[0.0, 0.0], theta, q).unwrap();
        let reps = 8_000u64;
        let mut first_switch = Vec::new();
        for rep in 0..reps {
            let path = simulate_single_particle(
                &model,
                &ParticleLaw::Plain,
                20.0,
                0.25,
                321,
                rep,
                Point { x: 0.0, ty: 0 },
            )
            .unwrap();
            let switch = path.breakpoints().find(|(_, p)| p.ty != 0);
            if let Some((t, _)) = switch {
                first_switch.push(t);
            }
        }
        // Rate theta * |Q(0,0)| = 3; nearly every path switches before t=20.
        let n = first_switch.len() as f64;
        let mean = first_switch.iter().sum::<f64>() / n;
        let expect = 1.0 / (theta * 2.0);
        let se = expect / n.sqrt();
        assert!(
            (mean - expect).abs() <= 4.0 * se,
            "holding mean {mean} vs {expect}"
        );
    }

    #[test]
    fn general_rate_thinning_matches_population_growth() {
        // A constant rate wrapped as a general callable goes through the
        // thinning path; the population growth must match the ODE oracle.
        let reps = 5_000u64;
        let model = crate::model::ModelSpec::new(
            MotionLaw::Bbm { drift: 0.0 },
            RateSpec::General {
                f: Arc::new(|_| 1.0),
                r_max: 1.5,
            },
            crate::model::OffspringSpec::Constant(Pmf::binary()),
        )
        .unwrap();
        let mut sum = 0.0;
        for rep in 0..reps {
            let config = SimConfig::new(model.clone(), Measure::P, 1.0, 909).with_replicate(rep);
            let tree = simulate_tree_p(&config).unwrap();
            sum += tree
                .iter()
                .filter(|(_, m)| m.offspring().is_none())
                .count() as f64;
        }
        let mean = sum / reps as f64;
        let e = 1.0f64.exp();
        let se = ((e * e - e) / reps as f64).sqrt();
        assert!((mean - e).abs() <= 4.0 * se, "mean {mean} vs {e}");
    }

    #[test]
    fn ptilde_spine_child_choice_is_uniform() {
        use crate::harness::stats::chi_square_p;
        let mut counts = [0u64; 3];
        for rep in 0..4_000u64 {
            let model = bbm_model(1.0, Pmf::zero_or_two()).unwrap();
            let config =
                SimConfig::new(model, Measure::PTilde, 1.5, 505).with_replicate(rep);
            let (tree, spine) = simulate_p_tilde(&config).unwrap();
            for pair in spine.labels().windows(2) {
                if tree.node(&pair[0]).unwrap().offspring() == Some(2) {
                    counts[(*pair[1].word().last().unwrap() - 1) as usize] += 1;
                }
            }
        }
        let total: u64 = counts.iter().sum();
        let expected = total as f64 / 3.0;
        let chi2: f64 = counts
            .iter()
            .map(|&o| {
                let d = o as f64 - expected;
                d * d / expected
            })
            .sum();
        let p = chi_square_p(chi2, 2.0);
        assert!(p >= 0.001, "chi2 {chi2} over {total} draws, p {p}");
    }

    #[test]
    fn ancestral_weight_sum_one_on_simulated_trees() {
        for (name, pmf) in [("binary", Pmf::binary()), ("p0p2", Pmf::zero_or_two())] {
            for rep in 0..50 {
                let model = bbm_model(1.0, pmf.clone()).unwrap();
                let config =
                    SimConfig::new(model, Measure::P, 2.0, 31).with_replicate(rep);
                let tree = simulate_tree_p(&config).unwrap();
                for t in [0.5, 1.0, 1.999] {
                    let s = tree.ancestral_weight_sum(t).unwrap();
                    assert!(
                        (s - 1.0).abs() <= 1e-9,
                        "{name} rep {rep} t {t}: sum {s}"
                    );
                }
            }
        }
    }

    #[test]
    fn uniform_spine_passage_matches_ancestral_product() {
        // Binary: conditional on u being born, the spine passes a fixed
        // depth-3 node with probability exactly 2^{-3}.
        let u3 = Label::from_word(&[1, 2, 1]).unwrap();
        let reps = 20_000u64;
        let (mut born, mut hit) = (0u64, 0u64);
        for rep in 0..reps {
            let model = bbm_model(2.0, Pmf::binary()).unwrap();
            let config = SimConfig::new(model, Measure::PTilde, 1.0, 77).with_replicate(rep);
            let (tree, spine) = simulate_p_tilde(&config).unwrap();
            if tree.contains(&u3) {
                born += 1;
                if spine.contains(&u3) {
                    hit += 1;
                }
            }
        }
        let freq = hit as f64 / born as f64;
        let se = (0.125 * 0.875 / born as f64).sqrt();
        assert!(
            (freq - 0.125).abs() <= 4.0 * se,
            "conditional passage {freq} over {born} births"
        );

        // Random family sizes: the paired statistic
        // 1(u in spine) - 1(u born) * prod 1/(1+A_v) has mean exactly zero,
        // because the realized ancestral product is the conditional passage
        // probability given the tree.
        let u = Label::from_word(&[2, 1]).unwrap();
        let mut diffs = Vec::with_capacity(reps as usize);
        for rep in 0..reps {
            let model = bbm_model(2.0, Pmf::zero_or_two()).unwrap();
            let config = SimConfig::new(model, Measure::PTilde, 1.0, 78).with_replicate(rep);
            let (tree, spine) = simulate_p_tilde(&config).unwrap();
            let product = if tree.contains(&u) {
                u.ancestors()
                    .map(|v| 1.0 / (1.0 + tree.node(&v).unwrap().offspring().unwrap() as f64))
                    .product()
            } else {
                0.0
            };
            let indicator = if spine.contains(&u) { 1.0 } else { 0.0 };
            diffs.push(indicator - product);
        }
        let mean = diffs.iter().sum::<f64>() / reps as f64;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        assert!(mean.abs() <= 4.0 * se, "paired mean {mean}, se {se}");
    }

    #[test]
    fn qtilde_spine_has_tilted_drift_and_rate() {
        use crate::eigen::MartingaleSpec;
        let lambda = 0.8;
        let t_max = 2.0;
        let reps = 4_000u64;
        let mut fissions = 0.0;
        let mut terminal = 0.0;
        for rep in 0..reps {
            let model = bbm_model(1.0, Pmf::binary()).unwrap();
            let config = SimConfig::new(
                model,
                Measure::QTilde(MartingaleSpec::bbm(lambda)),
                t_max,
                2024,
            )
            .with_replicate(rep);
            let skel = simulate_spine_skeleton(&config).unwrap();
            fissions += skel.fissions.len() as f64;
            terminal += skel.path.end_point().x;
        }
        // Fission count ~ Poisson((1+m) r t) = Poisson(4).
        let mean_fissions = fissions / reps as f64;
        let se = (4.0 / reps as f64).sqrt();
        assert!(
            (mean_fissions - 4.0).abs() <= 4.0 * se,
            "fission mean {mean_fissions}"
        );
        // Terminal position ~ N(lambda t, t).
        let mean_term = terminal / reps as f64;
        let se_term = (t_max / reps as f64).sqrt();
        assert!(
            (mean_term - lambda * t_max).abs() <= 4.0 * se_term,
            "terminal mean {mean_term}"
        );
    }

    #[test]
    fn qtilde_offspring_is_size_biased() {
        use crate::eigen::MartingaleSpec;
        let reps = 3_000u64;
        let mut counts = [0u64; 3];
        for rep in 0..reps {
            let model = bbm_model(1.0, Pmf::zero_or_two()).unwrap();
            let config = SimConfig::new(
                model,
                Measure::QTilde(MartingaleSpec::bbm(0.0)),
                2.0,
                55,
            )
            .with_replicate(rep);
            let skel = simulate_spine_skeleton(&config).unwrap();
            for f in &skel.fissions {
                counts[f.offspring as usize] += 1;
            }
        }
        let total: u64 = counts.iter().sum();
        let p2 = counts[2] as f64 / total as f64;
        let se = (0.75 * 0.25 / total as f64).sqrt();
        assert!((p2 - 0.75).abs() <= 4.0 * se, "p2 {p2} over {total} draws");
        assert_eq!(counts[1], 0);
    }

    #[test]
    fn qtilde_assembly_is_consistent() {
        use crate::eigen::MartingaleSpec;
        for rep in 0..20 {
            let model = bbm_model(1.0, Pmf::zero_or_two()).unwrap();
            let config = SimConfig::new(
                model,
                Measure::QTilde(MartingaleSpec::bbm(0.5)),
                2.0,
                9,
            )
            .with_replicate(rep);
            let (tree, spine) = simulate_q_tilde(&config).unwrap();
            assert!(tree.validate().is_empty(), "replicate {rep}");
            spine.validate(&tree).unwrap();
            // Determinism of the composed construction.
            let (tree2, spine2) = simulate_q_tilde(&config).unwrap();
            assert_eq!(tree, tree2);
            assert_eq!(spine, spine2);
        }
    }

    #[test]
    fn nested_resampling_keeps_skeleton_fixed() {
        use crate::eigen::MartingaleSpec;
        let model = bbm_model(1.0, Pmf::binary()).unwrap();
        let config = SimConfig::new(
            model,
            Measure::QTilde(MartingaleSpec::bbm(0.5)),
            1.5,
            444,
        )
        .with_replicate(3);
        let skel = simulate_spine_skeleton(&config).unwrap();
        let (t1, s1) = tree_from_skeleton(&config, &skel, 1000).unwrap();
        let (t2, s2) = tree_from_skeleton(&config, &skel, 1001).unwrap();
        assert_eq!(s1, s2);
        for u in s1.labels() {
            assert_eq!(t1.node(u).unwrap(), t2.node(u).unwrap());
        }
        if skel.fissions.is_empty() {
            assert_eq!(t1, t2);
        } else {
            assert_ne!(t1, t2);
        }
    }

    #[test]
    fn cox_arrival_examples() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        // Constant rate: exponential with mean 1/r.
        let r = 2.0;
        let mut path = PathRecord::new(0.0, Point::untyped(0.0));
        path.push(1000.0, Point::untyped(0.0));
        let n = 20_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += first_cox_arrival(&RateSpec::Constant(r), &path, &mut rng).unwrap();
        }
        let mean = sum / n as f64;
        let se = (1.0 / r) / (n as f64).sqrt();
        assert!((mean - 1.0 / r).abs() <= 4.0 * se, "mean {mean}");

        // Zero rate: no arrival.
        let mut short = PathRecord::new(0.0, Point::untyped(0.0));
        short.push(5.0, Point::untyped(0.0));
        assert_eq!(
            first_cox_arrival(&RateSpec::Constant(0.0), &short, &mut rng),
            None
        );

        // Rate 2r vs rate r: total arrival counts on a fixed window scale
        // linearly in the rate. Restarting after each arrival walks the full
        // point process.
        let window = 3.0;
        let count_arrivals = |rate: f64, rng: &mut rand_chacha::ChaCha8Rng| -> u64 {
            let mut count = 0;
            let mut from = 0.0;
            while from < window {
                let mut win = PathRecord::new(from, Point::untyped(0.0));
                win.push(window, Point::untyped(0.0));
                match first_cox_arrival(&RateSpec::Constant(rate), &win, rng) {
                    Some(s) => {
                        count += 1;
                        from = s;
                    }
                    None => break,
                }
            }
            count
        };
        let trials = 4_000;
        let (mut total_1, mut total_2) = (0u64, 0u64);
        for _ in 0..trials {
            total_1 += count_arrivals(1.0, &mut rng);
            total_2 += count_arrivals(2.0, &mut rng);
        }
        // Poisson totals: mean rate * window * trials, variance equal to it.
        let m1 = 1.0 * window * trials as f64;
        let m2 = 2.0 * window * trials as f64;
        assert!((total_1 as f64 - m1).abs() <= 4.0 * m1.sqrt(), "{total_1}");
        assert!((total_2 as f64 - m2).abs() <= 4.0 * m2.sqrt(), "{total_2}");
        let ratio = total_2 as f64 / total_1 as f64;
        let ratio_se = ratio * (1.0 / m1 + 1.0 / m2).sqrt();
        assert!((ratio - 2.0).abs() <= 4.0 * ratio_se, "ratio {ratio}");
    }

    #[test]
    fn thinning_matches_inversion_distribution() {
        use crate::harness::stats::ks_two_sample_p;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        // Piecewise-constant rate seen both ways: per-type inversion vs a
        // general callable with thinning.
        let mut path = PathRecord::new(0.0, Point { x: 0.0, ty: 0 });
        path.push(1.0, Point { x: 0.0, ty: 1 });
        path.push(50.0, Point { x: 0.0, ty: 1 });
        let per_type = RateSpec::PerType(vec![0.5, 2.0]);
        let general = RateSpec::General {
            f: Arc::new(|p: Point| if p.ty == 0 { 0.5 } else { 2.0 }),
            r_max: 2.0,
        };
        let n = 10_000;
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for _ in 0..n {
            a.push(first_cox_arrival(&per_type, &path, &mut rng).unwrap());
            b.push(first_cox_arrival(&general, &path, &mut rng).unwrap());
        }
        let p = ks_two_sample_p(&a, &b);
        assert!(p >= 0.001, "KS p-value {p}");
    }

    #[test]
    fn spine_child_choice_is_uniform() {
        use crate::harness::stats::chi_square_p;
        // Under both spined samplers the chosen index at each fission is
        // uniform on {1, ..., 1+A}.
        let mut counts_q = [0u64; 3];
        for rep in 0..3000u64 {
            let model = bbm_model(1.0, Pmf::zero_or_two()).unwrap();
            let config = SimConfig::new(
                model,
                Measure::QTilde(crate::eigen::MartingaleSpec::bbm(0.0)),
                1.5,
                808,
            )
            .with_replicate(rep);
            let skel = simulate_spine_skeleton(&config).unwrap();
            for f in &skel.fissions {
                if f.offspring == 2 {
                    counts_q[(f.chosen - 1) as usize] += 1;
                }
            }
        }
        let total: u64 = counts_q.iter().sum();
        let expected = total as f64 / 3.0;
        let chi2: f64 = counts_q
            .iter()
            .map(|&o| {
                let d = o as f64 - expected;
                d * d / expected
            })
            .sum();
        let p = chi_square_p(chi2, 2.0);
        assert!(p >= 0.001, "chi2 {chi2}, p {p}");
    }

    #[test]
    fn explosion_guard_trips() {
        let config = bbm_config(30.0, 2.0, 3).with_node_cap(500);
        assert!(matches!(
            simulate_tree_p(&config),
            Err(SimError::Explosion(500))
        ));
    }

    #[test]
    fn qtilde_requires_consistent_spec() {
        use crate::eigen::{MartingaleSpec, ZetaForm};
        let model = bbm_model(1.0, Pmf::binary()).unwrap();
        let bad = MartingaleSpec {
            lambda: 0.5,
            form: ZetaForm::FiniteType {
                v: vec![1.0, 1.0],
                eigenvalue: 1.0,
            },
        };
        let config = SimConfig::new(model, Measure::QTilde(bad), 1.0, 1);
        assert!(matches!(
            simulate_q_tilde(&config),
            Err(SimError::InconsistentSpec(_))
        ));
    }
}
