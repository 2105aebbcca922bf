//! Ulam-Harris labels, marked trees and spines.
//!
//! A realized tree is a finite map from labels to node marks. Each node
//! carries its birth and fission times, its offspring count and a piecewise
//! record of its location over its lifetime. Trees are truncated at a horizon
//! `t_max`: nodes still alive there have an unresolved fission time and no
//! children. All times are absolute (measured from the root tree's time
//! origin), so subtree extraction never rewrites marks.
//!
//! The lifetime convention is half-open: a particle born at `b` with fission
//! time `S` is alive on `[b, S)` and has disappeared at `S` itself, replaced
//! by its `1 + A` children.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Location of a particle: spatial coordinate plus type index.
///
/// Untyped models use `ty = 0` throughout; finite-type models use
/// `ty` in `0..n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub ty: usize,
}

impl Point {
    pub fn untyped(x: f64) -> Self {
        Point { x, ty: 0 }
    }
}

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("time {t} outside domain [{lo}, {hi})")]
    TimeOutOfDomain { t: f64, lo: f64, hi: f64 },
    #[error("label {0} not present in tree")]
    UnknownLabel(Label),
    #[error("particle {label} is dead at time {t} (fission at {fission})")]
    ParticleDead { label: Label, t: f64, fission: f64 },
    #[error("path record does not cover time {t}")]
    PathNotCovered { t: f64 },
    #[error("label words consist of positive integers")]
    InvalidLabelWord,
    #[error("spine inconsistent with tree: {0}")]
    SpineInconsistent(String),
}

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

/// Ulam-Harris label: a finite word of positive child indices.
///
/// The empty word is the root. The j-th child of `u` is `u` with `j`
/// appended. Words are stored as integer sequences, which keeps prefix tests
/// cheap and child indices above 9 unambiguous.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Label(Vec<u32>);

impl Label {
    pub fn root() -> Self {
        Label(Vec::new())
    }

    /// Builds a label from an explicit word. Indices must be ≥ 1.
    pub fn from_word(word: &[u32]) -> Result<Self, TreeError> {
        if word.contains(&0) {
            return Err(TreeError::InvalidLabelWord);
        }
        Ok(Label(word.to_vec()))
    }

    /// The j-th child, j ≥ 1.
    pub fn child(&self, j: u32) -> Label {
        assert!(j >= 1, "child indices start at 1");
        let mut word = self.0.clone();
        word.push(j);
        Label(word)
    }

    pub fn parent(&self) -> Option<Label> {
        if self.0.is_empty() {
            None
        } else {
            Some(Label(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    /// Generation number: the length of the word.
    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn word(&self) -> &[u32] {
        &self.0
    }

    /// Strict ancestor test: `self < other` in the genealogical order.
    pub fn is_ancestor_of(&self, other: &Label) -> bool {
        self.0.len() < other.0.len() && other.0[..self.0.len()] == self.0[..]
    }

    /// Strict ancestors from the root down (excludes `self`).
    pub fn ancestors(&self) -> impl Iterator<Item = Label> + '_ {
        (0..self.0.len()).map(move |k| Label(self.0[..k].to_vec()))
    }

    /// Stable 64-bit hash used to key per-node random streams.
    ///
    /// FNV-1a over the depth and the word, so the hash never depends on the
    /// platform or the standard library's hasher.
    pub fn stream_hash(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = OFFSET;
        let mut eat = |v: u32| {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(PRIME);
            }
        };
        eat(self.0.len() as u32);
        for &j in &self.0 {
            eat(j);
        }
        h
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "-");
        }
        let parts: Vec<String> = self.0.iter().map(|j| j.to_string()).collect();
        write!(f, "{}", parts.join("."))
    }
}

impl fmt::Debug for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Label({})", self)
    }
}

impl FromStr for Label {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "-" {
            return Ok(Label::root());
        }
        let word: Result<Vec<u32>, _> = s.split('.').map(|p| p.parse::<u32>()).collect();
        let word = word.map_err(|_| TreeError::InvalidLabelWord)?;
        Label::from_word(&word)
    }
}

// ---------------------------------------------------------------------------
// Path records
// ---------------------------------------------------------------------------

/// Piecewise location record over a time interval.
///
/// Positions are stored at strictly increasing breakpoints; the value on
/// `[times[i], times[i+1])` is `points[i]`. The final breakpoint stores the
/// left-limit at the record's end (the death position for a node that
/// fissioned, or the horizon position for a truncated leaf). Queries between
/// breakpoints resolve to the last stored breakpoint, which is the storage
/// resolution of the simulation grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PathRecord {
    times: Vec<f64>,
    points: Vec<Point>,
}

impl PathRecord {
    pub fn new(t0: f64, p0: Point) -> Self {
        PathRecord {
            times: vec![t0],
            points: vec![p0],
        }
    }

    pub fn from_breakpoints(times: Vec<f64>, points: Vec<Point>) -> Result<Self, TreeError> {
        if times.is_empty() || times.len() != points.len() {
            return Err(TreeError::PathNotCovered { t: f64::NAN });
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(TreeError::PathNotCovered { t: f64::NAN });
        }
        Ok(PathRecord { times, points })
    }

    /// Appends a breakpoint; `t` must exceed the current end time.
    pub fn push(&mut self, t: f64, p: Point) {
        debug_assert!(t > *self.times.last().unwrap());
        self.times.push(t);
        self.points.push(p);
    }

    /// Rewrites the final breakpoint's value in place (used when a type
    /// switch lands exactly on the last stored time: the segment to the
    /// right carries the new type).
    pub fn replace_end_point(&mut self, p: Point) {
        *self.points.last_mut().unwrap() = p;
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn start_point(&self) -> Point {
        self.points[0]
    }

    pub fn end_point(&self) -> Point {
        *self.points.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Value at time `t`, for `t` within `[start, end]`.
    pub fn position_at(&self, t: f64) -> Result<Point, TreeError> {
        if t < self.start_time() || t > self.end_time() {
            return Err(TreeError::PathNotCovered { t });
        }
        let idx = self.times.partition_point(|&bt| bt <= t);
        Ok(self.points[idx - 1])
    }

    pub fn breakpoints(&self) -> impl Iterator<Item = (f64, Point)> + '_ {
        self.times.iter().copied().zip(self.points.iter().copied())
    }

    /// Concatenation onto `self`; the other record must start where
    /// this one ends (shared boundary breakpoint, dropped from `other`).
    pub fn extend_with(&mut self, other: &PathRecord) {
        debug_assert_eq!(self.end_time(), other.start_time());
        for (t, p) in other.breakpoints().skip(1) {
            self.push(t, p);
        }
    }

    /// The sub-record over `[t0, t1]`, with explicit breakpoints at both
    /// endpoints (resolved at storage resolution if interior).
    pub fn window(&self, t0: f64, t1: f64) -> Result<PathRecord, TreeError> {
        if t0 < self.start_time() || t1 > self.end_time() || t0 >= t1 {
            return Err(TreeError::PathNotCovered { t: t0 });
        }
        let mut out = PathRecord::new(t0, self.position_at(t0)?);
        for (bt, p) in self.breakpoints() {
            if bt <= t0 {
                continue;
            }
            if bt > t1 {
                break;
            }
            out.push(bt, p);
        }
        if out.end_time() < t1 {
            out.push(t1, self.position_at(t1)?);
        }
        Ok(out)
    }

    /// The sub-record over `[self.start, t]`, appending an interpolated
    /// breakpoint at `t` if `t` is interior.
    pub fn truncated(&self, t: f64) -> Result<PathRecord, TreeError> {
        if t < self.start_time() || t > self.end_time() {
            return Err(TreeError::PathNotCovered { t });
        }
        let mut times = Vec::new();
        let mut points = Vec::new();
        for (bt, p) in self.breakpoints() {
            if bt > t {
                break;
            }
            times.push(bt);
            points.push(p);
        }
        if *times.last().unwrap() < t {
            let p = self.position_at(t)?;
            times.push(t);
            points.push(p);
        }
        Ok(PathRecord { times, points })
    }
}

// ---------------------------------------------------------------------------
// Nodes and trees
// ---------------------------------------------------------------------------

/// Mark attached to one tree node.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeMark {
    birth: f64,
    /// Fission (death) time; `+inf` for nodes still alive at the horizon.
    fission: f64,
    /// Offspring count A: the node is replaced by `1 + A` children.
    /// `None` for horizon-truncated leaves whose fission was never reached.
    offspring: Option<u32>,
    /// Location record over `[birth, min(fission, t_max)]`.
    path: PathRecord,
}

impl NodeMark {
    pub fn new(birth: f64, fission: f64, offspring: Option<u32>, path: PathRecord) -> Self {
        NodeMark {
            birth,
            fission,
            offspring,
            path,
        }
    }

    pub fn birth(&self) -> f64 {
        self.birth
    }

    pub fn fission(&self) -> f64 {
        self.fission
    }

    /// Lifetime; `+inf` for horizon-truncated leaves.
    pub fn lifetime(&self) -> f64 {
        self.fission - self.birth
    }

    pub fn offspring(&self) -> Option<u32> {
        self.offspring
    }

    pub fn path(&self) -> &PathRecord {
        &self.path
    }

    pub fn birth_point(&self) -> Point {
        self.path.start_point()
    }

    /// Left-limit of the location at the record's end.
    pub fn end_point(&self) -> Point {
        self.path.end_point()
    }

    pub fn alive_at(&self, t: f64) -> bool {
        self.birth <= t && t < self.fission
    }
}

/// A finite realized tree: root label, marks, horizon, and the space-time
/// point at which the root was born (nonzero for extracted subtrees).
#[derive(Clone, Debug, PartialEq)]
pub struct MarkedTree {
    origin_time: f64,
    origin_point: Point,
    t_max: f64,
    nodes: BTreeMap<Label, NodeMark>,
}

/// One invariant violation found by [`MarkedTree::validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub label: Label,
    pub rule: String,
}

impl Violation {
    fn new(label: &Label, rule: impl Into<String>) -> Self {
        Violation {
            label: label.clone(),
            rule: rule.into(),
        }
    }
}

impl MarkedTree {
    /// Assembles a tree from parts without validation; run
    /// [`MarkedTree::validate`] on anything untrusted.
    pub fn from_parts(
        origin_time: f64,
        origin_point: Point,
        t_max: f64,
        nodes: BTreeMap<Label, NodeMark>,
    ) -> Self {
        MarkedTree {
            origin_time,
            origin_point,
            t_max,
            nodes,
        }
    }

    pub fn origin_time(&self) -> f64 {
        self.origin_time
    }

    pub fn origin_point(&self) -> Point {
        self.origin_point
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, u: &Label) -> Result<&NodeMark, TreeError> {
        self.nodes
            .get(u)
            .ok_or_else(|| TreeError::UnknownLabel(u.clone()))
    }

    pub fn contains(&self, u: &Label) -> bool {
        self.nodes.contains_key(u)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Label, &NodeMark)> {
        self.nodes.iter()
    }

    pub fn labels(&self) -> impl Iterator<Item = &Label> {
        self.nodes.keys()
    }

    fn check_time(&self, t: f64) -> Result<(), TreeError> {
        if t < self.origin_time || t >= self.t_max {
            return Err(TreeError::TimeOutOfDomain {
                t,
                lo: self.origin_time,
                hi: self.t_max,
            });
        }
        Ok(())
    }

    /// The set of labels alive at `t`: born at or before `t`, fission
    /// strictly after. Returned in label order.
    pub fn alive_at(&self, t: f64) -> Result<Vec<Label>, TreeError> {
        self.check_time(t)?;
        Ok(self
            .nodes
            .iter()
            .filter(|(_, m)| m.alive_at(t))
            .map(|(u, _)| u.clone())
            .collect())
    }

    /// Location of particle `u` at time `t`, extended backwards through its
    /// ancestors: before its own birth the particle inherits the path of its
    /// unique line of descent.
    pub fn path_point_at(&self, u: &Label, t: f64) -> Result<Point, TreeError> {
        let mark = self.node(u)?;
        if t >= mark.fission {
            return Err(TreeError::ParticleDead {
                label: u.clone(),
                t,
                fission: mark.fission,
            });
        }
        if t < self.origin_time {
            return Err(TreeError::TimeOutOfDomain {
                t,
                lo: self.origin_time,
                hi: self.t_max,
            });
        }
        let mut cur = u.clone();
        loop {
            let m = self.node(&cur)?;
            if t >= m.birth {
                return m.path.position_at(t);
            }
            cur = cur
                .parent()
                .ok_or(TreeError::TimeOutOfDomain {
                    t,
                    lo: self.origin_time,
                    hi: self.t_max,
                })?;
        }
    }

    /// Breakpoints of the ancestry-extended path of `u` over
    /// `[origin_time, t]`, ending with an explicit breakpoint at `t`.
    pub fn extended_path(&self, u: &Label, t: f64) -> Result<PathRecord, TreeError> {
        let mark = self.node(u)?;
        if t >= mark.fission {
            return Err(TreeError::ParticleDead {
                label: u.clone(),
                t,
                fission: mark.fission,
            });
        }
        // Chain of records from the root down to the one that owns `t`.
        let mut chain = vec![u.clone()];
        while let Some(p) = chain.last().unwrap().parent() {
            chain.push(p);
        }
        chain.reverse();
        let mut out: Option<PathRecord> = None;
        for label in &chain {
            let m = self.node(label)?;
            let rec = if t <= m.path.end_time() {
                m.path.truncated(t)?
            } else {
                m.path.clone()
            };
            match &mut out {
                None => out = Some(rec),
                Some(acc) => acc.extend_with(&rec),
            }
            if t <= m.path.end_time() {
                break;
            }
        }
        let out = out.unwrap();
        if out.end_time() < t {
            return Err(TreeError::PathNotCovered { t });
        }
        Ok(out)
    }

    /// The full inherited history of `u`: its ancestors' records followed by
    /// its own, covering `[origin_time, min(S_u, t_max)]`. Unlike
    /// [`MarkedTree::extended_path`] this includes the final instant, so the
    /// left-limit at `u`'s own fission time is queryable.
    pub fn full_history(&self, u: &Label) -> Result<PathRecord, TreeError> {
        let mut chain = vec![u.clone()];
        while let Some(p) = chain.last().unwrap().parent() {
            chain.push(p);
        }
        chain.reverse();
        let mut out: Option<PathRecord> = None;
        for label in &chain {
            let rec = &self.node(label)?.path;
            match &mut out {
                None => out = Some(rec.clone()),
                Some(acc) => acc.extend_with(rec),
            }
        }
        Ok(out.unwrap())
    }

    /// The subtree rooted at `u`, relabeled so `u` becomes the root. Marks
    /// are copied verbatim (times stay absolute); the subtree's origin fields
    /// carry the birth space-time offset of `u`.
    pub fn extract_subtree(&self, u: &Label) -> Result<MarkedTree, TreeError> {
        let root_mark = self.node(u)?;
        let mut nodes = BTreeMap::new();
        for (v, m) in &self.nodes {
            if v == u || u.is_ancestor_of(v) {
                let stripped = Label(v.word()[u.depth()..].to_vec());
                nodes.insert(stripped, m.clone());
            }
        }
        Ok(MarkedTree {
            origin_time: root_mark.birth,
            origin_point: root_mark.birth_point(),
            t_max: self.t_max,
            nodes,
        })
    }

    /// Re-embeds an extracted subtree under `at`: the inverse of
    /// [`MarkedTree::extract_subtree`]. Marks are copied verbatim.
    pub fn re_embed(sub: &MarkedTree, at: &Label) -> BTreeMap<Label, NodeMark> {
        let mut out = BTreeMap::new();
        for (v, m) in &sub.nodes {
            let mut word = at.word().to_vec();
            word.extend_from_slice(v.word());
            out.insert(Label(word), m.clone());
        }
        out
    }

    /// The sum over particles alive at `t` of the product of `1/(1+A_v)`
    /// over their strict ancestors. Equal to 1 pathwise for every valid tree
    /// (up to float accumulation); the quantity behind the uniform-spine
    /// extension identity.
    pub fn ancestral_weight_sum(&self, t: f64) -> Result<f64, TreeError> {
        let alive = self.alive_at(t)?;
        let mut total = 0.0;
        for u in &alive {
            let mut w = 1.0;
            for v in u.ancestors() {
                let a = self
                    .node(&v)?
                    .offspring
                    .ok_or_else(|| TreeError::SpineInconsistent(format!(
                        "interior node {v} has unresolved offspring count"
                    )))?;
                w /= (1 + a) as f64;
            }
            total += w;
        }
        Ok(total)
    }

    /// Checks every structural invariant; returns one entry per violation.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let root = Label::root();
        if !self.nodes.contains_key(&root) {
            out.push(Violation::new(&root, "tree must contain the root"));
            return out;
        }
        // Child indices per parent, collected in one pass.
        let mut child_indices: BTreeMap<Label, Vec<u32>> = BTreeMap::new();
        for u in self.nodes.keys() {
            if let Some(p) = u.parent() {
                child_indices
                    .entry(p)
                    .or_default()
                    .push(*u.word().last().unwrap());
            }
        }
        for (u, m) in &self.nodes {
            // Closure under parents.
            if let Some(p) = u.parent() {
                match self.nodes.get(&p) {
                    None => {
                        out.push(Violation::new(u, "parent missing from tree"));
                        continue;
                    }
                    Some(pm) => {
                        // Birth = parent's fission, position inherited.
                        if m.birth != pm.fission {
                            out.push(Violation::new(
                                u,
                                "birth time differs from parent's fission time",
                            ));
                        }
                        let bp = m.birth_point();
                        let pp = pm.end_point();
                        if bp.x != pp.x || bp.ty != pp.ty {
                            out.push(Violation::new(
                                u,
                                "birth location differs from parent's death location",
                            ));
                        }
                    }
                }
            } else if m.birth != self.origin_time {
                out.push(Violation::new(u, "root not born at the origin time"));
            }
            // Child bookkeeping: indices must be consecutive from 1.
            let indices = child_indices.get(u).cloned().unwrap_or_default();
            let n_children = indices.len() as u32;
            if indices
                .iter()
                .zip(1..)
                .any(|(&have, want)| have != want)
            {
                out.push(Violation::new(u, "child indices not consecutive from 1"));
            }
            match m.offspring {
                Some(a) => {
                    if m.fission > self.t_max {
                        out.push(Violation::new(
                            u,
                            "resolved fission time beyond the horizon",
                        ));
                    }
                    if n_children != 1 + a {
                        out.push(Violation::new(u, "child count differs from 1+A"));
                    }
                }
                None => {
                    if m.fission.is_finite() {
                        out.push(Violation::new(
                            u,
                            "finite fission time with unresolved offspring count",
                        ));
                    }
                    if n_children != 0 {
                        out.push(Violation::new(u, "horizon-truncated leaf has children"));
                    }
                    if m.path.end_time() != self.t_max {
                        out.push(Violation::new(
                            u,
                            "truncated leaf's path record does not end at the horizon",
                        ));
                    }
                }
            }
            // Path domain.
            if m.path.start_time() != m.birth {
                out.push(Violation::new(u, "path record does not start at birth"));
            }
            if m.offspring.is_some() && m.path.end_time() != m.fission {
                out.push(Violation::new(u, "path record does not end at fission"));
            }
            let lifetime_ok = m.fission > m.birth;
            if !lifetime_ok {
                out.push(Violation::new(u, "non-positive lifetime"));
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Spines
// ---------------------------------------------------------------------------

/// A distinguished line of descent: the root, then one child per step,
/// extending to a horizon-truncated leaf. Exactly one spine label is alive at
/// each time before the horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct Spine {
    labels: Vec<Label>,
}

impl Spine {
    /// Builds a spine from its deepest node; ancestors are implied.
    pub fn from_tip(tip: Label) -> Self {
        let mut labels: Vec<Label> = tip.ancestors().collect();
        labels.push(tip);
        Spine { labels }
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn tip(&self) -> &Label {
        self.labels.last().unwrap()
    }

    pub fn contains(&self, u: &Label) -> bool {
        u.depth() < self.labels.len() && &self.labels[u.depth()] == u
    }

    /// The unique spine node alive at `t`.
    pub fn node_at(&self, tree: &MarkedTree, t: f64) -> Result<Label, TreeError> {
        tree.check_time(t)?;
        for u in &self.labels {
            if tree.node(u)?.alive_at(t) {
                return Ok(u.clone());
            }
        }
        Err(TreeError::SpineInconsistent(format!(
            "no spine node alive at t = {t}"
        )))
    }

    /// Generation count: the number of spine fissions in `[0, t]`, i.e. the
    /// word length of the node alive at `t`.
    pub fn generation_at(&self, tree: &MarkedTree, t: f64) -> Result<usize, TreeError> {
        Ok(self.node_at(tree, t)?.depth())
    }

    /// Checks structural consistency against a tree: consecutive entries are
    /// parent/child, every entry is present, and the tip reaches the horizon.
    pub fn validate(&self, tree: &MarkedTree) -> Result<(), TreeError> {
        if self.labels.is_empty() || !self.labels[0].is_root() {
            return Err(TreeError::SpineInconsistent(
                "spine must start at the root".into(),
            ));
        }
        for w in self.labels.windows(2) {
            if w[1].parent().as_ref() != Some(&w[0]) {
                return Err(TreeError::SpineInconsistent(format!(
                    "{} does not follow {}",
                    w[1], w[0]
                )));
            }
        }
        for u in &self.labels {
            tree.node(u)?;
        }
        let tip = tree.node(self.tip())?;
        if tip.offspring().is_some() {
            return Err(TreeError::SpineInconsistent(
                "spine tip fissions before the horizon".into(),
            ));
        }
        Ok(())
    }
}
