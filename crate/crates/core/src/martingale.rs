//! Evaluators for the single-particle, additive and spined martingales, the
//! spine decomposition, and the Gibbs-Boltzmann weights.
//!
//! Each evaluator reads exactly the information its filtration carries: the
//! additive martingale sees the tree but not the spine, the single-particle
//! functional sees one path, the spined martingale sees both, and the spine
//! decomposition sees only the spine's path and fission record.
//!
//! All arithmetic is carried in log space — products like
//! `prod (1+A_v) * exp(lambda x)` overflow quickly for long horizons or large
//! tilts — and exposed values are exponentiated on demand.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::eigen::{MartingaleSpec, ZetaForm};
use crate::harness::stats::log_sum_exp;
use crate::model::{rate_and_mean_along, ModelError, ModelSpec};
use crate::tree::{Label, MarkedTree, PathRecord, Spine, TreeError};

#[derive(Debug, Error)]
pub enum MartingaleError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("martingale form does not cover type index {0}")]
    TypeOutOfRange(usize),
    #[error("mismatched label sets between values and weights")]
    LabelMismatch,
    #[error("weights degenerate: total mass underflowed")]
    Underflow,
}

// ---------------------------------------------------------------------------
// The single-particle functional
// ---------------------------------------------------------------------------

/// `log` of the single-particle martingale functional evaluated on a path at
/// time `t`. Time is measured from the record's start (the process origin),
/// so a record over `[0, t]` gives the textbook value.
pub fn log_zeta(
    spec: &MartingaleSpec,
    model: &ModelSpec,
    path: &PathRecord,
    t: f64,
) -> Result<f64, MartingaleError> {
    let p = path.position_at(t)?;
    let elapsed = t - path.start_time();
    match &spec.form {
        ZetaForm::Bbm => Ok(spec.lambda * p.x - 0.5 * spec.lambda * spec.lambda * elapsed),
        ZetaForm::FiniteType { v, eigenvalue } => {
            if p.ty >= v.len() {
                return Err(MartingaleError::TypeOutOfRange(p.ty));
            }
            let (int_r, _) = rate_and_mean_along(model, path, t)?;
            Ok(int_r + v[p.ty].ln() + spec.lambda * p.x - eigenvalue * elapsed)
        }
    }
}

/// The single-particle martingale value along a path.
pub fn eval_zeta(
    spec: &MartingaleSpec,
    model: &ModelSpec,
    path: &PathRecord,
    t: f64,
) -> Result<f64, MartingaleError> {
    Ok(log_zeta(spec, model, path, t)?.exp())
}

// ---------------------------------------------------------------------------
// The additive martingale
// ---------------------------------------------------------------------------

/// A positive martingale value with its per-particle breakdown, kept in log
/// space.
#[derive(Clone, Debug)]
pub struct MartingaleValue {
    log_value: f64,
    log_components: BTreeMap<Label, f64>,
}

impl MartingaleValue {
    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }

    pub fn log_value(&self) -> f64 {
        self.log_value
    }

    pub fn log_components(&self) -> &BTreeMap<Label, f64> {
        &self.log_components
    }

    /// Per-particle contributions (exponentiated).
    pub fn components(&self) -> BTreeMap<Label, f64> {
        self.log_components
            .iter()
            .map(|(u, l)| (u.clone(), l.exp()))
            .collect()
    }
}

/// `log` of one particle's discounted contribution to the additive
/// martingale: the mean-rate discount along its inherited path times the
/// single-particle functional on that path.
pub fn log_discounted_term(
    spec: &MartingaleSpec,
    model: &ModelSpec,
    tree: &MarkedTree,
    u: &Label,
    t: f64,
) -> Result<f64, MartingaleError> {
    let path = tree.extended_path(u, t)?;
    let (_, int_mr) = rate_and_mean_along(model, &path, t)?;
    Ok(-int_mr + log_zeta(spec, model, &path, t)?)
}

/// The additive martingale: the sum over particles alive at `t` of their
/// discounted contributions. Sees the tree only.
pub fn eval_z(
    spec: &MartingaleSpec,
    model: &ModelSpec,
    tree: &MarkedTree,
    t: f64,
) -> Result<MartingaleValue, MartingaleError> {
    let mut log_components = BTreeMap::new();
    for u in tree.alive_at(t)? {
        let term = log_discounted_term(spec, model, tree, &u, t)?;
        log_components.insert(u, term);
    }
    let log_value = log_sum_exp(log_components.values().copied());
    Ok(MartingaleValue {
        log_value,
        log_components,
    })
}

// ---------------------------------------------------------------------------
// The spined martingale and the spine decomposition
// ---------------------------------------------------------------------------

/// `log` of the spined martingale: the offspring product along the spine,
/// the mean-rate discount along the spine's path, and the single-particle
/// functional on that path. Sees tree and spine.
pub fn log_zeta_tilde(
    spec: &MartingaleSpec,
    model: &ModelSpec,
    tree: &MarkedTree,
    spine: &Spine,
    t: f64,
) -> Result<f64, MartingaleError> {
    let node = spine.node_at(tree, t)?;
    let mut log_offspring = 0.0;
    for v in node.ancestors() {
        let a = tree.node(&v)?.offspring().ok_or_else(|| {
            TreeError::SpineInconsistent(format!("spine ancestor {v} has no offspring count"))
        })?;
        log_offspring += ((1 + a) as f64).ln();
    }
    let path = tree.extended_path(&node, t)?;
    let (_, int_mr) = rate_and_mean_along(model, &path, t)?;
    Ok(log_offspring - int_mr + log_zeta(spec, model, &path, t)?)
}

/// The spined martingale value.
pub fn eval_zeta_tilde(
    spec: &MartingaleSpec,
    model: &ModelSpec,
    tree: &MarkedTree,
    spine: &Spine,
    t: f64,
) -> Result<f64, MartingaleError> {
    Ok(log_zeta_tilde(spec, model, tree, spine, t)?.exp())
}

/// The spine decomposition: the conditional expectation of the additive
/// martingale given full spine information, evaluated pathwise as
///
/// ```text
/// sum_{u < spine node at t} A_u e^{-int_0^{S_u} mR} zeta(S_u)
///   + e^{-int_0^t mR} zeta(t)
/// ```
///
/// Reads only spine-measurable data: the spine's path, its fission times and
/// its offspring counts.
pub fn spine_decomposition(
    spec: &MartingaleSpec,
    model: &ModelSpec,
    tree: &MarkedTree,
    spine: &Spine,
    t: f64,
) -> Result<f64, MartingaleError> {
    Ok(log_spine_decomposition(spec, model, tree, spine, t)?.exp())
}

/// Log-space version of [`spine_decomposition`].
pub fn log_spine_decomposition(
    spec: &MartingaleSpec,
    model: &ModelSpec,
    tree: &MarkedTree,
    spine: &Spine,
    t: f64,
) -> Result<f64, MartingaleError> {
    let node = spine.node_at(tree, t)?;
    let mut log_terms = Vec::new();
    for u in node.ancestors() {
        let mark = tree.node(&u)?;
        let a = mark.offspring().ok_or_else(|| {
            TreeError::SpineInconsistent(format!("spine ancestor {u} has no offspring count"))
        })?;
        if a == 0 {
            continue;
        }
        let s_u = mark.fission();
        let history = tree.full_history(&u)?;
        let (_, int_mr) = rate_and_mean_along(model, &history, s_u)?;
        let term = (a as f64).ln() - int_mr + log_zeta(spec, model, &history, s_u)?;
        log_terms.push(term);
    }
    let path = tree.extended_path(&node, t)?;
    let (_, int_mr) = rate_and_mean_along(model, &path, t)?;
    log_terms.push(-int_mr + log_zeta(spec, model, &path, t)?);
    Ok(log_sum_exp(log_terms.into_iter()))
}

// ---------------------------------------------------------------------------
// Gibbs-Boltzmann weights
// ---------------------------------------------------------------------------

/// The normalized per-particle contributions to the additive martingale:
/// the conditional law of the spine's current node given the branching
/// configuration. Strictly positive and summing to one.
pub fn gibbs_boltzmann_weights(
    spec: &MartingaleSpec,
    model: &ModelSpec,
    tree: &MarkedTree,
    t: f64,
) -> Result<BTreeMap<Label, f64>, MartingaleError> {
    let z = eval_z(spec, model, tree, t)?;
    if !z.log_value().is_finite() {
        return Err(MartingaleError::Underflow);
    }
    Ok(z
        .log_components()
        .iter()
        .map(|(u, l)| (u.clone(), (l - z.log_value()).exp()))
        .collect())
}

/// The weighted average `sum_u f_u w_u` realizing conditional expectations
/// under the changed measure given the branching configuration. The label
/// sets must match exactly.
pub fn conditional_expectation_q(
    values: &BTreeMap<Label, f64>,
    weights: &BTreeMap<Label, f64>,
) -> Result<f64, MartingaleError> {
    if values.len() != weights.len() || values.keys().any(|u| !weights.contains_key(u)) {
        return Err(MartingaleError::LabelMismatch);
    }
    Ok(values
        .iter()
        .map(|(u, f)| f * weights[u])
        .sum())
}
