//! Simulation and verification toolkit for branching Markov processes with
//! distinguished spines.
//!
//! The library builds finite realizations of a branching Markov process under
//! three laws — the plain branching law `P`, the same law with a uniformly
//! chosen spine `P~`, and the spine-changed law `Q~` (tilted spine motion,
//! accelerated spine fission rate, size-biased spine offspring) — and
//! evaluates the associated martingales and spine identities on them:
//!
//! * [`tree`]: Ulam-Harris labels, marked trees, spines, and the purely
//!   combinatorial queries on them.
//! * [`model`]: branching process specifications (motion law, branching rate,
//!   offspring law) with built-in Brownian and finite-type instances.
//! * [`eigen`]: the principal eigenpair of the tilted type matrix and a small
//!   dense matrix exponential, both used as deterministic oracles.
//! * [`simulate`]: forward samplers for the three laws, with reproducible
//!   per-node random streams.
//! * [`martingale`]: evaluators for the single-particle, additive and spined
//!   martingales, the spine decomposition and Gibbs-Boltzmann weights.
//! * [`oracle`]: closed-form and exact-arithmetic ground truths used to
//!   validate Monte Carlo output.
//! * [`harness`]: experiment runner producing reproducible statistical
//!   verification reports.
//!
//! Each evaluator's inputs declare its information scope: tree-only
//! functionals see the branching configuration but not the spine, spine-path
//! functionals see only the distinguished path, and so on. Keeping the scopes
//! explicit is what makes the cross-checks between the three laws meaningful.

// Index-style loops over tiny matrices read better than iterator chains in
// the numeric kernels.
#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod dump;
pub mod eigen;
pub mod harness;
pub mod martingale;
pub mod model;
pub mod oracle;
pub mod simulate;
pub mod stream;
pub mod tree;

pub use model::{ModelSpec, Point};
pub use simulate::{Measure, SimConfig};
