//! Experiment runner and statistical verification suites.
//!
//! A suite binds samplers, evaluators and oracles into a reproducible
//! report: every row compares a Monte Carlo estimate against a target whose
//! provenance is named (an oracle operation or an exact constant), and the
//! whole report is a deterministic function of configuration and seed.
//! Replicates run concurrently; suites and report assembly are sequential
//! for stable output.

pub mod report;
pub mod stats;
pub mod suites;

use thiserror::Error;

pub use report::{ExperimentReport, ReportRow, RowKind};
pub use suites::{run_suite, suite_names, SuiteParams};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
    #[error(transparent)]
    Sim(#[from] crate::simulate::SimError),
    #[error(transparent)]
    Martingale(#[from] crate::martingale::MartingaleError),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
    #[error(transparent)]
    Eigen(#[from] crate::eigen::EigenError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Tree(#[from] crate::tree::TreeError),
}
