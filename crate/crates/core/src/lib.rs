//! Off-policy evaluation from adaptively collected contextual bandit data.
//!
//! The centerpiece is [`estimators::cadr_estimate`], a doubly-robust
//! estimator whose per-round scores are stabilized by an estimate of their
//! conditional standard deviation, giving asymptotically normal confidence
//! intervals even when the logging policy adapts to past data. The DM, IPW,
//! DR, MRDR and ADR baselines share the same report type.

pub mod bandit;
pub mod env;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod models;
pub mod numeric;

pub use bandit::{
    validate_dataset, CrossPropensityMatrix, Diagnostics, EstimateReport, EstimatorKind, LoggedDataset, Observation,
    Policy, PolicySnapshot, TargetFunctional, TargetKind, Violation,
};
pub use error::{OpeError, Result};
pub use estimators::{estimate, EstimatorConfig};
pub use models::{Engine, OutcomeModelSnapshot, SampleWeighting, Schedule, TrainingSchedule};
pub use numeric::normal_quantile;
