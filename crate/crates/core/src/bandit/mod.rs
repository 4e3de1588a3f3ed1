//! Domain types shared by every other module: observations, logging
//! policies, target functionals, datasets and estimate reports.

mod dataset;
pub mod io;
mod policy;
mod report;
mod target;

pub use dataset::{validate_dataset, CrossPropensityMatrix, LoggedDataset, Observation, PolicyRecord, Rule, Violation};
pub use policy::{EpsilonGreedyPolicy, FixedPolicy, LookupPolicy, Policy, PolicySnapshot, UniformPolicy};
pub use report::{Diagnostics, EstimateReport, EstimatorKind};
pub use target::{TargetFunctional, TargetKind};
