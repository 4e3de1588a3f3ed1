//! Shared fixtures for the criterion benchmarks.

use ope_core::env::{simulate_bandit, AgentConfig, ClassificationTable, EpsilonSchedule, SyntheticTableSpec};
use ope_core::{Engine, LoggedDataset};

pub fn table(rows: usize, features: usize, classes: usize) -> ClassificationTable {
    ClassificationTable::synthetic(&SyntheticTableSpec {
        rows,
        features,
        classes,
        separation: 1.0,
        seed: 1,
    })
    .expect("valid synthetic spec")
}

/// An ε-greedy log of `rounds` rounds on a 3-class, 4-feature table.
pub fn logged(rounds: usize, agent: Engine) -> LoggedDataset {
    let agent = AgentConfig {
        engine: agent.into(),
        refit_every: 1,
    };
    simulate_bandit(&table(200, 4, 3), rounds, &EpsilonSchedule::default(), &agent, 7).expect("simulation")
}
