//! Data-generating processes: classification tables turned into bandits,
//! enumerable finite environments, the ε-greedy logging agent, target
//! policies and exact ground-truth values.

mod enumerable;
pub mod rng;
mod table;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use enumerable::{EnumContext, EnumerableEnvironment};
pub use table::{ClassificationTable, SyntheticTableSpec};

use crate::bandit::{
    EpsilonGreedyPolicy, LoggedDataset, Observation, Policy, PolicySnapshot, TargetFunctional, UniformPolicy,
};
use crate::error::{OpeError, Result};
use crate::models::{Engine, EngineChoice, Fitter};
use rng::{categorical, stream_rng, SimRng, Stream};

/// A reward process with finitely many contexts, indexed `0..n`.
pub trait RewardEnvironment: Send + Sync {
    fn arms(&self) -> usize;
    fn dim(&self) -> usize;
    fn draw_context(&self, rng: &mut SimRng) -> usize;
    fn context(&self, index: usize) -> &[f64];
    fn draw_reward(&self, index: usize, arm: usize, rng: &mut SimRng) -> f64;
    /// Exact `Psi_0(g*)`.
    fn policy_value(&self, gstar: &TargetFunctional) -> f64;
}

/// `eps_t = c * t^-exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub c: f64,
    pub exponent: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            c: 0.01,
            exponent: 1.0 / 3.0,
        }
    }
}

impl EpsilonSchedule {
    pub fn epsilon(&self, t: usize) -> f64 {
        self.c * (t as f64).powf(-self.exponent)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c <= 1.0) || !(self.exponent >= 0.0 && self.exponent.is_finite()) {
            return Err(OpeError::Config(format!(
                "epsilon schedule needs 0 < c <= 1 and exponent >= 0, got c={}, exponent={}",
                self.c, self.exponent
            )));
        }
        Ok(())
    }

    /// True when the per-arm exploration rate decays faster than `t^-1/2`.
    pub fn decays_too_fast(&self) -> bool {
        self.exponent > 0.5
    }
}

/// The logging agent's outcome model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentConfig {
    pub engine: EngineChoice,
    pub refit_every: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            engine: Engine::Tree.into(),
            refit_every: 1,
        }
    }
}

/// Runs the ε-greedy agent for `rounds` rounds.
///
/// Arms are pulled uniformly at random until every arm has been seen. After
/// that the agent plays ε-greedy on its outcome model, refitted on all past
/// rounds whenever `(t - 1) % refit_every == 0`.
pub fn simulate_bandit<E: RewardEnvironment + ?Sized>(
    env: &E,
    rounds: usize,
    sched: &EpsilonSchedule,
    agent: &AgentConfig,
    seed: u64,
) -> Result<LoggedDataset> {
    let k = env.arms();
    if rounds < k {
        return Err(OpeError::Config(format!("T = {rounds} is smaller than K = {k}")));
    }
    sched.check()?;
    if agent.refit_every == 0 {
        return Err(OpeError::Config("agent refit_every must be at least 1".into()));
    }
    if sched.decays_too_fast() {
        log::warn!(
            "exploration exponent {} > 1/2: eps_t/K decays faster than t^-1/2",
            sched.exponent
        );
    }
    let mut ctx_rng = stream_rng(seed, Stream::Context);
    let mut arm_rng = stream_rng(seed, Stream::Arm);
    let mut reward_rng = stream_rng(seed, Stream::Reward);

    let uniform: Arc<dyn Policy> = Arc::new(UniformPolicy { arms: k });
    let mut fitter = Fitter::new(agent.engine.engine, k, env.dim(), agent.engine.tree);
    let mut model = None;
    let mut pulled = vec![false; k];
    let mut exploring = true;
    let mut probs = vec![0.0; k];
    let mut observations = Vec::with_capacity(rounds);
    let mut snapshots = Vec::with_capacity(rounds);

    for t in 1..=rounds {
        let idx = env.draw_context(&mut ctx_rng);
        let x = env.context(idx);
        let (policy, floor) = if exploring {
            (Arc::clone(&uniform), 1.0 / k as f64)
        } else {
            if model.is_none() || (t - 1) % agent.refit_every == 0 {
                model = Some(Arc::new(fitter.snapshot("agent")));
            }
            let eps = sched.epsilon(t);
            let policy: Arc<dyn Policy> = Arc::new(EpsilonGreedyPolicy {
                model: Arc::clone(model.as_ref().expect("fitted above")),
                epsilon: eps,
                arms: k,
            });
            (policy, eps / k as f64)
        };
        policy.propensities(x, &mut probs);
        let arm = categorical(&probs, &mut arm_rng) + 1;
        let reward = env.draw_reward(idx, arm, &mut reward_rng);
        fitter.push(x, arm, reward, 1.0);
        observations.push(Observation {
            round: t,
            context: x.to_vec(),
            arm,
            reward,
        });
        snapshots.push(PolicySnapshot::new(policy, t, floor));
        pulled[arm - 1] = true;
        exploring = exploring && !pulled.iter().all(|&p| p);
    }
    Ok(LoggedDataset::from_snapshots(k, env.dim(), observations, snapshots))
}

/// Logs `rounds` rounds under one fixed policy.
pub fn simulate_with_policy<E: RewardEnvironment + ?Sized>(
    env: &E,
    rounds: usize,
    policy: Arc<dyn Policy>,
    floor: f64,
    seed: u64,
) -> Result<LoggedDataset> {
    let k = env.arms();
    if policy.arms() != k {
        return Err(OpeError::Config(format!(
            "policy has {} arms, environment has {k}",
            policy.arms()
        )));
    }
    let mut ctx_rng = stream_rng(seed, Stream::Context);
    let mut arm_rng = stream_rng(seed, Stream::Arm);
    let mut reward_rng = stream_rng(seed, Stream::Reward);
    let mut probs = vec![0.0; k];
    let mut observations = Vec::with_capacity(rounds);
    let mut snapshots = Vec::with_capacity(rounds);
    for t in 1..=rounds {
        let idx = env.draw_context(&mut ctx_rng);
        let x = env.context(idx);
        policy.propensities(x, &mut probs);
        let arm = categorical(&probs, &mut arm_rng) + 1;
        let reward = env.draw_reward(idx, arm, &mut reward_rng);
        observations.push(Observation {
            round: t,
            context: x.to_vec(),
            arm,
            reward,
        });
        snapshots.push(PolicySnapshot::new(Arc::clone(&policy), t, floor));
    }
    Ok(LoggedDataset::from_snapshots(k, env.dim(), observations, snapshots))
}

/// `g*(a|x) = 1{a = k}`.
pub fn target_arm(k: usize, arms: usize) -> Result<TargetFunctional> {
    TargetFunctional::arm(k, arms)
}

/// Greedy policy of a model fitted on `rounds` fresh uniformly-logged rounds.
/// The data come from the `Target` stream of `seed`, so they never overlap the
/// evaluation data.
pub fn target_learned<E: RewardEnvironment + ?Sized>(
    env: &E,
    rounds: usize,
    engine: EngineChoice,
    seed: u64,
) -> Result<TargetFunctional> {
    if rounds == 0 {
        return Err(OpeError::Config("learned target needs T >= 1".into()));
    }
    let k = env.arms();
    let mut rng = stream_rng(seed, Stream::Target);
    let mut fitter = Fitter::new(engine.engine, k, env.dim(), engine.tree);
    let uniform = vec![1.0 / k as f64; k];
    for _ in 0..rounds {
        let idx = env.draw_context(&mut rng);
        let arm = categorical(&uniform, &mut rng) + 1;
        let reward = env.draw_reward(idx, arm, &mut rng);
        fitter.push(env.context(idx), arm, reward, 1.0);
    }
    Ok(TargetFunctional::Greedy {
        model: Arc::new(fitter.snapshot(&format!("target/{}", engine.engine))),
        arms: k,
    })
}

/// Exact value of `gstar` on a classification bandit.
pub fn true_value(table: &ClassificationTable, gstar: &TargetFunctional) -> f64 {
    table.policy_value(gstar)
}

/// Exact value of `gstar` on an enumerable environment.
pub fn true_value_enumerable(env: &EnumerableEnvironment, gstar: &TargetFunctional) -> f64 {
    env.policy_value(gstar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::validate_dataset;

    fn labels_table(labels: &[usize], arms: usize) -> ClassificationTable {
        let rows = labels.iter().enumerate().map(|(i, &l)| (vec![i as f64], l)).collect();
        ClassificationTable::new(rows, arms).unwrap()
    }

    #[test]
    fn schedule_values_and_warning() {
        let s = EpsilonSchedule::default();
        assert!((s.epsilon(1000) - 0.001).abs() < 1e-15);
        assert!(!s.decays_too_fast());
        assert!(!EpsilonSchedule { c: 0.01, exponent: 0.5 }.decays_too_fast());
        assert!(EpsilonSchedule {
            c: 0.01,
            exponent: 0.51
        }
        .decays_too_fast());
        assert!(EpsilonSchedule { c: 0.0, exponent: 0.3 }.check().is_err());
    }

    #[test]
    fn greedy_propensities() {
        let model = Arc::new(crate::models::OutcomeModelSnapshot::zero());
        let p = EpsilonGreedyPolicy {
            model,
            epsilon: 0.01,
            arms: 2,
        };
        let mut out = [0.0; 2];
        p.propensities(&[0.0], &mut out);
        assert!((out[0] - 0.995).abs() < 1e-15);
        assert!((out[1] - 0.005).abs() < 1e-15);
    }

    #[test]
    fn true_values_by_counting() {
        let table = labels_table(&[1, 2, 1, 1], 2);
        assert_eq!(true_value(&table, &target_arm(1, 2).unwrap()), 0.75);
        assert_eq!(true_value(&table, &target_arm(2, 2).unwrap()), 0.25);
        let t3 = labels_table(&[1, 2, 3, 3, 2], 3);
        let v = true_value(&t3, &TargetFunctional::Uniform { arms: 3 });
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
        assert!(target_arm(3, 2).is_err());
    }

    #[test]
    fn simulated_data_is_valid_with_exact_floor() {
        let table = labels_table(&[1, 2, 3], 3);
        let sched = EpsilonSchedule::default();
        let ds = simulate_bandit(&table, 50, &sched, &AgentConfig::default(), 17).unwrap();
        assert!(validate_dataset(&ds).is_empty());
        let snaps = ds.snapshots().unwrap();
        let mut greedy_rounds = 0;
        for (o, s) in ds.observations().iter().zip(snaps) {
            let mut p = [0.0; 3];
            s.policy.propensities(&o.context, &mut p);
            let min = p.iter().cloned().fold(f64::INFINITY, f64::min);
            if s.floor < 1.0 / 3.0 {
                greedy_rounds += 1;
                assert_eq!(min, sched.epsilon(o.round) / 3.0);
            } else {
                assert_eq!(min, 1.0 / 3.0);
            }
        }
        assert!(greedy_rounds > 30);
        assert!(simulate_bandit(&table, 2, &sched, &AgentConfig::default(), 1).is_err());
    }

    #[test]
    fn simulation_replays_exactly() {
        let table = labels_table(&[1, 2, 2, 1, 3], 3);
        let run = || {
            let ds = simulate_bandit(&table, 80, &EpsilonSchedule::default(), &AgentConfig::default(), 5).unwrap();
            let mut buf = Vec::new();
            crate::bandit::io::write_dataset_csv(&ds, &mut buf).unwrap();
            buf
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn learned_target_on_single_label_picks_it() {
        let table = labels_table(&[2, 2, 2, 2], 3);
        for engine in [Engine::Linear, Engine::Tree] {
            let g = target_learned(&table, 300, engine.into(), 3).unwrap();
            for x in table.contexts() {
                assert_eq!(g.weight(2, x), 1.0);
            }
            assert_eq!(true_value(&table, &g), 1.0);
        }
    }

    #[test]
    fn learned_target_is_deterministic() {
        let table = labels_table(&[1, 2, 3, 1, 2], 3);
        let a = target_learned(&table, 500, Engine::Tree.into(), 9).unwrap();
        let b = target_learned(&table, 500, Engine::Tree.into(), 9).unwrap();
        let (TargetFunctional::Greedy { model: ma, .. }, TargetFunctional::Greedy { model: mb, .. }) = (&a, &b) else {
            panic!("expected greedy targets");
        };
        assert_eq!(ma.to_json().unwrap(), mb.to_json().unwrap());
    }
}
