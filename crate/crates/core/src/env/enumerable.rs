use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::rng::{categorical, open_uniform, SimRng};
use super::RewardEnvironment;
use crate::bandit::TargetFunctional;
use crate::error::{OpeError, Result};
use crate::models::{OutcomeModel, OutcomeModelSnapshot};

/// One context of an enumerable environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumContext {
    pub x: Vec<f64>,
    pub p: f64,
    /// Per arm: finite reward distribution as `[value, probability]` pairs.
    pub rewards: Vec<Vec<(f64, f64)>>,
}

/// Finite contexts, arms and reward supports, so every expectation is an exact sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerableEnvironment {
    pub arms: usize,
    pub contexts: Vec<EnumContext>,
}

impl EnumerableEnvironment {
    pub fn new(arms: usize, contexts: Vec<EnumContext>) -> Result<Self> {
        let env = Self { arms, contexts };
        env.check()?;
        Ok(env)
    }

    pub fn check(&self) -> Result<()> {
        if self.contexts.is_empty() || self.arms == 0 {
            return Err(OpeError::Data("environment needs contexts and arms".into()));
        }
        let dim = self.contexts[0].x.len();
        let total: f64 = self.contexts.iter().map(|c| c.p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(OpeError::Data(format!("context probabilities sum to {total}")));
        }
        for (i, c) in self.contexts.iter().enumerate() {
            if c.x.len() != dim || c.p < 0.0 {
                return Err(OpeError::Data(format!("context {i}: bad dimension or probability")));
            }
            if c.rewards.len() != self.arms {
                return Err(OpeError::Data(format!(
                    "context {i}: {} reward distributions for {} arms",
                    c.rewards.len(),
                    self.arms
                )));
            }
            for (a, pmf) in c.rewards.iter().enumerate() {
                let mass: f64 = pmf.iter().map(|(_, p)| p).sum();
                if pmf.is_empty() || (mass - 1.0).abs() > 1e-9 || pmf.iter().any(|(y, p)| !y.is_finite() || *p < 0.0) {
                    return Err(OpeError::Data(format!(
                        "context {i}, arm {}: reward distribution invalid",
                        a + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let env: Self = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))
            .map_err(|e| OpeError::Data(format!("{}: {e}", path.display())))?;
        env.check()?;
        Ok(env)
    }

    /// True mean reward `Q0(a, x_i)`.
    pub fn mean_reward(&self, context: usize, arm: usize) -> f64 {
        self.contexts[context].rewards[arm - 1].iter().map(|(y, p)| y * p).sum()
    }

    /// The true outcome model as an exact lookup table.
    pub fn true_outcome_model(&self) -> OutcomeModelSnapshot {
        let entries = self
            .contexts
            .iter()
            .enumerate()
            .map(|(i, c)| (c.x.clone(), (1..=self.arms).map(|a| self.mean_reward(i, a)).collect()))
            .collect();
        OutcomeModelSnapshot::new(
            OutcomeModel::Lookup {
                entries,
                default: vec![0.0; self.arms],
            },
            0,
            "truth",
        )
    }

    /// Random environment with one-hot contexts of dimension `contexts`,
    /// Dirichlet-like context weights and rewards on `atoms` distinct points.
    pub fn random<R: RngCore>(rng: &mut R, contexts: usize, arms: usize, atoms: usize) -> Self {
        let mut weights: Vec<f64> = (0..contexts).map(|_| 0.1 + open_uniform(rng)).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let ctxs = weights
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let mut x = vec![0.0; contexts];
                x[i] = 1.0;
                let rewards = (0..arms)
                    .map(|_| {
                        let mut ps: Vec<f64> = (0..atoms).map(|_| 0.05 + open_uniform(rng)).collect();
                        let s: f64 = ps.iter().sum();
                        ps.iter_mut().for_each(|v| *v /= s);
                        ps.into_iter()
                            .enumerate()
                            .map(|(j, q)| (j as f64 + 2.0 * open_uniform(rng) - 1.0, q))
                            .collect()
                    })
                    .collect();
                EnumContext { x, p, rewards }
            })
            .collect();
        Self { arms, contexts: ctxs }
    }
}

impl RewardEnvironment for EnumerableEnvironment {
    fn arms(&self) -> usize {
        self.arms
    }

    fn dim(&self) -> usize {
        self.contexts[0].x.len()
    }

    fn draw_context(&self, rng: &mut SimRng) -> usize {
        let p: Vec<f64> = self.contexts.iter().map(|c| c.p).collect();
        categorical(&p, rng)
    }

    fn context(&self, index: usize) -> &[f64] {
        &self.contexts[index].x
    }

    fn draw_reward(&self, index: usize, arm: usize, rng: &mut SimRng) -> f64 {
        let pmf = &self.contexts[index].rewards[arm - 1];
        let p: Vec<f64> = pmf.iter().map(|(_, q)| *q).collect();
        pmf[categorical(&p, rng)].0
    }

    /// Exact `sum_x P(x) sum_a g*(a|x) sum_y P(y|a,x) y`.
    fn policy_value(&self, gstar: &TargetFunctional) -> f64 {
        self.contexts
            .iter()
            .enumerate()
            .map(|(i, c)| {
                c.p * (1..=self.arms)
                    .map(|a| gstar.weight(a, &c.x) * self.mean_reward(i, a))
                    .sum::<f64>()
            })
            .sum()
    }
}
