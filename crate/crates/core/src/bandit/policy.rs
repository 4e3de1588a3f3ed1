use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::models::OutcomeModelSnapshot;

/// A logging policy `g(a|x)` over arms `1..=K`.
pub trait Policy: Send + Sync + fmt::Debug {
    fn arms(&self) -> usize;

    /// Writes `g(a|x)` for `a = 1..=K` into `out[0..K]`.
    fn propensities(&self, context: &[f64], out: &mut [f64]);

    fn propensity(&self, arm: usize, context: &[f64]) -> f64 {
        let mut out = vec![0.0; self.arms()];
        self.propensities(context, &mut out);
        out.get(arm.wrapping_sub(1)).copied().unwrap_or(0.0)
    }
}

/// Index (0-based) of the largest value, ties resolved toward the lowest index.
pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformPolicy {
    pub arms: usize,
}

impl Policy for UniformPolicy {
    fn arms(&self) -> usize {
        self.arms
    }

    fn propensities(&self, _context: &[f64], out: &mut [f64]) {
        out[..self.arms].fill(1.0 / self.arms as f64);
    }

    fn propensity(&self, arm: usize, _context: &[f64]) -> f64 {
        if (1..=self.arms).contains(&arm) {
            1.0 / self.arms as f64
        } else {
            0.0
        }
    }
}

/// Non-contextual policy with fixed arm probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPolicy {
    pub probabilities: Vec<f64>,
}

impl Policy for FixedPolicy {
    fn arms(&self) -> usize {
        self.probabilities.len()
    }

    fn propensities(&self, _context: &[f64], out: &mut [f64]) {
        out[..self.probabilities.len()].copy_from_slice(&self.probabilities);
    }
}

/// Contextual policy given by a finite table; contexts are matched exactly.
/// Unlisted contexts fall back to `default`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupPolicy {
    pub entries: Vec<(Vec<f64>, Vec<f64>)>,
    pub default: Vec<f64>,
}

impl Policy for LookupPolicy {
    fn arms(&self) -> usize {
        self.default.len()
    }

    fn propensities(&self, context: &[f64], out: &mut [f64]) {
        let row = self
            .entries
            .iter()
            .find(|(x, _)| x.as_slice() == context)
            .map(|(_, p)| p)
            .unwrap_or(&self.default);
        out[..row.len()].copy_from_slice(row);
    }
}

/// Epsilon-greedy over a frozen outcome model: the greedy arm gets
/// `1 - eps + eps/K`, every other arm `eps/K`.
#[derive(Debug, Clone)]
pub struct EpsilonGreedyPolicy {
    pub model: Arc<OutcomeModelSnapshot>,
    pub epsilon: f64,
    pub arms: usize,
}

impl EpsilonGreedyPolicy {
    pub fn greedy_arm(&self, context: &[f64]) -> usize {
        let mut q = vec![0.0; self.arms];
        self.model.predict_all(context, &mut q);
        argmax_lowest(&q) + 1
    }
}

impl Policy for EpsilonGreedyPolicy {
    fn arms(&self) -> usize {
        self.arms
    }

    fn propensities(&self, context: &[f64], out: &mut [f64]) {
        let k = self.arms as f64;
        let greedy = self.greedy_arm(context);
        out[..self.arms].fill(self.epsilon / k);
        out[greedy - 1] = 1.0 - self.epsilon + self.epsilon / k;
    }

    fn propensity(&self, arm: usize, context: &[f64]) -> f64 {
        let k = self.arms as f64;
        if arm == self.greedy_arm(context) {
            1.0 - self.epsilon + self.epsilon / k
        } else {
            self.epsilon / k
        }
    }
}

/// The policy that was in force at one round of data collection.
#[derive(Debug, Clone)]
pub struct PolicySnapshot {
    pub policy: Arc<dyn Policy>,
    /// 1-based round this policy was used at.
    pub round: usize,
    /// Declared lower bound on every propensity.
    pub floor: f64,
}

impl PolicySnapshot {
    pub fn new(policy: Arc<dyn Policy>, round: usize, floor: f64) -> Self {
        Self { policy, round, floor }
    }

    pub fn propensity(&self, arm: usize, context: &[f64]) -> f64 {
        self.policy.propensity(arm, context)
    }

    /// Checks normalization and the exploration floor at one context.
    pub fn check(&self, context: &[f64]) -> Result<(), String> {
        let mut p = vec![0.0; self.policy.arms()];
        self.policy.propensities(context, &mut p);
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(format!("propensities sum to {total}"));
        }
        if let Some((a, v)) = p.iter().enumerate().find(|(_, &v)| !(v >= self.floor && v > 0.0)) {
            return Err(format!("propensity {v} of arm {} below floor {}", a + 1, self.floor));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::OutcomeModel;

    #[test]
    fn epsilon_greedy_two_arms() {
        let model = OutcomeModelSnapshot::new(
            OutcomeModel::Lookup {
                entries: vec![],
                default: vec![0.1, 0.9],
            },
            0,
            "lookup",
        );
        let pol = EpsilonGreedyPolicy {
            model: Arc::new(model),
            epsilon: 0.01,
            arms: 2,
        };
        let mut p = [0.0; 2];
        pol.propensities(&[0.0], &mut p);
        assert!((p[1] - 0.995).abs() < 1e-15);
        assert!((p[0] - 0.005).abs() < 1e-15);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        assert_eq!(pol.propensity(2, &[0.0]), p[1]);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax_lowest(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax_lowest(&[2.0, 2.0]), 0);
    }

    #[test]
    fn snapshot_check_flags_floor() {
        let snap = PolicySnapshot::new(
            Arc::new(FixedPolicy {
                probabilities: vec![0.99, 0.01],
            }),
            1,
            0.05,
        );
        assert!(snap.check(&[]).is_err());
        let ok = PolicySnapshot::new(Arc::new(UniformPolicy { arms: 4 }), 1, 0.25);
        assert!(ok.check(&[1.0]).is_ok());
    }
}
