//! Per-arm outcome regressions and the schedules that turn a logged dataset
//! into a sequence of frozen outcome models.

mod linear;
mod schedule;
mod tree;

use serde::{Deserialize, Serialize};

pub use linear::LinearArm;
pub use schedule::{
    crosstime_snapshots, for_each_sequential, predict_rounds, row_weights, sequential_snapshots, Engine, EngineChoice,
    RoundPredictions, SampleWeighting, Schedule, TrainingSchedule,
};
pub use tree::{RegressionTree, TreeConfig, TreeNode};

use crate::error::{OpeError, Result};
use linear::LinearAccumulator;
use tree::TreeAccumulator;

/// One training example for an outcome model.
#[derive(Debug, Clone, Copy)]
pub struct TrainingRow<'a> {
    pub context: &'a [f64],
    /// 1-based arm.
    pub arm: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "snake_case")]
pub enum OutcomeModel {
    Constant {
        value: f64,
    },
    /// Arms without training rows (`None`) predict `fallback`.
    Linear {
        arms: Vec<Option<LinearArm>>,
        fallback: f64,
    },
    Tree {
        arms: Vec<Option<RegressionTree>>,
        fallback: f64,
    },
    /// Exact per-context table of per-arm values.
    Lookup {
        entries: Vec<(Vec<f64>, Vec<f64>)>,
        default: Vec<f64>,
    },
}

/// A frozen estimate of the conditional mean reward `Q(a, x)`. Total: every
/// arm and context gets a finite prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModelSnapshot {
    pub model: OutcomeModel,
    /// Number of observations the model was trained on.
    pub fitted_on: usize,
    /// Engine, weighting and schedule that produced the model.
    pub tag: String,
}

impl OutcomeModelSnapshot {
    pub fn new(model: OutcomeModel, fitted_on: usize, tag: impl Into<String>) -> Self {
        Self {
            model,
            fitted_on,
            tag: tag.into(),
        }
    }

    /// Predicts 0 for every arm; used before any data exists.
    pub fn zero() -> Self {
        Self::new(OutcomeModel::Constant { value: 0.0 }, 0, "zero")
    }

    pub fn engine_name(&self) -> &'static str {
        match self.model {
            OutcomeModel::Constant { .. } => "constant",
            OutcomeModel::Linear { .. } => "linear",
            OutcomeModel::Tree { .. } => "tree",
            OutcomeModel::Lookup { .. } => "lookup",
        }
    }

    #[inline]
    pub fn predict(&self, arm: usize, context: &[f64]) -> f64 {
        let i = arm.wrapping_sub(1);
        match &self.model {
            OutcomeModel::Constant { value } => *value,
            OutcomeModel::Linear { arms, fallback } => match arms.get(i) {
                Some(Some(m)) => m.predict(context),
                _ => *fallback,
            },
            OutcomeModel::Tree { arms, fallback } => match arms.get(i) {
                Some(Some(m)) => m.predict(context),
                _ => *fallback,
            },
            OutcomeModel::Lookup { entries, default } => entries
                .iter()
                .find(|(x, _)| x.as_slice() == context)
                .map_or(default, |(_, v)| v)
                .get(i)
                .copied()
                .unwrap_or(0.0),
        }
    }

    /// Writes predictions for arms `1..=out.len()`.
    pub fn predict_all(&self, context: &[f64], out: &mut [f64]) {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.predict(i + 1, context);
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_rows(rows: &[TrainingRow<'_>], weights: Option<&[f64]>) -> Result<()> {
    if rows.is_empty() {
        return Err(OpeError::Empty("training rows"));
    }
    let dim = rows[0].context.len();
    for r in rows {
        if r.arm == 0 {
            return Err(OpeError::Invalid("arms are 1-based".into()));
        }
        if r.context.len() != dim {
            return Err(OpeError::Invalid("ragged training contexts".into()));
        }
        if !r.reward.is_finite() || r.context.iter().any(|v| !v.is_finite()) {
            return Err(OpeError::NonFinite("training rows"));
        }
    }
    if let Some(w) = weights {
        if w.len() != rows.len() {
            return Err(OpeError::Invalid(format!(
                "{} weights for {} rows",
                w.len(),
                rows.len()
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(OpeError::NonFinite("row weights"));
        }
        if w.iter().any(|&v| v <= 0.0) {
            return Err(OpeError::Invalid("row weights must be positive".into()));
        }
    }
    Ok(())
}

/// Per-arm weighted least squares of reward on `[1, context]`.
pub fn fit_linear(rows: &[TrainingRow<'_>], weights: Option<&[f64]>) -> Result<OutcomeModelSnapshot> {
    check_rows(rows, weights)?;
    let arms = rows.iter().map(|r| r.arm).max().unwrap_or(0);
    let mut fitter = Fitter::new(Engine::Linear, arms, rows[0].context.len(), TreeConfig::default());
    for (i, r) in rows.iter().enumerate() {
        fitter.push(r.context, r.arm, r.reward, weights.map_or(1.0, |w| w[i]));
    }
    Ok(fitter.snapshot("linear"))
}

/// Per-arm CART regression trees with the given growth limits.
pub fn fit_tree_with(
    rows: &[TrainingRow<'_>],
    weights: Option<&[f64]>,
    cfg: TreeConfig,
) -> Result<OutcomeModelSnapshot> {
    check_rows(rows, weights)?;
    let arms = rows.iter().map(|r| r.arm).max().unwrap_or(0);
    let mut fitter = Fitter::new(Engine::Tree, arms, rows[0].context.len(), cfg);
    for (i, r) in rows.iter().enumerate() {
        fitter.push(r.context, r.arm, r.reward, weights.map_or(1.0, |w| w[i]));
    }
    Ok(fitter.snapshot("tree"))
}

/// Per-arm CART regression trees grown to purity.
pub fn fit_tree(rows: &[TrainingRow<'_>], weights: Option<&[f64]>) -> Result<OutcomeModelSnapshot> {
    fit_tree_with(rows, weights, TreeConfig::default())
}

/// Incremental trainer: rows are pushed in order and a snapshot can be cut at any time.
#[derive(Debug, Clone)]
pub(crate) struct Fitter {
    state: FitterState,
    reward_sum: f64,
    rows: usize,
    tree_cfg: TreeConfig,
}

#[derive(Debug, Clone)]
enum FitterState {
    Linear(Vec<LinearAccumulator>),
    Tree(Vec<TreeAccumulator>),
}

impl Fitter {
    pub fn new(engine: Engine, arms: usize, dim: usize, tree_cfg: TreeConfig) -> Self {
        let state = match engine {
            Engine::Linear => FitterState::Linear((0..arms).map(|_| LinearAccumulator::new(dim)).collect()),
            Engine::Tree => FitterState::Tree(vec![TreeAccumulator::default(); arms]),
        };
        Self {
            state,
            reward_sum: 0.0,
            rows: 0,
            tree_cfg,
        }
    }

    pub fn push(&mut self, context: &[f64], arm: usize, reward: f64, weight: f64) {
        match &mut self.state {
            FitterState::Linear(accs) => accs[arm - 1].push(context, reward, weight),
            FitterState::Tree(accs) => accs[arm - 1].push(context, reward, weight),
        }
        self.reward_sum += reward;
        self.rows += 1;
    }

    /// Freezes the current fit. Arms without rows predict the mean training
    /// reward, or 0 when there is no data at all.
    pub fn snapshot(&self, tag: &str) -> OutcomeModelSnapshot {
        if self.rows == 0 {
            return OutcomeModelSnapshot::new(OutcomeModel::Constant { value: 0.0 }, 0, tag);
        }
        let fallback = self.reward_sum / self.rows as f64;
        let model = match &self.state {
            FitterState::Linear(accs) => OutcomeModel::Linear {
                arms: accs.iter().map(|a| (!a.is_empty()).then(|| a.solve())).collect(),
                fallback,
            },
            FitterState::Tree(accs) => OutcomeModel::Tree {
                arms: accs.iter().map(|a| a.fit(&self.tree_cfg)).collect(),
                fallback,
            },
        };
        OutcomeModelSnapshot::new(model, self.rows, tag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows<'a>(pts: &'a [(Vec<f64>, usize, f64)]) -> Vec<TrainingRow<'a>> {
        pts.iter()
            .map(|(x, a, y)| TrainingRow {
                context: x,
                arm: *a,
                reward: *y,
            })
            .collect()
    }

    #[test]
    fn linear_interpolates_affine_data() {
        let pts: Vec<_> = [0.0, 1.0, 2.0].iter().map(|&x| (vec![x], 1, 2.0 * x + 1.0)).collect();
        let m = fit_linear(&rows(&pts), None).unwrap();
        for x in [0.0, 1.0, 2.0, -3.5, 10.0] {
            assert!((m.predict(1, &[x]) - (2.0 * x + 1.0)).abs() <= 1e-10);
        }
    }

    #[test]
    fn constant_rewards_everywhere() {
        let pts: Vec<_> = (0..6)
            .map(|i| (vec![i as f64 * 0.7, (i * i) as f64 - 3.0], 1 + i % 2, 4.25))
            .collect();
        for m in [
            fit_linear(&rows(&pts), None).unwrap(),
            fit_tree(&rows(&pts), None).unwrap(),
        ] {
            for a in 1..=3 {
                for x in [[0.0, 0.0], [5.0, -2.0]] {
                    assert!((m.predict(a, &x) - 4.25).abs() <= 1e-10, "{}", m.tag);
                }
            }
        }
    }

    #[test]
    fn tree_memorizes_distinct_points() {
        let pts: Vec<_> = (0..12)
            .map(|i| {
                let x = vec![(i as f64 * 1.37).sin(), (i as f64 * 0.61).cos()];
                let y = (i as f64 * 2.3).sin() * 3.0;
                (x, 1 + i % 3, y)
            })
            .collect();
        let m = fit_tree(&rows(&pts), None).unwrap();
        for (x, a, y) in &pts {
            assert_eq!(m.predict(*a, x), *y);
        }
    }

    #[test]
    fn unseen_arm_uses_global_mean() {
        let pts = vec![(vec![0.0], 1, 1.0), (vec![1.0], 1, 3.0)];
        let m = fit_linear(&rows(&pts), None).unwrap();
        assert_eq!(m.predict(2, &[0.5]), 2.0);
        assert_eq!(m.predict(7, &[0.5]), 2.0);
    }

    #[test]
    fn input_errors() {
        assert!(matches!(fit_linear(&[], None), Err(OpeError::Empty(_))));
        let pts = vec![(vec![f64::NAN], 1, 1.0)];
        assert!(matches!(fit_tree(&rows(&pts), None), Err(OpeError::NonFinite(_))));
        let pts = vec![(vec![0.0], 1, 1.0)];
        assert!(fit_linear(&rows(&pts), Some(&[0.0])).is_err());
        assert!(fit_linear(&rows(&pts), Some(&[1.0, 1.0])).is_err());
    }

    #[test]
    fn snapshot_dump_is_self_describing() {
        let pts = vec![(vec![0.0], 1, 0.0), (vec![1.0], 1, 1.0)];
        let m = fit_tree(&rows(&pts), None).unwrap();
        let json = m.to_json().unwrap();
        assert!(json.contains("\"engine\": \"tree\""));
        assert!(json.contains("\"threshold\": 0.5"));
        let back: OutcomeModelSnapshot = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}
