use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Fitter, OutcomeModelSnapshot, TreeConfig};
use crate::bandit::{LoggedDataset, TargetFunctional};
use crate::error::{OpeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Linear,
    Tree,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Linear => "linear",
            Engine::Tree => "tree",
        })
    }
}

impl FromStr for Engine {
    type Err = OpeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(Engine::Linear),
            "tree" => Ok(Engine::Tree),
            other => Err(OpeError::Config(format!("unknown outcome model `{other}`"))),
        }
    }
}

/// How training rows are weighted when fitting the outcome model.
#[derive(Debug, Clone, Default)]
pub enum SampleWeighting {
    #[default]
    Uniform,
    /// `|g*(A|X)| (1 - g_s(A|X)) / g_s(A|X)^2`.
    Mrdr,
    /// `|g_ref(A|X)| / g_s(A|X)`; `None` uses the estimand's own `g*`.
    ImportanceSampled { reference: Option<TargetFunctional> },
}

impl SampleWeighting {
    pub fn label(&self) -> &'static str {
        match self {
            SampleWeighting::Uniform => "uniform",
            SampleWeighting::Mrdr => "mrdr",
            SampleWeighting::ImportanceSampled { .. } => "is",
        }
    }

    /// Whether the row weights depend on the target functional.
    pub fn depends_on_target(&self) -> bool {
        matches!(
            self,
            SampleWeighting::Mrdr | SampleWeighting::ImportanceSampled { reference: None }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Schedule {
    /// Model for round `t` uses rounds `1..t-1`, refit every `refit_every` rounds.
    Sequential { refit_every: usize },
    /// Contiguous folds; fold `f` is predicted by a model trained without folds `f` and `f+1`.
    CrossTime { folds: usize },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Sequential { refit_every: 1 }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Sequential { refit_every: 1 } => write!(f, "sequential"),
            Schedule::Sequential { refit_every } => write!(f, "sequential:{refit_every}"),
            Schedule::CrossTime { folds } => write!(f, "crosstime:{folds}"),
        }
    }
}

impl FromStr for Schedule {
    type Err = OpeError;

    /// `sequential`, `sequential:N` or `crosstime:F`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s.as_str(), None),
        };
        let num = |a: Option<&str>, default: usize| -> Result<usize> {
            a.map_or(Ok(default), |v| {
                v.parse()
                    .map_err(|_| OpeError::Config(format!("bad training argument `{v}`")))
            })
        };
        let sched = match name {
            "sequential" => Schedule::Sequential {
                refit_every: num(arg, 1)?,
            },
            "crosstime" => Schedule::CrossTime { folds: num(arg, 4)? },
            other => return Err(OpeError::Config(format!("unknown training schedule `{other}`"))),
        };
        sched.check()?;
        Ok(sched)
    }
}

impl Schedule {
    pub fn check(&self) -> Result<()> {
        match *self {
            Schedule::Sequential { refit_every: 0 } => Err(OpeError::Config("refit_every must be at least 1".into())),
            Schedule::CrossTime { folds } if folds < 2 => {
                Err(OpeError::Config("cross-time fitting needs at least 2 folds".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Everything needed to produce the outcome-model sequence for a dataset.
#[derive(Debug, Clone, Default)]
pub struct TrainingSchedule {
    pub schedule: Schedule,
    pub engine: EngineChoice,
    pub weighting: SampleWeighting,
}

/// Engine plus tree growth limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineChoice {
    pub engine: Engine,
    pub tree: TreeConfig,
}

impl Default for EngineChoice {
    fn default() -> Self {
        Self {
            engine: Engine::Linear,
            tree: TreeConfig::default(),
        }
    }
}

impl From<Engine> for EngineChoice {
    fn from(engine: Engine) -> Self {
        Self {
            engine,
            tree: TreeConfig::default(),
        }
    }
}

impl TrainingSchedule {
    pub fn new(schedule: Schedule, engine: Engine, weighting: SampleWeighting) -> Self {
        Self {
            schedule,
            engine: engine.into(),
            weighting,
        }
    }

    fn tag(&self) -> String {
        format!("{}/{}/{}", self.engine.engine, self.weighting.label(), self.schedule)
    }
}

/// Training weight of every round under `weighting`. Zero means the row is left out.
pub fn row_weights(ds: &LoggedDataset, weighting: &SampleWeighting, gstar: &TargetFunctional) -> Result<Vec<f64>> {
    let g = ds.logged_propensities();
    let weights: Vec<f64> = match weighting {
        SampleWeighting::Uniform => vec![1.0; ds.len()],
        SampleWeighting::Mrdr => ds
            .observations()
            .iter()
            .zip(g)
            .map(|(o, &gs)| gstar.weight(o.arm, &o.context).abs() * (1.0 - gs) / (gs * gs))
            .collect(),
        SampleWeighting::ImportanceSampled { reference } => {
            let r = reference.as_ref().unwrap_or(gstar);
            ds.observations()
                .iter()
                .zip(g)
                .map(|(o, &gs)| r.weight(o.arm, &o.context).abs() / gs)
                .collect()
        }
    };
    if let Some(t) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
        return Err(OpeError::NonPositivePropensity {
            round: t + 1,
            value: g[t],
        });
    }
    Ok(weights)
}

/// Streams `Q_{t-1}` for `t = 1..=T` under a sequential schedule without retaining them.
pub fn for_each_sequential<F>(
    ds: &LoggedDataset,
    training: &TrainingSchedule,
    gstar: &TargetFunctional,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(usize, &Arc<OutcomeModelSnapshot>) -> Result<()>,
{
    let Schedule::Sequential { refit_every } = training.schedule else {
        return Err(OpeError::Config("expected a sequential schedule".into()));
    };
    training.schedule.check()?;
    let weights = row_weights(ds, &training.weighting, gstar)?;
    let tag = training.tag();
    let mut fitter = Fitter::new(training.engine.engine, ds.arms(), ds.dim(), training.engine.tree);
    let mut current = Arc::new(OutcomeModelSnapshot::zero());
    for t in 1..=ds.len() {
        if t > 1 {
            let o = ds.observation(t - 1);
            let w = weights[t - 2];
            if w > 0.0 {
                fitter.push(&o.context, o.arm, o.reward, w);
            }
            if (t - 1) % refit_every == 0 {
                current = Arc::new(fitter.snapshot(&tag));
            }
        }
        visit(t, &current)?;
    }
    Ok(())
}

/// `snapshot[t-1]` is the model used at round `t`, trained on rounds before `t` only.
pub fn sequential_snapshots(
    ds: &LoggedDataset,
    training: &TrainingSchedule,
    gstar: &TargetFunctional,
) -> Result<Vec<Arc<OutcomeModelSnapshot>>> {
    let mut out = Vec::with_capacity(ds.len());
    for_each_sequential(ds, training, gstar, |_, m| {
        out.push(Arc::clone(m));
        Ok(())
    })?;
    Ok(out)
}

/// 0-based fold of each round: `folds` contiguous blocks, the last absorbing the remainder.
fn fold_of(t: usize, rounds: usize, folds: usize) -> usize {
    ((t - 1) / (rounds / folds)).min(folds - 1)
}

/// Cross-time fitted models, one per round (shared within a fold).
pub fn crosstime_snapshots(
    ds: &LoggedDataset,
    training: &TrainingSchedule,
    gstar: &TargetFunctional,
) -> Result<Vec<Arc<OutcomeModelSnapshot>>> {
    let Schedule::CrossTime { folds } = training.schedule else {
        return Err(OpeError::Config("expected a cross-time schedule".into()));
    };
    training.schedule.check()?;
    let rounds = ds.len();
    if rounds < folds {
        return Err(OpeError::Invalid(format!(
            "cross-time fitting needs T >= folds, got T={rounds}, folds={folds}"
        )));
    }
    let weights = row_weights(ds, &training.weighting, gstar)?;
    let tag = training.tag();
    let models: Vec<Arc<OutcomeModelSnapshot>> = (0..folds)
        .map(|f| {
            let skip = [f, (f + 1).min(folds - 1)];
            let mut fitter = Fitter::new(training.engine.engine, ds.arms(), ds.dim(), training.engine.tree);
            for (o, &w) in ds.observations().iter().zip(&weights) {
                if w > 0.0 && !skip.contains(&fold_of(o.round, rounds, folds)) {
                    fitter.push(&o.context, o.arm, o.reward, w);
                }
            }
            Arc::new(fitter.snapshot(&tag))
        })
        .collect();
    Ok((1..=rounds)
        .map(|t| Arc::clone(&models[fold_of(t, rounds, folds)]))
        .collect())
}

/// Predictions of the round-`s` outcome model at `X(s)` for every arm.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundPredictions {
    arms: usize,
    values: Vec<f64>,
}

impl RoundPredictions {
    pub fn zeros(rounds: usize, arms: usize) -> Self {
        Self {
            arms,
            values: vec![0.0; rounds * arms],
        }
    }

    pub fn from_snapshots(ds: &LoggedDataset, snapshots: &[Arc<OutcomeModelSnapshot>]) -> Result<Self> {
        if snapshots.len() != ds.len() {
            return Err(OpeError::Invalid(format!(
                "{} snapshots for {} rounds",
                snapshots.len(),
                ds.len()
            )));
        }
        let mut out = Self::zeros(ds.len(), ds.arms());
        for (t, m) in snapshots.iter().enumerate() {
            out.fill(t + 1, m, &ds.observation(t + 1).context);
        }
        Ok(out)
    }

    fn fill(&mut self, t: usize, model: &OutcomeModelSnapshot, context: &[f64]) {
        let k = self.arms;
        model.predict_all(context, &mut self.values[(t - 1) * k..t * k]);
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn rounds(&self) -> usize {
        self.values.len().checked_div(self.arms).unwrap_or(0)
    }

    /// `Q_{t-1}(a, X(t))` for `a = 1..=K`.
    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[(t - 1) * self.arms..t * self.arms]
    }
}

/// Evaluates the schedule's model sequence at the observed contexts.
pub fn predict_rounds(
    ds: &LoggedDataset,
    training: &TrainingSchedule,
    gstar: &TargetFunctional,
) -> Result<RoundPredictions> {
    match training.schedule {
        Schedule::Sequential { .. } => {
            let mut out = RoundPredictions::zeros(ds.len(), ds.arms());
            for_each_sequential(ds, training, gstar, |t, m| {
                out.fill(t, m, &ds.observation(t).context);
                Ok(())
            })?;
            Ok(out)
        }
        Schedule::CrossTime { .. } => {
            let snaps = crosstime_snapshots(ds, training, gstar)?;
            RoundPredictions::from_snapshots(ds, &snaps)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_contiguous_with_remainder_last() {
        let f: Vec<usize> = (1..=10).map(|t| fold_of(t, 10, 4)).collect();
        assert_eq!(f, vec![0, 0, 1, 1, 2, 2, 3, 3, 3, 3]);
        let f: Vec<usize> = (1..=8).map(|t| fold_of(t, 8, 4)).collect();
        assert_eq!(f, vec![0, 0, 1, 1, 2, 2, 3, 3]);
    }

    #[test]
    fn schedule_parsing() {
        assert_eq!(
            "sequential".parse::<Schedule>().unwrap(),
            Schedule::Sequential { refit_every: 1 }
        );
        assert_eq!(
            "crosstime:4".parse::<Schedule>().unwrap(),
            Schedule::CrossTime { folds: 4 }
        );
        assert!("crosstime:1".parse::<Schedule>().is_err());
        assert!("sequential:0".parse::<Schedule>().is_err());
        assert!("bootstrap".parse::<Schedule>().is_err());
    }
}
