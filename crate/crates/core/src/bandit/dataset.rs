use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::policy::PolicySnapshot;
use crate::error::{OpeError, Result};

/// One logged round `(t, X(t), A(t), Y(t))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// 1-based round index.
    pub round: usize,
    pub context: Vec<f64>,
    /// 1-based arm.
    pub arm: usize,
    pub reward: f64,
}

/// Packed lower triangle of `g_t(A(s)|X(s))` for `1 <= s <= t <= T`.
/// Missing entries are stored as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossPropensityMatrix {
    rounds: usize,
    values: Vec<f64>,
}

#[inline]
fn tri_index(t: usize, s: usize) -> usize {
    (t - 1) * t / 2 + (s - 1)
}

impl CrossPropensityMatrix {
    pub fn empty(rounds: usize) -> Self {
        Self {
            rounds,
            values: vec![f64::NAN; rounds * (rounds + 1) / 2],
        }
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn set(&mut self, t: usize, s: usize, value: f64) -> Result<()> {
        if s == 0 || s > t || t > self.rounds {
            return Err(OpeError::Data(format!(
                "cross-propensity index (t={t}, s={s}) outside 1 <= s <= t <= {}",
                self.rounds
            )));
        }
        self.values[tri_index(t, s)] = value;
        Ok(())
    }

    pub fn get(&self, t: usize, s: usize) -> Option<f64> {
        if s == 0 || s > t || t > self.rounds {
            return None;
        }
        let v = self.values[tri_index(t, s)];
        (!v.is_nan()).then_some(v)
    }

    /// `g_t(A(s)|X(s))` for `s = 1..=t`, NaN where missing.
    pub fn row(&self, t: usize) -> &[f64] {
        let start = tri_index(t, 1);
        &self.values[start..start + t]
    }

    fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let rounds = rows.len();
        let mut values = Vec::with_capacity(rounds * (rounds + 1) / 2);
        for row in rows {
            values.extend(row);
        }
        Self { rounds, values }
    }
}

/// How the logging policies are known.
#[derive(Debug, Clone)]
pub enum PolicyRecord {
    /// One replayable policy per round.
    Snapshots(Vec<PolicySnapshot>),
    /// Cross-propensities evaluated at every past point.
    Matrix(CrossPropensityMatrix),
}

/// An immutable adaptively collected dataset together with its logging policies.
#[derive(Debug, Clone)]
pub struct LoggedDataset {
    arms: usize,
    dim: usize,
    observations: Vec<Observation>,
    /// `g_t(A(t)|X(t))`.
    logged: Vec<f64>,
    policies: PolicyRecord,
}

impl LoggedDataset {
    /// Builds a dataset from per-round policy snapshots; logged propensities
    /// are read off the snapshots.
    pub fn from_snapshots(
        arms: usize,
        dim: usize,
        observations: Vec<Observation>,
        snapshots: Vec<PolicySnapshot>,
    ) -> Self {
        let logged = observations
            .iter()
            .zip(&snapshots)
            .map(|(o, p)| p.propensity(o.arm, &o.context))
            .collect();
        Self {
            arms,
            dim,
            observations,
            logged,
            policies: PolicyRecord::Snapshots(snapshots),
        }
    }

    pub fn from_matrix(
        arms: usize,
        dim: usize,
        observations: Vec<Observation>,
        logged: Vec<f64>,
        matrix: CrossPropensityMatrix,
    ) -> Self {
        Self {
            arms,
            dim,
            observations,
            logged,
            policies: PolicyRecord::Matrix(matrix),
        }
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of rounds `T`.
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    /// Observation at 1-based round `t`.
    pub fn observation(&self, t: usize) -> &Observation {
        &self.observations[t - 1]
    }

    /// Logged propensities `g_t(A(t)|X(t))`, indexed from round 1 at position 0.
    pub fn logged_propensities(&self) -> &[f64] {
        &self.logged
    }

    pub fn policies(&self) -> &PolicyRecord {
        &self.policies
    }

    pub fn snapshots(&self) -> Option<&[PolicySnapshot]> {
        match &self.policies {
            PolicyRecord::Snapshots(s) => Some(s),
            PolicyRecord::Matrix(_) => None,
        }
    }

    /// `g_t(A(s)|X(s))` for `1 <= s <= t`.
    pub fn cross_propensity(&self, t: usize, s: usize) -> Result<f64> {
        if s == 0 || s > t || t > self.len() {
            return Err(OpeError::MissingCrossPropensity { t, s });
        }
        match &self.policies {
            PolicyRecord::Snapshots(snaps) => {
                let o = self.observation(s);
                Ok(snaps[t - 1].propensity(o.arm, &o.context))
            }
            PolicyRecord::Matrix(m) => m.get(t, s).ok_or(OpeError::MissingCrossPropensity { t, s }),
        }
    }

    /// `g_t(A(s)|X(s))` for `s = 1..t-1` (the strictly past points).
    pub fn cross_row(&self, t: usize) -> Result<Vec<f64>> {
        match &self.policies {
            PolicyRecord::Snapshots(snaps) => {
                let policy = &snaps[t - 1].policy;
                let mut out = Vec::with_capacity(t.saturating_sub(1));
                let mut buf = vec![0.0; self.arms];
                for o in &self.observations[..t - 1] {
                    policy.propensities(&o.context, &mut buf);
                    out.push(buf[o.arm - 1]);
                }
                Ok(out)
            }
            PolicyRecord::Matrix(m) => {
                let row = &m.row(t)[..t - 1];
                if let Some(s) = row.iter().position(|v| v.is_nan()) {
                    return Err(OpeError::MissingCrossPropensity { t, s: s + 1 });
                }
                Ok(row.to_vec())
            }
        }
    }

    /// Evaluates every snapshot at every past point, producing the matrix form.
    pub fn cross_matrix(&self) -> Result<CrossPropensityMatrix> {
        match &self.policies {
            PolicyRecord::Matrix(m) => Ok(m.clone()),
            PolicyRecord::Snapshots(_) => {
                let rows = (1..=self.len())
                    .into_par_iter()
                    .map(|t| {
                        let mut row = self.cross_row(t)?;
                        row.push(self.logged[t - 1]);
                        Ok(row)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(CrossPropensityMatrix::from_rows(rows))
            }
        }
    }

    /// Same data with the policy snapshots replaced by their cross-propensity matrix.
    pub fn into_matrix_form(self) -> Result<Self> {
        let matrix = self.cross_matrix()?;
        Ok(Self {
            policies: PolicyRecord::Matrix(matrix),
            ..self
        })
    }

    /// Returns a data error listing the violations, if any.
    pub fn ensure_valid(&self) -> Result<()> {
        let v = validate_dataset(self);
        if v.is_empty() {
            Ok(())
        } else {
            let shown: Vec<String> = v.iter().take(5).map(|x| x.to_string()).collect();
            Err(OpeError::Data(format!(
                "{} invariant violation(s): {}",
                v.len(),
                shown.join("; ")
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    RoundOrder,
    ArmRange,
    ContextDim,
    NonFinite,
    PositivePropensity,
    PolicyCount,
    PropensitySum,
    PropensityFloor,
    MissingCrossPropensity,
    PositiveCrossPropensity,
    DiagonalMismatch,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok();
        write!(f, "{}", s.as_ref().and_then(|v| v.as_str()).unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Offending 1-based round, when the rule is tied to one.
    pub round: Option<usize>,
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.round {
            Some(t) => write!(f, "round {t}: {} ({})", self.rule, self.detail),
            None => write!(f, "{} ({})", self.rule, self.detail),
        }
    }
}

/// Checks every dataset invariant and returns one record per failure.
pub fn validate_dataset(ds: &LoggedDataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |round: Option<usize>, rule: Rule, detail: String| out.push(Violation { round, rule, detail });

    let t_len = ds.len();
    let n_policies = match &ds.policies {
        PolicyRecord::Snapshots(s) => s.len(),
        PolicyRecord::Matrix(m) => m.rounds(),
    };
    if n_policies != t_len || ds.logged.len() != t_len {
        push(
            None,
            Rule::PolicyCount,
            format!(
                "{t_len} observations, {n_policies} policies, {} logged propensities",
                ds.logged.len()
            ),
        );
    }

    for (i, o) in ds.observations.iter().enumerate() {
        let t = i + 1;
        if o.round != t {
            push(
                Some(t),
                Rule::RoundOrder,
                format!("expected round {t}, found {}", o.round),
            );
        }
        if o.arm == 0 || o.arm > ds.arms {
            push(
                Some(t),
                Rule::ArmRange,
                format!("arm {} outside 1..={}", o.arm, ds.arms),
            );
        }
        if o.context.len() != ds.dim {
            push(
                Some(t),
                Rule::ContextDim,
                format!("context length {} != {}", o.context.len(), ds.dim),
            );
        }
        if !o.reward.is_finite() || o.context.iter().any(|v| !v.is_finite()) {
            push(Some(t), Rule::NonFinite, "non-finite reward or context".into());
        }
        if let Some(&g) = ds.logged.get(i) {
            if !(g > 0.0 && g <= 1.0) {
                push(Some(t), Rule::PositivePropensity, format!("logged propensity {g}"));
            }
        }
    }

    match &ds.policies {
        PolicyRecord::Snapshots(snaps) => {
            for (i, (snap, o)) in snaps.iter().zip(&ds.observations).enumerate() {
                let t = i + 1;
                if snap.policy.arms() != ds.arms || o.context.len() != ds.dim {
                    continue;
                }
                if let Err(msg) = snap.check(&o.context) {
                    let rule = if msg.contains("sum") {
                        Rule::PropensitySum
                    } else {
                        Rule::PropensityFloor
                    };
                    push(Some(t), rule, msg);
                }
            }
        }
        PolicyRecord::Matrix(m) => {
            for t in 1..=m.rounds().min(t_len) {
                let row = m.row(t);
                for (j, &v) in row.iter().enumerate() {
                    let s = j + 1;
                    if v.is_nan() {
                        push(Some(t), Rule::MissingCrossPropensity, format!("missing g_{t} at s={s}"));
                        break;
                    }
                    if !(v > 0.0 && v <= 1.0) {
                        push(
                            Some(t),
                            Rule::PositiveCrossPropensity,
                            format!("g_{t}(A({s})|X({s})) = {v}"),
                        );
                        break;
                    }
                }
                if let (Some(&diag), Some(&g)) = (row.last(), ds.logged.get(t - 1)) {
                    if !diag.is_nan() && (diag - g).abs() > 1e-9 {
                        push(
                            Some(t),
                            Rule::DiagonalMismatch,
                            format!("diagonal {diag} != logged {g}"),
                        );
                    }
                }
            }
        }
    }
    out
}
