use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::policy::argmax_lowest;
use crate::error::{OpeError, Result};
use crate::models::OutcomeModelSnapshot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Policy,
    Contrast,
    Subgroup,
}

/// The fixed, bounded weight function `g*(a|x)` that defines the estimand.
#[derive(Debug, Clone)]
pub enum TargetFunctional {
    /// Always pull `arm`.
    Arm {
        arm: usize,
        arms: usize,
    },
    Uniform {
        arms: usize,
    },
    /// Non-contextual weights per arm (policy when nonnegative and normalized).
    Weights {
        weights: Vec<f64>,
    },
    /// Deterministic greedy policy of a frozen outcome model, ties to the lowest arm.
    Greedy {
        model: Arc<OutcomeModelSnapshot>,
        arms: usize,
    },
    /// `1{a = plus} - 1{a = minus}`.
    Contrast {
        plus: usize,
        minus: usize,
        arms: usize,
    },
    /// `inner(a|x) * 1{x[feature] > threshold}`.
    Subgroup {
        inner: Box<TargetFunctional>,
        feature: usize,
        threshold: f64,
    },
    /// Per-context table, matched exactly, with a default row.
    Lookup {
        entries: Vec<(Vec<f64>, Vec<f64>)>,
        default: Vec<f64>,
    },
}

impl TargetFunctional {
    pub fn arm(arm: usize, arms: usize) -> Result<Self> {
        if arm == 0 || arm > arms {
            return Err(OpeError::Invalid(format!("target arm {arm} outside 1..={arms}")));
        }
        Ok(TargetFunctional::Arm { arm, arms })
    }

    pub fn contrast(plus: usize, minus: usize, arms: usize) -> Result<Self> {
        for a in [plus, minus] {
            if a == 0 || a > arms {
                return Err(OpeError::Invalid(format!("contrast arm {a} outside 1..={arms}")));
            }
        }
        Ok(TargetFunctional::Contrast { plus, minus, arms })
    }

    pub fn arms(&self) -> usize {
        match self {
            TargetFunctional::Arm { arms, .. }
            | TargetFunctional::Uniform { arms }
            | TargetFunctional::Greedy { arms, .. }
            | TargetFunctional::Contrast { arms, .. } => *arms,
            TargetFunctional::Weights { weights } => weights.len(),
            TargetFunctional::Subgroup { inner, .. } => inner.arms(),
            TargetFunctional::Lookup { default, .. } => default.len(),
        }
    }

    pub fn kind(&self) -> TargetKind {
        match self {
            TargetFunctional::Contrast { .. } => TargetKind::Contrast,
            TargetFunctional::Subgroup { .. } => TargetKind::Subgroup,
            TargetFunctional::Weights { weights } if !is_distribution(weights) => TargetKind::Contrast,
            TargetFunctional::Lookup { entries, default }
                if !is_distribution(default) || entries.iter().any(|(_, w)| !is_distribution(w)) =>
            {
                TargetKind::Contrast
            }
            _ => TargetKind::Policy,
        }
    }

    /// Uniform bound on `|g*(a|x)|`.
    pub fn bound(&self) -> f64 {
        match self {
            TargetFunctional::Weights { weights } => max_abs(weights),
            TargetFunctional::Subgroup { inner, .. } => inner.bound(),
            TargetFunctional::Lookup { entries, default } => {
                entries.iter().map(|(_, w)| max_abs(w)).fold(max_abs(default), f64::max)
            }
            _ => 1.0,
        }
    }

    /// Writes `g*(a|x)` for `a = 1..=K` into `out[0..K]`.
    pub fn weights(&self, context: &[f64], out: &mut [f64]) {
        let k = self.arms();
        let out = &mut out[..k];
        match self {
            TargetFunctional::Arm { arm, .. } => {
                out.fill(0.0);
                out[arm - 1] = 1.0;
            }
            TargetFunctional::Uniform { arms } => out.fill(1.0 / *arms as f64),
            TargetFunctional::Weights { weights } => out.copy_from_slice(weights),
            TargetFunctional::Greedy { model, .. } => {
                model.predict_all(context, out);
                let best = argmax_lowest(out);
                out.fill(0.0);
                out[best] = 1.0;
            }
            TargetFunctional::Contrast { plus, minus, .. } => {
                out.fill(0.0);
                out[plus - 1] += 1.0;
                out[minus - 1] -= 1.0;
            }
            TargetFunctional::Subgroup {
                inner,
                feature,
                threshold,
            } => {
                if context.get(*feature).is_some_and(|v| v > threshold) {
                    inner.weights(context, out);
                } else {
                    out.fill(0.0);
                }
            }
            TargetFunctional::Lookup { entries, default } => {
                let row = entries
                    .iter()
                    .find(|(x, _)| x.as_slice() == context)
                    .map(|(_, w)| w)
                    .unwrap_or(default);
                out.copy_from_slice(row);
            }
        }
    }

    pub fn weight(&self, arm: usize, context: &[f64]) -> f64 {
        match self {
            TargetFunctional::Arm { arm: k, .. } => f64::from(u8::from(arm == *k)),
            TargetFunctional::Uniform { arms } => {
                if (1..=*arms).contains(&arm) {
                    1.0 / *arms as f64
                } else {
                    0.0
                }
            }
            _ => {
                let mut w = vec![0.0; self.arms()];
                self.weights(context, &mut w);
                w.get(arm.wrapping_sub(1)).copied().unwrap_or(0.0)
            }
        }
    }
}

impl fmt::Display for TargetFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetFunctional::Arm { arm, .. } => write!(f, "arm:{arm}"),
            TargetFunctional::Uniform { .. } => write!(f, "uniform"),
            TargetFunctional::Weights { .. } => write!(f, "weights"),
            TargetFunctional::Greedy { model, .. } => write!(f, "learned:{}", model.engine_name()),
            TargetFunctional::Contrast { plus, minus, .. } => write!(f, "contrast:{plus},{minus}"),
            TargetFunctional::Subgroup {
                inner,
                feature,
                threshold,
            } => write!(f, "subgroup:{inner}|x{}>{threshold}", feature + 1),
            TargetFunctional::Lookup { .. } => write!(f, "lookup"),
        }
    }
}

fn is_distribution(w: &[f64]) -> bool {
    w.iter().all(|&v| v >= 0.0) && (w.iter().sum::<f64>() - 1.0).abs() <= 1e-9
}

fn max_abs(w: &[f64]) -> f64 {
    w.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}
