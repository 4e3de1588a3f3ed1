use crate::bandit::{LoggedDataset, TargetFunctional};
use crate::error::{OpeError, Result};
use crate::models::{OutcomeModelSnapshot, RoundPredictions};

/// One evaluation of the doubly-robust score
/// `D'(g, Q)(x, a, y) = g*(a|x)/g(a|x) (y - Q(a, x)) + sum_a' Q(a', x) g*(a'|x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientTerm {
    pub value: f64,
    /// Importance-weighted residual.
    pub is_part: f64,
    /// Direct-method plug-in.
    pub dm_part: f64,
}

impl GradientTerm {
    /// Assembles the score from its precomputed pieces.
    #[inline]
    pub fn from_parts(gstar_at_arm: f64, g_eval: f64, residual: f64, dm_part: f64) -> Result<Self> {
        if !(g_eval > 0.0) {
            return Err(OpeError::Domain(format!(
                "propensity must be positive to evaluate the score, got {g_eval}"
            )));
        }
        let is_part = gstar_at_arm / g_eval * residual;
        Ok(Self {
            value: is_part + dm_part,
            is_part,
            dm_part,
        })
    }
}

pub fn dprime(
    context: &[f64],
    arm: usize,
    reward: f64,
    g_eval: f64,
    gstar: &TargetFunctional,
    qbar: &OutcomeModelSnapshot,
) -> Result<GradientTerm> {
    let k = gstar.arms();
    let mut w = vec![0.0; k];
    let mut q = vec![0.0; k];
    gstar.weights(context, &mut w);
    qbar.predict_all(context, &mut q);
    let dm: f64 = w.iter().zip(&q).map(|(a, b)| a * b).sum();
    let residual = reward - qbar.predict(arm, context);
    GradientTerm::from_parts(gstar.weight(arm, context), g_eval, residual, dm)
}

/// Target-dependent pieces of the score at each observed round, using the
/// round's own outcome model `Q_{s-1}`.
#[derive(Debug, Clone)]
pub(crate) struct RoundTerms {
    /// `g*(A(s)|X(s))`.
    pub gstar_obs: Vec<f64>,
    /// `Y(s) - Q_{s-1}(A(s), X(s))`.
    pub residual: Vec<f64>,
    /// `sum_a Q_{s-1}(a, X(s)) g*(a|X(s))`.
    pub dm: Vec<f64>,
}

impl RoundTerms {
    pub fn new(ds: &LoggedDataset, preds: &RoundPredictions, gstar: &TargetFunctional) -> Result<Self> {
        if preds.rounds() != ds.len() || preds.arms() != ds.arms() {
            return Err(OpeError::Invalid(format!(
                "outcome predictions cover {} rounds x {} arms, dataset has {} x {}",
                preds.rounds(),
                preds.arms(),
                ds.len(),
                ds.arms()
            )));
        }
        if gstar.arms() != ds.arms() {
            return Err(OpeError::Invalid(format!(
                "target defined over {} arms, dataset has {}",
                gstar.arms(),
                ds.arms()
            )));
        }
        let n = ds.len();
        let mut out = Self {
            gstar_obs: Vec::with_capacity(n),
            residual: Vec::with_capacity(n),
            dm: Vec::with_capacity(n),
        };
        let mut w = vec![0.0; ds.arms()];
        for (i, o) in ds.observations().iter().enumerate() {
            let q = preds.row(i + 1);
            gstar.weights(&o.context, &mut w);
            out.gstar_obs.push(w[o.arm - 1]);
            out.residual.push(o.reward - q[o.arm - 1]);
            out.dm.push(w.iter().zip(q).map(|(a, b)| a * b).sum());
        }
        Ok(out)
    }

    /// `D'(g, Q_{s-1})(O(s))` with `g(A(s)|X(s)) = g_eval`.
    #[inline]
    pub fn score(&self, s: usize, g_eval: f64) -> Result<GradientTerm> {
        let i = s - 1;
        GradientTerm::from_parts(self.gstar_obs[i], g_eval, self.residual[i], self.dm[i])
    }
}
