use super::dprime::RoundTerms;
use super::{interval, weighted_mean, EstimatorConfig};
use crate::bandit::{Diagnostics, EstimateReport, EstimatorKind, LoggedDataset, TargetFunctional};
use crate::error::{OpeError, Result};
use crate::models::{predict_rounds, RoundPredictions};

/// DM, IPW, DR, MRDR or ADR with its plug-in interval.
pub fn baseline_estimate(
    ds: &LoggedDataset,
    gstar: &TargetFunctional,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    ds.ensure_valid()?;
    let preds = match cfg.training_for_kind() {
        Some(training) => predict_rounds(ds, &training, gstar)?,
        None => RoundPredictions::zeros(ds.len(), ds.arms()),
    };
    baseline_estimate_with(ds, gstar, cfg, &preds)
}

/// Baseline with outcome-model predictions supplied by the caller. IPW ignores them.
pub fn baseline_estimate_with(
    ds: &LoggedDataset,
    gstar: &TargetFunctional,
    cfg: &EstimatorConfig,
    preds: &RoundPredictions,
) -> Result<EstimateReport> {
    cfg.check()?;
    if cfg.kind.is_stabilized() {
        return Err(OpeError::Config(format!("{} is not a baseline estimator", cfg.kind)));
    }
    if ds.is_empty() {
        return Err(OpeError::Empty("dataset"));
    }
    let zeros;
    let preds = if cfg.kind == EstimatorKind::Ipw {
        zeros = RoundPredictions::zeros(ds.len(), ds.arms());
        &zeros
    } else {
        preds
    };
    let terms = RoundTerms::new(ds, preds, gstar)?;
    let logged = ds.logged_propensities();
    let rounds = ds.len();

    let mut w = Vec::with_capacity(rounds);
    let mut score = Vec::with_capacity(rounds);
    for t in 1..=rounds {
        let g = logged[t - 1];
        if !(g > 0.0) {
            return Err(OpeError::NonPositivePropensity { round: t, value: g });
        }
        let i = t - 1;
        let omega = match cfg.kind {
            EstimatorKind::Dm => 0.0,
            _ => terms.gstar_obs[i] / g,
        };
        w.push(match cfg.kind {
            EstimatorKind::Adr => g.powf(-0.5),
            _ => 1.0,
        });
        score.push(omega * terms.residual[i] + terms.dm[i]);
    }

    let (psi_hat, se) = weighted_mean(&score, &w);
    let (ci_lo, ci_hi) = interval(psi_hat, se, cfg.alpha)?;
    Ok(EstimateReport {
        estimator: cfg.kind,
        psi_hat,
        scale: se * (rounds as f64).sqrt(),
        ci_lo,
        ci_hi,
        alpha: cfg.alpha,
        rounds,
        diagnostics: Diagnostics::baseline(cfg.refit_every()),
    })
}
