//! The doubly-robust score, the CADR variance-stabilized estimator with its
//! confidence interval, and the baseline family (DM, IPW, DR, MRDR, ADR).

mod baseline;
mod cadr;
mod dprime;
mod oracle;

pub use baseline::{baseline_estimate, baseline_estimate_with};
pub use cadr::{cadr_estimate, cadr_estimate_with, cadr_raw_variance_at, cadr_sigma_series, SigmaSeries};
pub use dprime::{dprime, GradientTerm};
pub use oracle::{true_dprime_mean, true_dprime_variance};

use crate::bandit::{EstimateReport, EstimatorKind, LoggedDataset, TargetFunctional};
use crate::error::{OpeError, Result};
use crate::models::{RoundPredictions, SampleWeighting, Schedule, TrainingSchedule};
use crate::numeric::{csum, normal_quantile};

pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub alpha: f64,
    /// Lower bound applied to every estimated variance.
    pub variance_floor: f64,
    /// Rounds `t <= burn_in` use `sigma_t = 1` (so does `t = 1` always).
    /// `None` means `max(10, K + 1)`.
    pub burn_in: Option<usize>,
    pub training: TrainingSchedule,
    /// Build the full table of past scores before reducing (same values, more memory).
    pub materialize_dprime: bool,
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            alpha: 0.05,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            burn_in: None,
            training: TrainingSchedule::default(),
            materialize_dprime: false,
        }
    }

    pub fn with_training(mut self, training: TrainingSchedule) -> Self {
        self.training = training;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = Some(burn_in);
        self
    }

    pub fn check(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(OpeError::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.variance_floor > 0.0 && self.variance_floor.is_finite()) {
            return Err(OpeError::Config(format!(
                "variance floor must be positive, got {}",
                self.variance_floor
            )));
        }
        self.training.schedule.check()
    }

    pub fn burn_in_for(&self, arms: usize) -> usize {
        self.burn_in.unwrap_or(10.max(arms + 1))
    }

    /// The outcome-model training this estimator uses, or `None` when it needs
    /// no outcome model (IPW). MRDR and CAMRDR override the sample weighting.
    pub fn training_for_kind(&self) -> Option<TrainingSchedule> {
        let mut t = self.training.clone();
        match self.kind {
            EstimatorKind::Ipw => return None,
            EstimatorKind::Mrdr => t.weighting = SampleWeighting::Mrdr,
            EstimatorKind::Camrdr => t.weighting = SampleWeighting::ImportanceSampled { reference: None },
            _ => {}
        }
        Some(t)
    }

    pub(crate) fn refit_every(&self) -> Option<usize> {
        match (self.kind, self.training.schedule) {
            (EstimatorKind::Ipw, _) => None,
            (_, Schedule::Sequential { refit_every }) => Some(refit_every),
            (_, Schedule::CrossTime { .. }) => None,
        }
    }
}

/// Inverse-standard-deviation weighted mean of `scores`.
/// Returns `(psi_hat, gamma)` with `gamma = T / sum_t 1/sigma_t`.
pub fn stabilized_mean(scores: &[f64], sigma: &[f64]) -> (f64, f64) {
    let n = scores.len() as f64;
    let gamma = n / csum(sigma.iter().map(|s| 1.0 / s));
    let psi_hat = gamma / n * csum(scores.iter().zip(sigma).map(|(d, s)| d / s));
    (psi_hat, gamma)
}

/// `sum w d / sum w` with its plug-in standard error `sqrt(sum w^2 (d - psi)^2) / sum w`.
pub fn weighted_mean(scores: &[f64], weights: &[f64]) -> (f64, f64) {
    let w_sum = csum(weights.iter().copied());
    let psi_hat = csum(weights.iter().zip(scores).map(|(w, d)| w * d)) / w_sum;
    let spread = csum(
        weights
            .iter()
            .zip(scores)
            .map(|(w, d)| w * w * (d - psi_hat) * (d - psi_hat)),
    );
    (psi_hat, spread.sqrt() / w_sum)
}

/// `center ± z_{1-alpha/2} * half_scale`.
pub(crate) fn interval(center: f64, half_scale: f64, alpha: f64) -> Result<(f64, f64)> {
    let z = normal_quantile(1.0 - alpha / 2.0)?;
    Ok((center - z * half_scale, center + z * half_scale))
}

/// Runs whichever estimator `cfg.kind` names.
pub fn estimate(ds: &LoggedDataset, gstar: &TargetFunctional, cfg: &EstimatorConfig) -> Result<EstimateReport> {
    if cfg.kind.is_stabilized() {
        cadr_estimate(ds, gstar, cfg)
    } else {
        baseline_estimate(ds, gstar, cfg)
    }
}

/// Runs `cfg.kind` on precomputed outcome predictions (ignored by IPW).
pub fn estimate_with(
    ds: &LoggedDataset,
    gstar: &TargetFunctional,
    cfg: &EstimatorConfig,
    preds: &RoundPredictions,
) -> Result<EstimateReport> {
    if cfg.kind.is_stabilized() {
        cadr_estimate_with(ds, gstar, cfg, preds)
    } else {
        baseline_estimate_with(ds, gstar, cfg, preds)
    }
}
