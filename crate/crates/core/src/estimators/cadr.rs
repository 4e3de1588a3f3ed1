use rayon::prelude::*;

use super::dprime::RoundTerms;
use super::{interval, stabilized_mean, EstimatorConfig};
use crate::bandit::{Diagnostics, EstimateReport, LoggedDataset, TargetFunctional};
use crate::error::{OpeError, Result};
use crate::models::{predict_rounds, RoundPredictions};
use crate::numeric::{csum, CompensatedSum};

/// Estimated conditional standard deviations of the score, one per round.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSeries {
    pub sigma_hat: Vec<f64>,
    /// Rounds where the raw variance estimate fell below the floor.
    pub floor_hits: usize,
    /// `(T^-1 sum_t 1/sigma_t)^-1`.
    pub gamma_t: f64,
    pub burn_in: usize,
}

impl SigmaSeries {
    fn from_sigmas(sigma_hat: Vec<f64>, floor_hits: usize, burn_in: usize) -> Self {
        let n = sigma_hat.len() as f64;
        let gamma_t = n / csum(sigma_hat.iter().map(|s| 1.0 / s));
        Self {
            sigma_hat,
            floor_hits,
            gamma_t,
            burn_in,
        }
    }

    pub fn min(&self) -> f64 {
        self.sigma_hat.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.sigma_hat.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Ratio `g_t/g_s` and score `D'(g_t, Q_{s-1})(O(s))` for each past round `s < t`.
fn past_terms(ds: &LoggedDataset, terms: &RoundTerms, t: usize) -> Result<Vec<(f64, f64)>> {
    let row = ds.cross_row(t)?;
    let logged = ds.logged_propensities();
    row.iter()
        .enumerate()
        .map(|(i, &g_t)| {
            let s = i + 1;
            if !(g_t > 0.0) {
                return Err(OpeError::NonPositivePropensity { round: t, value: g_t });
            }
            Ok((g_t / logged[i], terms.score(s, g_t)?.value))
        })
        .collect()
}

fn raw_variance(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let mut first = CompensatedSum::new();
    let mut second = CompensatedSum::new();
    for &(r, d) in pairs {
        first.add(r * d * d);
        second.add(r * d);
    }
    let mean_sq = first.value() / n;
    let mean = second.value() / n;
    mean_sq - mean * mean
}

/// Unfloored variance estimate at round `t >= 2` from rounds `1..t-1`.
pub fn cadr_raw_variance_at(
    ds: &LoggedDataset,
    preds: &RoundPredictions,
    gstar: &TargetFunctional,
    t: usize,
) -> Result<f64> {
    if t < 2 || t > ds.len() {
        return Err(OpeError::Invalid(format!(
            "variance estimate needs 2 <= t <= {}, got {t}",
            ds.len()
        )));
    }
    let terms = RoundTerms::new(ds, preds, gstar)?;
    Ok(raw_variance(&past_terms(ds, &terms, t)?))
}

pub fn cadr_sigma_series(
    ds: &LoggedDataset,
    preds: &RoundPredictions,
    gstar: &TargetFunctional,
    cfg: &EstimatorConfig,
) -> Result<SigmaSeries> {
    cfg.check()?;
    let terms = RoundTerms::new(ds, preds, gstar)?;
    sigma_series(ds, &terms, cfg)
}

fn sigma_series(ds: &LoggedDataset, terms: &RoundTerms, cfg: &EstimatorConfig) -> Result<SigmaSeries> {
    let burn_in = cfg.burn_in_for(ds.arms());
    let floor = cfg.variance_floor;
    let active: Vec<usize> = (burn_in.max(1) + 1..=ds.len()).collect();

    let raw: Vec<f64> = if cfg.materialize_dprime {
        let table = active
            .par_iter()
            .map(|&t| past_terms(ds, terms, t))
            .collect::<Result<Vec<_>>>()?;
        table.iter().map(|pairs| raw_variance(pairs)).collect()
    } else {
        active
            .par_iter()
            .map(|&t| past_terms(ds, terms, t).map(|pairs| raw_variance(&pairs)))
            .collect::<Result<Vec<_>>>()?
    };

    let mut sigma = vec![1.0; ds.len() - active.len()];
    let mut floor_hits = 0;
    for v in raw {
        if !(v >= floor) {
            floor_hits += 1;
        }
        sigma.push(v.max(floor).sqrt());
    }
    Ok(SigmaSeries::from_sigmas(sigma, floor_hits, burn_in))
}

/// CADR (or CAMRDR, depending on `cfg.kind`) from scratch.
pub fn cadr_estimate(ds: &LoggedDataset, gstar: &TargetFunctional, cfg: &EstimatorConfig) -> Result<EstimateReport> {
    ds.ensure_valid()?;
    let training = cfg
        .training_for_kind()
        .ok_or_else(|| OpeError::Config(format!("{} is not a stabilized estimator", cfg.kind)))?;
    let preds = predict_rounds(ds, &training, gstar)?;
    cadr_estimate_with(ds, gstar, cfg, &preds)
}

/// CADR with outcome-model predictions supplied by the caller.
pub fn cadr_estimate_with(
    ds: &LoggedDataset,
    gstar: &TargetFunctional,
    cfg: &EstimatorConfig,
    preds: &RoundPredictions,
) -> Result<EstimateReport> {
    cfg.check()?;
    if !cfg.kind.is_stabilized() {
        return Err(OpeError::Config(format!("{} is not a stabilized estimator", cfg.kind)));
    }
    if ds.is_empty() {
        return Err(OpeError::Empty("dataset"));
    }
    let terms = RoundTerms::new(ds, preds, gstar)?;
    let series = sigma_series(ds, &terms, cfg)?;
    let logged = ds.logged_propensities();
    let rounds = ds.len();
    let scores = (1..=rounds)
        .map(|t| Ok(terms.score(t, logged[t - 1])?.value))
        .collect::<Result<Vec<f64>>>()?;
    let (psi_hat, scale) = stabilized_mean(&scores, &series.sigma_hat);
    let (ci_lo, ci_hi) = interval(psi_hat, scale / (rounds as f64).sqrt(), cfg.alpha)?;
    Ok(EstimateReport {
        estimator: cfg.kind,
        psi_hat,
        scale,
        ci_lo,
        ci_hi,
        alpha: cfg.alpha,
        rounds,
        diagnostics: Diagnostics {
            floor_hits: series.floor_hits,
            sigma_min: Some(series.min()),
            sigma_max: Some(series.max()),
            burn_in: Some(series.burn_in),
            refit_every: cfg.refit_every(),
        },
    })
}
