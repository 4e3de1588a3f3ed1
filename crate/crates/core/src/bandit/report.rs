use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::OpeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Dm,
    Ipw,
    Dr,
    Mrdr,
    Adr,
    Cadr,
    Camrdr,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 7] = [
        EstimatorKind::Dm,
        EstimatorKind::Ipw,
        EstimatorKind::Dr,
        EstimatorKind::Mrdr,
        EstimatorKind::Adr,
        EstimatorKind::Cadr,
        EstimatorKind::Camrdr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Dm => "dm",
            EstimatorKind::Ipw => "ipw",
            EstimatorKind::Dr => "dr",
            EstimatorKind::Mrdr => "mrdr",
            EstimatorKind::Adr => "adr",
            EstimatorKind::Cadr => "cadr",
            EstimatorKind::Camrdr => "camrdr",
        }
    }

    /// CADR-family estimators weight by the inverse estimated conditional standard deviation.
    pub fn is_stabilized(self) -> bool {
        matches!(self, EstimatorKind::Cadr | EstimatorKind::Camrdr)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = OpeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| OpeError::Config(format!("unknown estimator `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Rounds where the variance floor replaced the raw estimate.
    pub floor_hits: usize,
    pub sigma_min: Option<f64>,
    pub sigma_max: Option<f64>,
    pub burn_in: Option<usize>,
    /// Outcome-model refit period; values above 1 deviate from refitting every round.
    pub refit_every: Option<usize>,
}

impl Diagnostics {
    pub fn baseline(refit_every: Option<usize>) -> Self {
        Self {
            floor_hits: 0,
            sigma_min: None,
            sigma_max: None,
            burn_in: None,
            refit_every,
        }
    }
}

/// Point estimate and confidence interval from one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: EstimatorKind,
    pub psi_hat: f64,
    /// Standard-error scale: the interval half-width is `z * scale / sqrt(T)`.
    pub scale: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub alpha: f64,
    #[serde(rename = "T")]
    pub rounds: usize,
    pub diagnostics: Diagnostics,
}

impl EstimateReport {
    pub fn width(&self) -> f64 {
        self.ci_hi - self.ci_lo
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_lo <= value && value <= self.ci_hi
    }
}
