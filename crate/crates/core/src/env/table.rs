use std::io::Read;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::rng::{standard_normal, stream_rng, SimRng, Stream};
use super::RewardEnvironment;
use crate::bandit::TargetFunctional;
use crate::error::{OpeError, Result};

/// A labelled classification dataset, turned into a bandit by rewarding the
/// arm that matches the label: `Y ~ N(1{A = L}, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationTable {
    contexts: Vec<Vec<f64>>,
    labels: Vec<usize>,
    arms: usize,
    dim: usize,
}

/// Recipe for a Gaussian-cluster classification table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTableSpec {
    pub rows: usize,
    pub features: usize,
    pub classes: usize,
    /// Standard deviation of the class centers; features get unit noise around them.
    #[serde(default = "default_separation")]
    pub separation: f64,
    pub seed: u64,
}

fn default_separation() -> f64 {
    1.0
}

impl ClassificationTable {
    pub fn new(rows: Vec<(Vec<f64>, usize)>, arms: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(OpeError::Empty("classification table"));
        }
        let dim = rows[0].0.len();
        for (i, (x, l)) in rows.iter().enumerate() {
            if x.len() != dim {
                return Err(OpeError::Data(format!("row {}: expected {dim} features", i + 1)));
            }
            if *l == 0 || *l > arms {
                return Err(OpeError::Data(format!("row {}: label {l} outside 1..={arms}", i + 1)));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(OpeError::Data(format!("row {}: non-finite feature", i + 1)));
            }
        }
        let (contexts, labels) = rows.into_iter().unzip();
        Ok(Self {
            contexts,
            labels,
            arms,
            dim,
        })
    }

    /// Reads `x1,...,xd,label`. `K` is the largest label.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let n = headers.len();
        if n < 1 || headers.get(n - 1) != Some("label") {
            return Err(OpeError::Data("table header must be `x1,...,xd,label`".into()));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != n {
                return Err(OpeError::Data(format!("line {line}: expected {n} fields")));
            }
            let x = (0..n - 1)
                .map(|j| {
                    rec[j]
                        .parse::<f64>()
                        .map_err(|_| OpeError::Data(format!("line {line}: bad feature `{}`", &rec[j])))
                })
                .collect::<Result<Vec<_>>>()?;
            let label = rec[n - 1]
                .parse::<usize>()
                .map_err(|_| OpeError::Data(format!("line {line}: bad label `{}`", &rec[n - 1])))?;
            rows.push((x, label));
        }
        let arms = rows.iter().map(|r| r.1).max().unwrap_or(0);
        Self::new(rows, arms)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.dim).map(|j| format!("x{j}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for (x, l) in self.contexts.iter().zip(&self.labels) {
            let mut rec: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            rec.push(l.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Gaussian clusters: class centers drawn `N(0, separation^2)` per feature,
    /// rows cycle through the labels and add unit noise.
    pub fn synthetic(spec: &SyntheticTableSpec) -> Result<Self> {
        if spec.rows == 0 || spec.classes == 0 || spec.features == 0 {
            return Err(OpeError::Config(
                "synthetic table needs rows, features and classes".into(),
            ));
        }
        let mut rng = stream_rng(spec.seed, Stream::Table);
        let centers: Vec<Vec<f64>> = (0..spec.classes)
            .map(|_| {
                (0..spec.features)
                    .map(|_| spec.separation * standard_normal(&mut rng))
                    .collect()
            })
            .collect();
        let rows = (0..spec.rows)
            .map(|i| {
                let label = i % spec.classes;
                let x = centers[label].iter().map(|c| c + standard_normal(&mut rng)).collect();
                (x, label + 1)
            })
            .collect();
        Self::new(rows, spec.classes)
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn contexts(&self) -> &[Vec<f64>] {
        &self.contexts
    }
}

impl RewardEnvironment for ClassificationTable {
    fn arms(&self) -> usize {
        self.arms
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn draw_context(&self, rng: &mut SimRng) -> usize {
        // Lemire's unbiased bounded draw.
        let n = self.labels.len() as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (rng.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    fn context(&self, index: usize) -> &[f64] {
        &self.contexts[index]
    }

    fn draw_reward(&self, index: usize, arm: usize, rng: &mut SimRng) -> f64 {
        let mean = f64::from(u8::from(arm == self.labels[index]));
        mean + standard_normal(rng)
    }

    /// `|rows|^-1 sum_i g*(L_i | x_i)`: the mean reward is the label indicator.
    fn policy_value(&self, gstar: &TargetFunctional) -> f64 {
        let total: f64 = self
            .contexts
            .iter()
            .zip(&self.labels)
            .map(|(x, &l)| gstar.weight(l, x))
            .sum();
        total / self.rows() as f64
    }
}
