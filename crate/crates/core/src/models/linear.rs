use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// Affine predictor `intercept + coef · x` for one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearArm {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl LinearArm {
    #[inline]
    pub fn predict(&self, context: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(context).map(|(b, x)| b * x).sum::<f64>()
    }
}

/// Running weighted means and centered co-moments (West's update), enough to
/// solve weighted least squares with an unpenalized intercept.
#[derive(Debug, Clone)]
pub(crate) struct LinearAccumulator {
    dim: usize,
    weight: f64,
    mean_x: Vec<f64>,
    mean_y: f64,
    cxx: Vec<f64>,
    cxy: Vec<f64>,
    scratch: Vec<f64>,
}

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-10;

impl LinearAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            weight: 0.0,
            mean_x: vec![0.0; dim],
            mean_y: 0.0,
            cxx: vec![0.0; dim * dim],
            cxy: vec![0.0; dim],
            scratch: vec![0.0; dim],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.weight == 0.0
    }

    pub fn push(&mut self, x: &[f64], y: f64, w: f64) {
        let total = self.weight + w;
        let r = w / total;
        let f = w * (1.0 - r);
        let dy = y - self.mean_y;
        for i in 0..self.dim {
            self.scratch[i] = x[i] - self.mean_x[i];
            self.mean_x[i] += self.scratch[i] * r;
        }
        self.mean_y += dy * r;
        for i in 0..self.dim {
            let fi = f * self.scratch[i];
            for j in 0..self.dim {
                self.cxx[i * self.dim + j] += fi * self.scratch[j];
            }
            self.cxy[i] += fi * dy;
        }
        self.weight = total;
    }

    /// Minimum-norm slope solution of the centered normal equations.
    pub fn solve(&self) -> LinearArm {
        let d = self.dim;
        if d == 0 {
            return LinearArm {
                intercept: self.mean_y,
                coef: Vec::new(),
            };
        }
        let c = DMatrix::from_row_slice(d, d, &self.cxx);
        let eig = SymmetricEigen::new(c);
        let lmax = eig.eigenvalues.iter().fold(0.0_f64, |m, &v| m.max(v));
        let rhs = DVector::from_column_slice(&self.cxy);
        let mut beta = DVector::zeros(d);
        if lmax > 0.0 {
            for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
                if lambda > lmax * RANK_TOL {
                    let v = eig.eigenvectors.column(k);
                    beta += v * (v.dot(&rhs) / lambda);
                }
            }
        }
        let coef: Vec<f64> = beta.iter().copied().collect();
        let intercept = self.mean_y - coef.iter().zip(&self.mean_x).map(|(b, m)| b * m).sum::<f64>();
        LinearArm { intercept, coef }
    }
}
