//! Small numerical primitives: the standard normal quantile and compensated summation.

use crate::error::{OpeError, Result};

/// Inverse CDF of the standard normal distribution.
///
/// Wichura's AS 241 (PPND16) rational approximation, accurate to about 1e-16
/// relative error over the whole open unit interval.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(OpeError::Domain(format!("normal quantile requires 0 < p < 1, got {p}")));
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return Ok(q * horner(&CENTRAL_NUM, r) / horner(&CENTRAL_DEN, r));
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let r = (-tail.ln()).sqrt();
    let z = if r <= 5.0 {
        let r = r - 1.6;
        horner(&NEAR_NUM, r) / horner(&NEAR_DEN, r)
    } else {
        let r = r - 5.0;
        horner(&FAR_NUM, r) / horner(&FAR_DEN, r)
    };
    Ok(if q < 0.0 { -z } else { z })
}

// AS 241 coefficients, highest degree first.
const CENTRAL_NUM: [f64; 8] = [
    2509.080_928_730_122_7,
    33430.575_583_588_128,
    67265.770_927_008_7,
    45921.953_931_549_87,
    13731.693_765_509_461,
    1971.590_950_306_551_3,
    133.141_667_891_784_38,
    3.387_132_872_796_366_5,
];
const CENTRAL_DEN: [f64; 8] = [
    5226.495_278_852_545,
    28729.085_735_721_943,
    39307.895_800_092_71,
    21213.794_301_586_597,
    5394.196_021_424_751,
    687.187_007_492_057_9,
    42.313_330_701_600_91,
    1.0,
];
const NEAR_NUM: [f64; 8] = [
    7.745_450_142_783_414e-4,
    0.022_723_844_989_269_184,
    0.241_780_725_177_450_6,
    1.270_458_252_452_368_4,
    3.647_848_324_763_204_5,
    5.769_497_221_460_691,
    4.630_337_846_156_546,
    1.423_437_110_749_683_5,
];
const NEAR_DEN: [f64; 8] = [
    1.050_750_071_644_416_9e-9,
    5.475_938_084_995_345e-4,
    0.015_198_666_563_616_457,
    0.148_103_976_427_480_08,
    0.689_767_334_985_1,
    1.676_384_830_183_803_8,
    2.053_191_626_637_759,
    1.0,
];
const FAR_NUM: [f64; 8] = [
    2.010_334_399_292_288_1e-7,
    2.711_555_568_743_487_6e-5,
    0.001_242_660_947_388_078_4,
    0.026_532_189_526_576_124,
    0.296_560_571_828_504_9,
    1.784_826_539_917_291_3,
    5.463_784_911_164_114,
    6.657_904_643_501_103,
];
const FAR_DEN: [f64; 8] = [
    2.044_263_103_389_939_7e-15,
    1.421_511_758_316_446e-7,
    1.846_318_317_510_054_8e-5,
    7.868_691_311_456_133e-4,
    0.014_875_361_290_850_615,
    0.136_929_880_922_735_8,
    0.599_832_206_555_888,
    1.0,
];

fn horner(coef: &[f64], x: f64) -> f64 {
    coef.iter().fold(0.0, |acc, &c| acc * x + c)
}

/// Neumaier's improved Kahan summation.
///
/// Results are independent of magnitude ordering to within a few ulps of the
/// exactly rounded sum, which keeps long replications reproducible.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of an iterator.
pub fn csum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: Maclaurin series of erf, valid to ~1e-13 for |x| < 3.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut total = x;
        let x2 = x * x;
        for n in 1..200 {
            term *= -x2 / n as f64;
            let contrib = term / (2 * n + 1) as f64;
            total += contrib;
            if contrib.abs() < 1e-18 {
                break;
            }
        }
        total * 2.0 / std::f64::consts::PI.sqrt()
    }

    fn normal_cdf(z: f64) -> f64 {
        0.5 * (1.0 + erf_series(z / std::f64::consts::SQRT_2))
    }

    fn normal_pdf(z: f64) -> f64 {
        (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    /// Newton iteration on the series CDF, starting from 0.
    fn quantile_oracle(p: f64) -> f64 {
        let mut z = 0.0;
        for _ in 0..100 {
            let step = (normal_cdf(z) - p) / normal_pdf(z);
            z -= step;
            if step.abs() < 1e-14 {
                break;
            }
        }
        z
    }

    #[test]
    fn median_is_zero() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
    }

    #[test]
    fn familiar_two_sided_value() {
        let z = normal_quantile(0.975).unwrap();
        assert!((z - 1.96).abs() < 5e-3);
        assert!((z - 1.959_963_98).abs() < 1e-6);
    }

    #[test]
    fn matches_newton_oracle() {
        for &p in &[0.6, 0.8, 0.9, 0.95, 0.975, 0.99, 0.995, 0.999, 0.0013, 0.3] {
            let oracle = quantile_oracle(p);
            let z = normal_quantile(p).unwrap();
            assert!((z - oracle).abs() < 1e-8, "p={p}: {z} vs {oracle}");
        }
    }

    #[test]
    fn antisymmetric() {
        for &p in &[0.9, 0.95, 0.975, 0.995] {
            let s = normal_quantile(p).unwrap() + normal_quantile(1.0 - p).unwrap();
            assert!(s.abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_outside_unit_interval() {
        for &p in &[0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(normal_quantile(p), Err(OpeError::Domain(_))));
        }
    }

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(csum(xs), 2.0);
        assert_ne!(xs.iter().sum::<f64>(), 2.0);
    }
}
