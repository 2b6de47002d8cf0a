//! Statistical primitives: seeded streams, dense factorizations, variate
//! generators, principal components and regression fits.

mod linalg;
mod pca;
mod regression;
mod rng;
mod samplers;
pub mod special;

use thiserror::Error;

pub use linalg::{max_asymmetry, min_eigenvalue, symmetrize, CholeskyFactor};
pub use pca::{first_principal_component, PrincipalComponent};
pub use regression::{fit_linear_regression, fit_logistic_regression, RegressionFit};
pub use rng::{RngState, RngStream};
pub use samplers::{
    normal_logpdf, normal_pdf, sample_inverse_gamma, sample_inverse_wishart, sample_mvn, sample_mvn_canonical,
    sample_mvn_chol, sample_truncated_normal_upper,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("inverse-Wishart degrees of freedom {df} must exceed dimension - 1 (dimension {dim})")]
    InvalidDf { df: f64, dim: usize },
    #[error("variance must be positive, got {0}")]
    NonpositiveVariance(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("quasi-complete separation in logistic regression")]
    Separation,
    #[error("logistic response contains a single class")]
    SingleClass,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// One-sample Kolmogorov–Smirnov statistic against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    })
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Arithmetic mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Type-7 (linear interpolation) quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty sample");
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Type-7 quantiles of an unsorted sample.
pub fn quantiles(xs: &[f64], ps: &[f64]) -> Vec<f64> {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    ps.iter().map(|&p| quantile_sorted(&s, p)).collect()
}

pub fn median(xs: &[f64]) -> f64 {
    quantiles(xs, &[0.5])[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_of_exact_grid_is_small() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_statistic(&xs, |x| x) <= 0.0005 + 1e-12);
    }

    #[test]
    fn type7_quantiles() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(median(&xs), 50.5);
        assert_eq!(quantiles(&xs, &[0.0, 1.0]), vec![1.0, 100.0]);
        assert!((quantiles(&xs, &[0.05])[0] - 5.95).abs() < 1e-12);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn two_sample_identical_is_zero() {
        let xs = [0.3, 0.1, 0.8];
        assert_eq!(ks_two_sample(&xs, &xs), 0.0);
    }
}
