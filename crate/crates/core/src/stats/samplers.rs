//! Random variate generators for the conjugate updates.

use nalgebra::{DMatrix, DVector};

use super::linalg::{symmetrize, CholeskyFactor};
use super::special::{inv_norm_cdf, norm_cdf, LN_SQRT_2PI};
use super::{RngStream, StatsError};

/// Standardized truncation point below which the exponential-rejection
/// sampler replaces inverse-CDF.
const DEEP_TAIL: f64 = -4.0;

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> Result<f64, StatsError> {
    Ok(normal_logpdf(x, mean, var)?.exp())
}

pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> Result<f64, StatsError> {
    if !(var > 0.0) {
        return Err(StatsError::NonpositiveVariance(var));
    }
    let r = x - mean;
    Ok(-LN_SQRT_2PI - 0.5 * var.ln() - 0.5 * r * r / var)
}

/// `mean + L z` with `z` i.i.d. standard normal.
pub fn sample_mvn(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut RngStream) -> Result<DVector<f64>, StatsError> {
    let chol = CholeskyFactor::new(cov)?;
    Ok(sample_mvn_chol(mean, &chol, rng))
}

pub fn sample_mvn_chol(mean: &DVector<f64>, chol: &CholeskyFactor, rng: &mut RngStream) -> DVector<f64> {
    let z = DVector::from_fn(mean.len(), |_, _| rng.normal());
    mean + chol.mul_l(&z)
}

/// Draw from `N(Λ⁻¹ b, Λ⁻¹)` given precision `Λ` and `b`.
/// Returns the draw together with the mean `Λ⁻¹ b`.
pub fn sample_mvn_canonical(
    precision: &DMatrix<f64>,
    b: &DVector<f64>,
    rng: &mut RngStream,
) -> Result<(DVector<f64>, DVector<f64>), StatsError> {
    let chol = CholeskyFactor::new(precision)?;
    let mean = chol.solve(b);
    let z = DVector::from_fn(b.len(), |_, _| rng.normal());
    let draw = &mean + chol.solve_upper_lt(&z);
    Ok((draw, mean))
}

/// Draw from `N(mean, var)` conditioned on the value lying below `upper`.
///
/// Inverse-CDF when the standardized bound is above −4, Robert's
/// exponential rejection in the deeper tail.
pub fn sample_truncated_normal_upper(mean: f64, var: f64, upper: f64, rng: &mut RngStream) -> Result<f64, StatsError> {
    if !(var > 0.0) {
        return Err(StatsError::NonpositiveVariance(var));
    }
    let sd = var.sqrt();
    if upper == f64::INFINITY {
        return Ok(mean + sd * rng.normal());
    }
    let b = (upper - mean) / sd;
    if b >= DEEP_TAIL {
        let u = rng.uniform() * norm_cdf(b);
        let z = inv_norm_cdf(u).min(b);
        return Ok(mean + sd * z);
    }
    // Z = -Y > a with a = -b > 4.
    let a = -b;
    let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let z = a + rng.exponential() / alpha;
        let rho = (-0.5 * (z - alpha) * (z - alpha)).exp();
        if rng.uniform() <= rho {
            return Ok(mean - sd * z);
        }
    }
}

/// Inverse-gamma with density ∝ x^(−shape−1) exp(−scale/x).
pub fn sample_inverse_gamma(shape: f64, scale: f64, rng: &mut RngStream) -> Result<f64, StatsError> {
    if !(shape > 0.0) || !(scale > 0.0) {
        return Err(StatsError::InvalidParameter(format!(
            "inverse-gamma shape {shape} and scale {scale} must be positive"
        )));
    }
    Ok(scale / rng.gamma(shape))
}

/// Inverse-Wishart(df, scale) via the Bartlett decomposition of
/// Wishart(df, scale⁻¹).
pub fn sample_inverse_wishart(df: f64, scale: &DMatrix<f64>, rng: &mut RngStream) -> Result<DMatrix<f64>, StatsError> {
    let p = scale.nrows();
    if !(df > p as f64 - 1.0) {
        return Err(StatsError::InvalidDf { df, dim: p });
    }
    let scale_inv = CholeskyFactor::new(scale)?.inverse();
    let l = CholeskyFactor::new(&scale_inv)?.l();
    let mut a = DMatrix::zeros(p, p);
    for i in 0..p {
        a[(i, i)] = rng.chi_squared(df - i as f64).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.normal();
        }
    }
    let la = l * a;
    let m = la.solve_lower_triangular(&DMatrix::identity(p, p)).ok_or(StatsError::NotPositiveDefinite)?;
    let mut sigma = m.transpose() * m;
    symmetrize(&mut sigma);
    Ok(sigma)
}
