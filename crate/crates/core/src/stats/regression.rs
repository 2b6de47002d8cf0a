//! Frequentist linear and logistic regression for the balance diagnostic.
//!
//! Standard errors come from the (observed or Fisher) information and every
//! p-value is the two-sided normal approximation to the Wald statistic.

use nalgebra::{DMatrix, DVector};

use super::special::two_sided_p;
use super::StatsError;

const RANK_TOL: f64 = 1e-10;
const LOGIT_MAX_ITER: usize = 100;
const LOGIT_TOL: f64 = 1e-8;
/// Linear predictor magnitude (fitted probability within about 1e-13 of 0
/// or 1) past which a non-converging fit is treated as separated. Bounding
/// the predictor rather than the coefficients keeps the rule scale free.
const SEPARATION_ETA: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub coefficients: DVector<f64>,
    pub residual_se: f64,
    pub coefficient_se: DVector<f64>,
    pub p_values: DVector<f64>,
    pub fitted: DVector<f64>,
    pub iterations: usize,
}

fn check_shape(x: &DMatrix<f64>, y_len: usize) -> Result<(), StatsError> {
    let (n, k) = x.shape();
    if n != y_len {
        return Err(StatsError::DimensionMismatch(format!("design has {n} rows, response {y_len}")));
    }
    if n <= k {
        return Err(StatsError::DegenerateInput(format!("need n > k, got n = {n}, k = {k}")));
    }
    Ok(())
}

/// QR-based solve of `min |w ⊙ (X b − z)|` returning `b` and `(RᵀR)⁻¹`.
fn weighted_ls(x: &DMatrix<f64>, z: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>), StatsError> {
    let k = x.ncols();
    let qr = x.clone().qr();
    let r = qr.r();
    let rmax = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..k).any(|i| r[(i, i)].abs() <= RANK_TOL * rmax.max(1e-300)) {
        return Err(StatsError::RankDeficient);
    }
    let qtz = qr.q().transpose() * z;
    let coef = r.solve_upper_triangular(&qtz).ok_or(StatsError::RankDeficient)?;
    let r_inv = r.solve_upper_triangular(&DMatrix::identity(k, k)).ok_or(StatsError::RankDeficient)?;
    let unscaled_cov = &r_inv * r_inv.transpose();
    Ok((coef, unscaled_cov))
}

/// Ordinary least squares; `x` must already contain any intercept column.
pub fn fit_linear_regression(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<RegressionFit, StatsError> {
    check_shape(x, y.len())?;
    let (n, k) = x.shape();
    let (coefficients, unscaled) = weighted_ls(x, y)?;
    let fitted = x * &coefficients;
    let rss = (y - &fitted).norm_squared();
    let residual_se = (rss / (n - k) as f64).sqrt();
    let coefficient_se = DVector::from_fn(k, |j, _| residual_se * unscaled[(j, j)].sqrt());
    let p_values = DVector::from_fn(k, |j, _| wald_p(coefficients[j], coefficient_se[j]));
    Ok(RegressionFit { coefficients, residual_se, coefficient_se, p_values, fitted, iterations: 1 })
}

fn wald_p(coef: f64, se: f64) -> f64 {
    if se == 0.0 {
        return if coef == 0.0 { 1.0 } else { 0.0 };
    }
    two_sided_p(coef / se)
}

fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Logistic regression by iteratively reweighted least squares.
///
/// Stops when the largest coefficient change falls below 1e-8 or after 100
/// iterations. A coefficient beyond ±15 while the step length is not
/// shrinking is reported as quasi-complete separation.
pub fn fit_logistic_regression(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<RegressionFit, StatsError> {
    check_shape(x, y.len())?;
    let (n, k) = x.shape();
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(StatsError::InvalidParameter("logistic response must be 0/1".into()));
    }
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == n {
        return Err(StatsError::SingleClass);
    }

    let mut beta = DVector::zeros(k);
    let mut prev_step = f64::INFINITY;
    let mut iterations = 0;
    let mut unscaled: DMatrix<f64>;
    loop {
        iterations += 1;
        let eta = x * &beta;
        let mut xw = x.clone();
        let mut zw = DVector::zeros(n);
        for i in 0..n {
            let p = logistic(eta[i]);
            let w = (p * (1.0 - p)).max(1e-300);
            let sw = w.sqrt();
            for j in 0..k {
                xw[(i, j)] *= sw;
            }
            zw[i] = sw * eta[i] + (y[i] - p) / sw;
        }
        let (next, cov) = weighted_ls(&xw, &zw)?;
        let step = (x * (&next - &beta)).amax();
        beta = next;
        unscaled = cov;
        if !beta.iter().all(|b| b.is_finite()) {
            return Err(StatsError::Separation);
        }
        let eta_max = (x * &beta).amax();
        if eta_max > SEPARATION_ETA && step >= prev_step {
            return Err(StatsError::Separation);
        }
        if step < LOGIT_TOL || iterations >= LOGIT_MAX_ITER {
            break;
        }
        prev_step = step;
    }
    if (x * &beta).amax() > SEPARATION_ETA && iterations >= LOGIT_MAX_ITER {
        return Err(StatsError::Separation);
    }
    // information at the final coefficients
    let eta = x * &beta;
    let mut xw = x.clone();
    for i in 0..n {
        let p = logistic(eta[i]);
        let sw = (p * (1.0 - p)).max(1e-300).sqrt();
        for j in 0..k {
            xw[(i, j)] *= sw;
        }
    }
    if let Ok((_, cov)) = weighted_ls(&xw, &DVector::zeros(n)) {
        unscaled = cov;
    }
    let coefficient_se = DVector::from_fn(k, |j, _| unscaled[(j, j)].sqrt());
    let p_values = DVector::from_fn(k, |j, _| wald_p(beta[j], coefficient_se[j]));
    let fitted = eta.map(logistic);
    Ok(RegressionFit { coefficients: beta, residual_se: 1.0, coefficient_se, p_values, fitted, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RngStream;

    fn with_intercept(cols: &[Vec<f64>]) -> DMatrix<f64> {
        let n = cols[0].len();
        DMatrix::from_fn(n, cols.len() + 1, |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] })
    }

    #[test]
    fn exact_linear_fit() {
        let x1 = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let x = with_intercept(&[x1.clone()]);
        let y = DVector::from_iterator(5, x1.iter().map(|v| 2.0 - 0.5 * v));
        let fit = fit_linear_regression(&x, &y).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((fit.coefficients[1] + 0.5).abs() < 1e-12);
        assert!(fit.residual_se < 1e-12);
    }

    #[test]
    fn intercept_only_is_mean() {
        let y = DVector::from_vec(vec![1.0, 4.0, 2.0, 7.0]);
        let x = DMatrix::from_element(4, 1, 1.0);
        let fit = fit_linear_regression(&x, &y).unwrap();
        assert!((fit.coefficients[0] - 3.5).abs() < 1e-12);
    }

    #[test]
    fn matches_normal_equations() {
        let mut rng = RngStream::new(31, 0);
        let n = 40;
        let x = DMatrix::from_fn(n, 4, |_, j| if j == 0 { 1.0 } else { rng.normal() });
        let y = DVector::from_fn(n, |_, _| rng.normal());
        let fit = fit_linear_regression(&x, &y).unwrap();
        let gram = x.transpose() * &x;
        let oracle = gram.clone().try_inverse().unwrap() * x.transpose() * &y;
        assert!((fit.coefficients - oracle).amax() < 1e-8);
    }

    #[test]
    fn rank_deficient_design() {
        let x = DMatrix::from_fn(6, 3, |i, j| match j {
            0 => 1.0,
            1 => i as f64,
            _ => 2.0 * i as f64,
        });
        let y = DVector::from_fn(6, |i, _| i as f64);
        assert_eq!(fit_linear_regression(&x, &y).unwrap_err(), StatsError::RankDeficient);
    }

    #[test]
    fn separated_response() {
        let xs: Vec<f64> = (-10..10).map(|i| i as f64 + 0.5).collect();
        let x = with_intercept(&[xs.clone()]);
        let y = DVector::from_iterator(xs.len(), xs.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }));
        assert_eq!(fit_logistic_regression(&x, &y).unwrap_err(), StatsError::Separation);
    }

    #[test]
    fn single_class() {
        let x = with_intercept(&[vec![0.1, 0.2, 0.3, 0.4]]);
        let y = DVector::from_element(4, 1.0);
        assert_eq!(fit_logistic_regression(&x, &y).unwrap_err(), StatsError::SingleClass);
    }

    #[test]
    fn column_order_permutes_coefficients() {
        let mut rng = RngStream::new(32, 0);
        let n = 80;
        let a: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let y = DVector::from_iterator(
            n,
            (0..n).map(|i| if rng.uniform() < 1.0 / (1.0 + (-(a[i] - 0.5 * b[i])).exp()) { 1.0 } else { 0.0 }),
        );
        let f1 = fit_logistic_regression(&with_intercept(&[a.clone(), b.clone()]), &y).unwrap();
        let f2 = fit_logistic_regression(&with_intercept(&[b, a]), &y).unwrap();
        assert!((f1.coefficients[1] - f2.coefficients[2]).abs() < 1e-9);
        assert!((f1.coefficients[2] - f2.coefficients[1]).abs() < 1e-9);
        assert!((f1.p_values[1] - f2.p_values[2]).abs() < 1e-9);
    }
}
