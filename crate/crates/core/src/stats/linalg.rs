use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::StatsError;

const SYMMETRY_TOL: f64 = 1e-10;

/// Lower Cholesky factor `L` with `L Lᵀ = A`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    inner: Cholesky<f64, Dyn>,
}

pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

impl CholeskyFactor {
    pub fn new(a: &DMatrix<f64>) -> Result<Self, StatsError> {
        if !a.is_square() {
            return Err(StatsError::DimensionMismatch(format!("cholesky of a {}x{} matrix", a.nrows(), a.ncols())));
        }
        let scale = a.amax().max(1.0);
        let asym = max_asymmetry(a);
        if asym > SYMMETRY_TOL * scale {
            return Err(StatsError::NotSymmetric(asym));
        }
        Cholesky::new(a.clone()).map(|inner| CholeskyFactor { inner }).ok_or(StatsError::NotPositiveDefinite)
    }

    /// Factor `a`; on failure add `jitter` to the diagonal once and retry.
    pub fn with_jitter(a: &DMatrix<f64>, jitter: f64) -> Result<Self, StatsError> {
        match Self::new(a) {
            Err(StatsError::NotPositiveDefinite) => {
                let mut b = a.clone();
                for i in 0..b.nrows() {
                    b[(i, i)] += jitter;
                }
                Self::new(&b)
            }
            other => other,
        }
    }

    pub fn dim(&self) -> usize {
        self.inner.l_dirty().nrows()
    }

    pub fn l(&self) -> DMatrix<f64> {
        self.inner.l()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.inner.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.inner.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let mut inv = self.inner.inverse();
        symmetrize(&mut inv);
        inv
    }

    pub fn log_det(&self) -> f64 {
        let l = self.inner.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    /// `L z`.
    pub fn mul_l(&self, z: &DVector<f64>) -> DVector<f64> {
        self.inner.l() * z
    }

    /// Squared Mahalanobis norm `rᵀ A⁻¹ r`.
    pub fn quad_form_inv(&self, r: &DVector<f64>) -> f64 {
        let l = self.inner.l_dirty();
        let w = l.solve_lower_triangular(r).expect("cholesky factor has nonzero diagonal");
        w.norm_squared()
    }

    /// `x` with `Lᵀ x = z`.
    pub fn solve_upper_lt(&self, z: &DVector<f64>) -> DVector<f64> {
        self.inner.l_dirty().tr_solve_lower_triangular(z).expect("cholesky factor has nonzero diagonal")
    }
}

pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.clone().symmetric_eigen().eigenvalues.min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RngStream;

    fn random_spd(n: usize, rng: &mut RngStream) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |_, _| rng.normal());
        let mut a = &b * b.transpose();
        for i in 0..n {
            a[(i, i)] += n as f64 * 0.1;
        }
        a
    }

    #[test]
    fn identity_factor() {
        let f = CholeskyFactor::new(&DMatrix::identity(4, 4)).unwrap();
        assert_eq!(f.l(), DMatrix::identity(4, 4));
    }

    #[test]
    fn diagonal_factor() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 9.0]);
        let l = CholeskyFactor::new(&a).unwrap().l();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]));
    }

    #[test]
    fn random_spd_reconstructs() {
        let mut rng = RngStream::new(3, 0);
        let a = random_spd(10, &mut rng);
        let l = CholeskyFactor::new(&a).unwrap().l();
        let err = (&l * l.transpose() - &a).norm() / a.norm();
        assert!(err < 1e-10, "relative error {err}");
    }

    #[test]
    fn rejects_indefinite_and_asymmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(CholeskyFactor::new(&a).unwrap_err(), StatsError::NotPositiveDefinite);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(CholeskyFactor::new(&b), Err(StatsError::NotSymmetric(_))));
    }

    #[test]
    fn jitter_rescues_singular() {
        let a = DMatrix::from_element(3, 3, 1.0);
        assert!(CholeskyFactor::new(&a).is_err());
        assert!(CholeskyFactor::with_jitter(&a, 1e-10).is_ok());
    }

    #[test]
    fn log_det_and_quad_form() {
        let mut rng = RngStream::new(8, 0);
        let a = random_spd(5, &mut rng);
        let f = CholeskyFactor::new(&a).unwrap();
        assert!((f.log_det() - a.determinant().ln()).abs() < 1e-10);
        let r = DVector::from_fn(5, |i, _| i as f64 - 2.0);
        let direct = (r.transpose() * a.clone().try_inverse().unwrap() * &r)[(0, 0)];
        assert!((f.quad_form_inv(&r) - direct).abs() < 1e-10 * direct.abs().max(1.0));
    }
}
