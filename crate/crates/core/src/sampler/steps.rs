//! The conjugate updates. Each takes only the quantities its full
//! conditional depends on; the treatment-model updates in particular never
//! see H, β or Y.

use nalgebra::{DMatrix, DVector};

use super::SamplerError;
use crate::data::Dataset;
use crate::model::{ParameterState, PriorSpec};
use crate::stats::{
    sample_inverse_gamma, sample_inverse_wishart, sample_mvn_canonical, sample_truncated_normal_upper, CholeskyFactor,
    RngStream,
};

/// Precision of the H-level prior, Σ_H⁻¹.
#[derive(Debug, Clone, Copy)]
pub enum HPrecision<'a> {
    /// Σ_H = σ²_H I.
    Diagonal(f64),
    Dense(&'a DMatrix<f64>),
}

impl HPrecision<'_> {
    /// Conditional prior `(m_i, D_i)` of `H_i` given `H_{-i}`.
    pub fn conditional(&self, i: usize, h: &DVector<f64>, mu: &DVector<f64>) -> (f64, f64) {
        match *self {
            HPrecision::Diagonal(s2) => (mu[i], s2),
            HPrecision::Dense(q) => {
                let qii = q[(i, i)];
                let mut acc = 0.0;
                for j in 0..h.len() {
                    if j != i {
                        acc += q[(i, j)] * (h[j] - mu[j]);
                    }
                }
                (mu[i] - acc / qii, 1.0 / qii)
            }
        }
    }
}

/// Y-level information about one unit's H: `aᵀΣ_Y⁻¹a` and `Σ_Y⁻¹a`.
#[derive(Debug, Clone)]
pub struct LoadingInfo {
    pub precision: f64,
    pub weights: DVector<f64>,
}

impl LoadingInfo {
    pub fn new(a: &DVector<f64>, sigma_y: &DMatrix<f64>) -> Result<Self, SamplerError> {
        let chol = CholeskyFactor::new(sigma_y)?;
        let weights = chol.solve(a);
        Ok(LoadingInfo { precision: a.dot(&weights), weights })
    }

    pub fn evidence(&self, y: &DMatrix<f64>, i: usize) -> f64 {
        (0..y.ncols()).map(|j| self.weights[j] * y[(i, j)]).sum()
    }
}

/// Full conditional `N(M, V)` of `H_i` given everything else.
pub fn h_conditional(
    state: &ParameterState,
    y: &DMatrix<f64>,
    i: usize,
    mu: &DVector<f64>,
    prec: HPrecision<'_>,
    info: &LoadingInfo,
) -> (f64, f64) {
    let (m, d) = prec.conditional(i, &state.h, mu);
    let v = 1.0 / (info.precision + 1.0 / d);
    (v * (info.evidence(y, i) + m / d), v)
}

/// Single-site Gibbs sweep over non-anchor units in ascending order.
pub fn update_h_nonanchor(
    state: &mut ParameterState,
    data: &Dataset,
    mu: &DVector<f64>,
    prec: HPrecision<'_>,
    rng: &mut RngStream,
) -> Result<(), SamplerError> {
    let info = LoadingInfo::new(&state.a, &state.sigma_y)?;
    for i in 0..data.n() {
        if i == data.anchor_index {
            continue;
        }
        let (m, v) = h_conditional(state, &data.y, i, mu, prec, &info);
        state.h[i] = m + v.sqrt() * rng.normal();
    }
    Ok(())
}

/// Exact truncated-normal Gibbs draw of the anchor (diagonal Σ_H only,
/// where the truncation normalizer does not involve H).
pub fn update_h_anchor_truncated(
    state: &mut ParameterState,
    data: &Dataset,
    mu: &DVector<f64>,
    rng: &mut RngStream,
) -> Result<(), SamplerError> {
    let info = LoadingInfo::new(&state.a, &state.sigma_y)?;
    let anc = data.anchor_index;
    let (m, v) = h_conditional(state, &data.y, anc, mu, HPrecision::Diagonal(state.sigma2_h), &info);
    state.h[anc] = sample_truncated_normal_upper(m, v, 0.0, rng)?;
    Ok(())
}

/// Conditional `(precision, b)` of the loadings: `N(Λ⁻¹b, Λ⁻¹)`.
pub fn a_conditional(
    h: &DVector<f64>,
    y: &DMatrix<f64>,
    sigma_y: &DMatrix<f64>,
    prior: &PriorSpec,
) -> Result<(DMatrix<f64>, DVector<f64>), SamplerError> {
    let p = y.ncols();
    let sy_inv = CholeskyFactor::new(sigma_y)?.inverse();
    let hh = h.norm_squared();
    let mut precision = &sy_inv * hh;
    for j in 0..p {
        precision[(j, j)] += 1.0 / prior.coef_var;
    }
    let b = &sy_inv * (y.transpose() * h) + DVector::from_element(p, prior.coef_mean / prior.coef_var);
    Ok((precision, b))
}

pub fn update_a(
    state: &mut ParameterState,
    data: &Dataset,
    prior: &PriorSpec,
    rng: &mut RngStream,
) -> Result<(), SamplerError> {
    let (precision, b) = a_conditional(&state.h, &data.y, &state.sigma_y, prior)?;
    state.a = sample_mvn_canonical(&precision, &b, rng)?.0;
    Ok(())
}

/// Conditional inverse-Wishart `(df, scale)` of Σ_Y.
pub fn sigma_y_conditional(
    h: &DVector<f64>,
    a: &DVector<f64>,
    y: &DMatrix<f64>,
    prior: &PriorSpec,
) -> (f64, DMatrix<f64>) {
    let (n, p) = y.shape();
    let resid = y - h * a.transpose();
    let scale = resid.transpose() * &resid + DMatrix::identity(p, p) * prior.sigma_y_scale;
    (prior.sigma_y_df(p) + n as f64, scale)
}

pub fn update_sigma_y(
    state: &mut ParameterState,
    data: &Dataset,
    prior: &PriorSpec,
    rng: &mut RngStream,
) -> Result<(), SamplerError> {
    let (df, scale) = sigma_y_conditional(&state.h, &state.a, &data.y, prior);
    state.sigma_y = sample_inverse_wishart(df, &scale, rng)?;
    Ok(())
}

/// Conditional inverse-gamma `(shape, scale)` of σ²_T.
pub fn sigma2_t_conditional(
    zstar: &DMatrix<f64>,
    t: &DVector<f64>,
    gamma: &DVector<f64>,
    prior: &PriorSpec,
) -> (f64, f64) {
    let d = t - zstar * gamma;
    (prior.sigma2_t_shape + t.len() as f64 / 2.0, prior.sigma2_t_scale + d.norm_squared() / 2.0)
}

pub fn update_sigma2_t(
    zstar: &DMatrix<f64>,
    t: &DVector<f64>,
    gamma: &DVector<f64>,
    prior: &PriorSpec,
    rng: &mut RngStream,
) -> Result<f64, SamplerError> {
    let (shape, scale) = sigma2_t_conditional(zstar, t, gamma, prior);
    Ok(sample_inverse_gamma(shape, scale, rng)?)
}

/// `(precision, b)` of the cut-feedback γ update, which uses only the
/// treatment model `∏ N(T_i; Z*_iγ, σ²_T)` and the prior.
pub fn gamma_conditional(
    zstar: &DMatrix<f64>,
    t: &DVector<f64>,
    sigma2_t: f64,
    prior: &PriorSpec,
) -> (DMatrix<f64>, DVector<f64>) {
    let m = zstar.ncols();
    let mut precision = zstar.transpose() * zstar / sigma2_t;
    for j in 0..m {
        precision[(j, j)] += 1.0 / prior.coef_var;
    }
    let b = zstar.transpose() * t / sigma2_t + DVector::from_element(m, prior.coef_mean / prior.coef_var);
    (precision, b)
}

pub fn update_gamma_cutfeedback(
    zstar: &DMatrix<f64>,
    t: &DVector<f64>,
    sigma2_t: f64,
    prior: &PriorSpec,
    rng: &mut RngStream,
) -> Result<DVector<f64>, SamplerError> {
    let (precision, b) = gamma_conditional(zstar, t, sigma2_t, prior);
    Ok(sample_mvn_canonical(&precision, &b, rng)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_conditional_matches_naive_partition() {
        let mut rng = RngStream::new(7, 0);
        for n in [2usize, 5, 12] {
            let b = DMatrix::from_fn(n, n, |_, _| rng.normal());
            let sigma = &b * b.transpose() + DMatrix::identity(n, n) * 0.5;
            let q = CholeskyFactor::new(&sigma).unwrap().inverse();
            let h = DVector::from_fn(n, |_, _| rng.normal());
            let mu = DVector::from_fn(n, |_, _| rng.normal());
            for i in 0..n {
                let (m, d) = HPrecision::Dense(&q).conditional(i, &h, &mu);
                let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                let s_oo = DMatrix::from_fn(n - 1, n - 1, |a, b| sigma[(others[a], others[b])]);
                let s_io = DVector::from_fn(n - 1, |a, _| sigma[(i, others[a])]);
                let r = DVector::from_fn(n - 1, |a, _| h[others[a]] - mu[others[a]]);
                let inv = s_oo.try_inverse().unwrap();
                let m_naive = mu[i] + (s_io.transpose() * &inv * r)[0];
                let d_naive = sigma[(i, i)] - (s_io.transpose() * &inv * &s_io)[0];
                assert!((m - m_naive).abs() < 1e-9 * (1.0 + m_naive.abs()), "n={n} i={i}");
                assert!((d - d_naive).abs() < 1e-9 * d_naive);
            }
        }
    }

    #[test]
    fn scalar_conjugacy() {
        // N = 1, P = 1, a = 1, Σ_Y = 1, μ = 0, σ²_H = 1, y = 2 → N(1, 0.5)
        let state = ParameterState {
            a: DVector::from_element(1, 1.0),
            h: DVector::from_element(1, 0.0),
            sigma_y: DMatrix::identity(1, 1),
            beta: DVector::zeros(6),
            gamma: DVector::zeros(1),
            sigma2_t: 1.0,
            sigma2_h: 1.0,
            phi: 1.0,
            zeta: DVector::zeros(2),
        };
        let y = DMatrix::from_element(1, 1, 2.0);
        let info = LoadingInfo::new(&state.a, &state.sigma_y).unwrap();
        let (m, v) = h_conditional(&state, &y, 0, &DVector::zeros(1), HPrecision::Diagonal(1.0), &info);
        assert!((m - 1.0).abs() < 1e-15 && (v - 0.5).abs() < 1e-15);

        // loadings: ΣH² = 1, ΣH y = 3 → N(3/1.01, 1/1.01)
        let h = DVector::from_element(1, 1.0);
        let y = DMatrix::from_element(1, 1, 3.0);
        let (prec, b) = a_conditional(&h, &y, &DMatrix::identity(1, 1), &PriorSpec::default()).unwrap();
        assert!((b[0] / prec[(0, 0)] - 3.0 / 1.01).abs() < 1e-12);
        assert!((1.0 / prec[(0, 0)] - 1.0 / 1.01).abs() < 1e-12);

        // H = 0 → prior N(0, 100 I)
        let (prec, b) =
            a_conditional(&DVector::zeros(3), &DMatrix::zeros(3, 2), &DMatrix::identity(2, 2), &PriorSpec::default())
                .unwrap();
        assert!((prec - DMatrix::identity(2, 2) * 0.01).amax() < 1e-15);
        assert_eq!(b, DVector::zeros(2));
    }

    #[test]
    fn treatment_conditionals() {
        let prior = PriorSpec::default();
        let z = DMatrix::from_element(120, 1, 1.0);
        let t = DVector::from_element(120, 0.3);
        let (shape, scale) = sigma2_t_conditional(&z, &t, &DVector::from_element(1, 0.3), &prior);
        assert_eq!((shape, scale), (61.0, 0.01));
        let z = DMatrix::from_element(2, 1, 1.0);
        let t = DVector::from_vec(vec![1.0, -1.0]);
        let (shape, scale) = sigma2_t_conditional(&z, &t, &DVector::zeros(1), &prior);
        assert_eq!(shape, 2.0);
        assert!((scale - 1.01).abs() < 1e-15);
        // σ²_T → ∞ gives the prior
        let (prec, b) = gamma_conditional(&z, &t, 1e12, &prior);
        assert!((prec[(0, 0)] - 0.01).abs() < 1e-10 && b[0].abs() < 1e-10);
    }

    #[test]
    fn zero_residual_sigma_y_scale() {
        let h = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let a = DVector::from_vec(vec![0.3, 1.0]);
        let y = &h * a.transpose();
        let (df, scale) = sigma_y_conditional(&h, &a, &y, &PriorSpec::default());
        assert_eq!(df, 2.0 + 2.0 + 3.0);
        assert!((scale - DMatrix::identity(2, 2)).amax() < 1e-14);
    }
}
