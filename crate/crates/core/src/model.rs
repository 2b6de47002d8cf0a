//! The probability model: parameters, priors, the GPS density, the H-level
//! mean and the log-density evaluators shared by the sampler and LPML.
//!
//! The anchored H-level is a multivariate normal restricted to
//! `H[anchor] < 0` and renormalized by `P(H[anchor] < 0) = Φ(−μ_anc/σ_H)`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::data::Dataset;
use crate::spatial::{factor_correlation, SpatialCorrelation, SpatialError};
use crate::stats::special::{log_norm_cdf, LN_SQRT_2PI};
use crate::stats::{median, normal_logpdf, normal_pdf, CholeskyFactor, StatsError};

/// Number of outcome-model coefficients β₀…β₅.
pub const N_BETA: usize = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("variance must be positive, got {0}")]
    NonpositiveVariance(f64),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("covariance factorization failed: {0}")]
    Factorization(String),
}

impl From<StatsError> for ModelError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::NonpositiveVariance(v) => ModelError::NonpositiveVariance(v),
            other => ModelError::Factorization(other.to_string()),
        }
    }
}

impl From<SpatialError> for ModelError {
    fn from(e: SpatialError) -> Self {
        match e {
            SpatialError::NonpositiveVariance(v) => ModelError::NonpositiveVariance(v),
            other => ModelError::Factorization(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelVariant {
    /// H mean `W*ζ`, diagonal Σ_H, no treatment model.
    BaseLhfi,
    /// GPS-adjusted H mean with spatial Σ_H.
    Lacsh,
}

impl ModelVariant {
    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::BaseLhfi => "base_lhfi",
            ModelVariant::Lacsh => "lacsh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "base_lhfi" => Some(ModelVariant::BaseLhfi),
            "lacsh" => Some(ModelVariant::Lacsh),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutcomeTerms {
    /// `β₀ + β₁T + β₂T² + β₃R + β₄R² + β₅TR`.
    Full,
    /// `β₀ + β₁T + β₃R`; β₂, β₄, β₅ fixed at zero.
    LinearOnly,
}

impl OutcomeTerms {
    /// Indices of the free β coefficients.
    pub fn active(self) -> &'static [usize] {
        match self {
            OutcomeTerms::Full => &[0, 1, 2, 3, 4, 5],
            OutcomeTerms::LinearOnly => &[0, 1, 3],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OutcomeTerms::Full => "full",
            OutcomeTerms::LinearOnly => "linear_only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "full" => Some(OutcomeTerms::Full),
            "linear_only" => Some(OutcomeTerms::LinearOnly),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    /// Normal prior on each a_j, β_k, γ_k and ζ_k.
    pub coef_mean: f64,
    pub coef_var: f64,
    pub log_sigma2_h_mean: f64,
    pub log_sigma2_h_var: f64,
    pub log_phi_mean: f64,
    pub log_phi_var: f64,
    /// Inverse-Wishart degrees of freedom for Σ_Y; `None` means P + 2.
    pub sigma_y_df: Option<f64>,
    /// Multiple of the identity used as the Σ_Y scale matrix.
    pub sigma_y_scale: f64,
    pub sigma2_t_shape: f64,
    pub sigma2_t_scale: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            coef_mean: 0.0,
            coef_var: 100.0,
            log_sigma2_h_mean: 0.0,
            log_sigma2_h_var: 100.0,
            log_phi_mean: 0.0,
            log_phi_var: 100.0,
            sigma_y_df: None,
            sigma_y_scale: 1.0,
            sigma2_t_shape: 1.0,
            sigma2_t_scale: 0.01,
        }
    }
}

impl PriorSpec {
    pub fn sigma_y_df(&self, p: usize) -> f64 {
        self.sigma_y_df.unwrap_or(p as f64 + 2.0)
    }

    pub fn validate(&self, p: usize) -> Result<(), ModelError> {
        let positive = [
            ("coef_var", self.coef_var),
            ("log_sigma2_h_var", self.log_sigma2_h_var),
            ("log_phi_var", self.log_phi_var),
            ("sigma_y_scale", self.sigma_y_scale),
            ("sigma2_t_shape", self.sigma2_t_shape),
            ("sigma2_t_scale", self.sigma2_t_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidPrior(format!("{name} must be positive, got {v}")));
            }
        }
        let df = self.sigma_y_df(p);
        if !(df > p as f64 - 1.0) {
            return Err(ModelError::InvalidPrior(format!("Σ_Y degrees of freedom {df} must exceed P - 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub variant: ModelVariant,
    pub outcome_terms: OutcomeTerms,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec { variant: ModelVariant::Lacsh, outcome_terms: OutcomeTerms::Full }
    }
}

/// One MCMC state. `zeta` is used by the base variant only; `beta`, `gamma`,
/// `sigma2_t` and `phi` by the full model only.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    pub a: DVector<f64>,
    pub h: DVector<f64>,
    pub sigma_y: DMatrix<f64>,
    pub beta: DVector<f64>,
    pub gamma: DVector<f64>,
    pub sigma2_t: f64,
    pub sigma2_h: f64,
    pub phi: f64,
    pub zeta: DVector<f64>,
}

impl ParameterState {
    pub fn check(&self, data: &Dataset) -> Result<(), ModelError> {
        let (n, p) = (data.n(), data.p());
        let zdim = 1 + data.k() + data.q();
        let len = |got: usize, expected: usize| {
            if got == expected {
                Ok(())
            } else {
                Err(ModelError::LengthMismatch { expected, got })
            }
        };
        len(self.a.len(), p)?;
        len(self.h.len(), n)?;
        len(self.beta.len(), N_BETA)?;
        len(self.gamma.len(), zdim)?;
        len(self.zeta.len(), zdim + 1)?;
        if self.sigma_y.shape() != (p, p) {
            return Err(ModelError::ShapeMismatch(format!("Σ_Y is {:?}, expected {p}x{p}", self.sigma_y.shape())));
        }
        if !(self.h[data.anchor_index] < 0.0) {
            return Err(ModelError::InvalidState(format!(
                "anchor health {} is not negative",
                self.h[data.anchor_index]
            )));
        }
        for (name, v) in [("sigma2_t", self.sigma2_t), ("sigma2_h", self.sigma2_h), ("phi", self.phi)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidState(format!("{name} = {v} is not positive")));
            }
        }
        CholeskyFactor::new(&self.sigma_y)?;
        Ok(())
    }
}

/// Generalized propensity score `N(t; z·γ, σ²_T)`.
pub fn gps_density(t: f64, z: &[f64], gamma: &[f64], sigma2_t: f64) -> Result<f64, ModelError> {
    if z.len() != gamma.len() {
        return Err(ModelError::LengthMismatch { expected: gamma.len(), got: z.len() });
    }
    let m: f64 = z.iter().zip(gamma).map(|(a, b)| a * b).sum();
    Ok(normal_pdf(t, m, sigma2_t)?)
}

/// GPS of every unit at its own treatment value.
pub fn gps_vector(
    zstar: &DMatrix<f64>,
    t: &DVector<f64>,
    gamma: &DVector<f64>,
    sigma2_t: f64,
) -> Result<DVector<f64>, ModelError> {
    if zstar.ncols() != gamma.len() {
        return Err(ModelError::LengthMismatch { expected: zstar.ncols(), got: gamma.len() });
    }
    if zstar.nrows() != t.len() {
        return Err(ModelError::LengthMismatch { expected: zstar.nrows(), got: t.len() });
    }
    let m = zstar * gamma;
    let mut r = DVector::zeros(t.len());
    for i in 0..t.len() {
        r[i] = normal_pdf(t[i], m[i], sigma2_t)?;
    }
    Ok(r)
}

/// Outcome regressors `(1, T, T², R, R², T·R)` for one unit.
pub fn outcome_row(t: f64, r: f64) -> [f64; N_BETA] {
    [1.0, t, t * t, r, r * r, t * r]
}

/// `μ_i = β₀ + β₁T_i + β₂T_i² + β₃R_i + β₄R_i² + β₅T_iR_i`.
pub fn h_mean(beta: &[f64], t: &DVector<f64>, r: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
    if beta.len() != N_BETA {
        return Err(ModelError::LengthMismatch { expected: N_BETA, got: beta.len() });
    }
    if t.len() != r.len() {
        return Err(ModelError::LengthMismatch { expected: t.len(), got: r.len() });
    }
    Ok(DVector::from_fn(t.len(), |i, _| outcome_row(t[i], r[i]).iter().zip(beta).map(|(x, b)| x * b).sum()))
}

/// Log density of the anchored, renormalized H-level given its mean.
/// `chol_omega = None` means Ω = I. `−∞` outside the support.
pub fn anchored_h_log_density(
    h: &DVector<f64>,
    mu: &DVector<f64>,
    sigma2_h: f64,
    chol_omega: Option<&CholeskyFactor>,
    anchor: usize,
) -> Result<f64, ModelError> {
    if !(sigma2_h > 0.0) {
        return Err(ModelError::NonpositiveVariance(sigma2_h));
    }
    if h.len() != mu.len() {
        return Err(ModelError::LengthMismatch { expected: mu.len(), got: h.len() });
    }
    if !(h[anchor] < 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let n = h.len() as f64;
    let resid = h - mu;
    let (quad, log_det_omega) = match chol_omega {
        Some(c) => (c.quad_form_inv(&resid), c.log_det()),
        None => (resid.norm_squared(), 0.0),
    };
    let sigma_h = sigma2_h.sqrt();
    Ok(-n * LN_SQRT_2PI
        - 0.5 * (n * sigma2_h.ln() + log_det_omega)
        - 0.5 * quad / sigma2_h
        - log_norm_cdf(-mu[anchor] / sigma_h))
}

/// Sum of independent normal log-priors over `coefs`.
pub fn coef_log_prior<'a>(coefs: impl IntoIterator<Item = &'a f64>, prior: &PriorSpec) -> f64 {
    coefs
        .into_iter()
        .map(|&c| normal_logpdf(c, prior.coef_mean, prior.coef_var).expect("validated prior variance"))
        .sum()
}

/// Log-priors of the free H-level parameters, in the log coordinates the
/// Metropolis block moves in (the priors are placed on those coordinates,
/// so no change-of-variables term arises).
pub fn h_level_log_prior(state: &ParameterState, model: &ModelSpec, prior: &PriorSpec) -> f64 {
    let ls = normal_logpdf(state.sigma2_h.ln(), prior.log_sigma2_h_mean, prior.log_sigma2_h_var)
        .expect("validated prior variance");
    match model.variant {
        ModelVariant::Lacsh => {
            let lp =
                normal_logpdf(state.phi.ln(), prior.log_phi_mean, prior.log_phi_var).expect("validated prior variance");
            coef_log_prior(model.outcome_terms.active().iter().map(|&k| &state.beta[k]), prior) + ls + lp
        }
        ModelVariant::BaseLhfi => coef_log_prior(state.zeta.iter(), prior) + ls,
    }
}

/// Mean of H under either variant.
pub fn h_level_mean(state: &ParameterState, data: &Dataset, model: &ModelSpec) -> Result<DVector<f64>, ModelError> {
    match model.variant {
        ModelVariant::Lacsh => {
            let r = gps_vector(&data.zstar(), &data.t, &state.gamma, state.sigma2_t)?;
            h_mean(state.beta.as_slice(), &data.t, &r)
        }
        ModelVariant::BaseLhfi => {
            let w = data.wstar();
            if w.ncols() != state.zeta.len() {
                return Err(ModelError::LengthMismatch { expected: w.ncols(), got: state.zeta.len() });
            }
            Ok(w * &state.zeta)
        }
    }
}

/// Anchored H-level density plus the log-priors of β (or ζ), log σ²_H and
/// log φ. The base variant ignores `omega` and uses Σ_H = σ²_H I.
pub fn h_level_log_density(
    state: &ParameterState,
    data: &Dataset,
    omega: &SpatialCorrelation,
    model: &ModelSpec,
    prior: &PriorSpec,
) -> Result<f64, ModelError> {
    let mu = h_level_mean(state, data, model)?;
    let data_term = match model.variant {
        ModelVariant::Lacsh => {
            if omega.omega.nrows() != data.n() {
                return Err(ModelError::ShapeMismatch("Ω does not match N".into()));
            }
            let chol = factor_correlation(omega)?;
            anchored_h_log_density(&state.h, &mu, state.sigma2_h, Some(&chol), data.anchor_index)?
        }
        ModelVariant::BaseLhfi => anchored_h_log_density(&state.h, &mu, state.sigma2_h, None, data.anchor_index)?,
    };
    if data_term == f64::NEG_INFINITY {
        return Ok(data_term);
    }
    Ok(data_term + h_level_log_prior(state, model, prior))
}

/// `log N(y_i; a·H_i, Σ_Y)` for every unit.
pub fn y_log_likelihood(state: &ParameterState, y: &DMatrix<f64>) -> Result<DVector<f64>, ModelError> {
    let chol = CholeskyFactor::new(&state.sigma_y)?;
    y_log_likelihood_chol(&state.a, &state.h, &chol, y)
}

pub fn y_log_likelihood_chol(
    a: &DVector<f64>,
    h: &DVector<f64>,
    chol_sigma_y: &CholeskyFactor,
    y: &DMatrix<f64>,
) -> Result<DVector<f64>, ModelError> {
    let (n, p) = y.shape();
    if a.len() != p || chol_sigma_y.dim() != p {
        return Err(ModelError::LengthMismatch { expected: p, got: a.len() });
    }
    if h.len() != n {
        return Err(ModelError::LengthMismatch { expected: n, got: h.len() });
    }
    let c = -(p as f64) * LN_SQRT_2PI - 0.5 * chol_sigma_y.log_det();
    Ok(DVector::from_fn(n, |i, _| {
        let r = DVector::from_fn(p, |j, _| y[(i, j)] - a[j] * h[i]);
        c - 0.5 * chol_sigma_y.quad_form_inv(&r)
    }))
}

/// Per-unit posterior median of `H − W*ζ` across aligned draws.
pub fn base_lhfi_residuals(
    h_draws: &DMatrix<f64>,
    data: &Dataset,
    zeta_draws: &DMatrix<f64>,
) -> Result<DVector<f64>, ModelError> {
    let w = data.wstar();
    if h_draws.nrows() != zeta_draws.nrows() || h_draws.nrows() == 0 {
        return Err(ModelError::ShapeMismatch(format!(
            "{} H draws vs {} ζ draws",
            h_draws.nrows(),
            zeta_draws.nrows()
        )));
    }
    if h_draws.ncols() != data.n() || zeta_draws.ncols() != w.ncols() {
        return Err(ModelError::ShapeMismatch("draw widths do not match the dataset".into()));
    }
    let fitted = zeta_draws * w.transpose(); // S×N
    let resid = h_draws - fitted;
    Ok(DVector::from_fn(data.n(), |i, _| median(resid.column(i).as_slice())))
}
