use nalgebra::{DMatrix, DVector};

use super::ValidationError;
use crate::data::{standardize, Dataset};
use crate::model::{gps_vector, h_mean, ModelSpec, OutcomeTerms, ParameterState, PriorSpec, N_BETA};
use crate::spatial::{correlation_matrix, factor_correlation, DistanceMatrix, LatLon, EARTH_RADIUS_MM};
use crate::stats::special::norm_cdf;
use crate::stats::{sample_inverse_gamma, sample_inverse_wishart, sample_mvn, sample_mvn_chol, RngStream};

/// Anchor acceptance probabilities below this abort generation.
pub const MIN_ANCHOR_ACCEPTANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub enum CoordMode {
    /// Uniform on the sphere.
    SphereUniform,
    Fixed(Vec<LatLon>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TruthSpec {
    /// Draw every parameter from this prior. β entries outside the model's
    /// active set are zero. The anchor is the unit with the lowest H mean
    /// unless [`SyntheticSpec::anchor`] is set.
    FromPrior(PriorSpec),
    /// Use these values. γ and σ²_T are on the scale of the raw treatment,
    /// before it is standardized.
    Given(ParameterState),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub q: usize,
    pub truth: TruthSpec,
    pub coords: CoordMode,
    pub anchor: Option<usize>,
    pub model: ModelSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    /// True values on the dataset's scale: γ and σ²_T refer to the
    /// standardized treatment.
    pub state: ParameterState,
    pub dataset: Dataset,
    /// `P(H_anc < 0)` under the generating H-level distribution.
    pub anchor_acceptance: f64,
    pub seed: u64,
}

fn sphere_point(rng: &mut RngStream) -> LatLon {
    let z = 2.0 * rng.uniform() - 1.0;
    let lat = z.asin().to_degrees();
    let lon = 360.0 * rng.uniform() - 180.0;
    LatLon::new(lat.clamp(-90.0, 90.0), lon.min(180.0)).expect("in range")
}

fn prior_truth(
    spec: &SyntheticSpec,
    prior: &PriorSpec,
    rng: &mut RngStream,
) -> Result<ParameterState, ValidationError> {
    let (p, zdim) = (spec.p, 1 + spec.k + spec.q);
    let sd = prior.coef_var.sqrt();
    let mut coef = |m: usize| DVector::from_fn(m, |_, _| prior.coef_mean + sd * rng.normal());
    let a = coef(p);
    let mut beta = DVector::zeros(N_BETA);
    let draws = coef(N_BETA);
    for &k in spec.model.outcome_terms.active() {
        beta[k] = draws[k];
    }
    let gamma = coef(zdim);
    let zeta = coef(zdim + 1);
    let sigma2_t = sample_inverse_gamma(prior.sigma2_t_shape, prior.sigma2_t_scale, rng)?;
    let sigma2_h = (prior.log_sigma2_h_mean + prior.log_sigma2_h_var.sqrt() * rng.normal()).exp();
    let phi = (prior.log_phi_mean + prior.log_phi_var.sqrt() * rng.normal()).exp();
    let sigma_y = sample_inverse_wishart(prior.sigma_y_df(p), &(DMatrix::identity(p, p) * prior.sigma_y_scale), rng)?;
    Ok(ParameterState { a, h: DVector::zeros(spec.n), sigma_y, beta, gamma, sigma2_t, sigma2_h, phi, zeta })
}

/// Run the generative model forward. Z* is i.i.d. standard normal and then
/// standardized; T is drawn from the treatment model and standardized, and
/// (γ, σ²_T) are mapped to that scale so R and H use the dataset's T. Y is
/// left on the model scale.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticTruth, ValidationError> {
    generate_synthetic_stream(spec, seed, 0)
}

/// [`generate_synthetic`] drawing from RNG stream `stream`.
pub fn generate_synthetic_stream(
    spec: &SyntheticSpec,
    seed: u64,
    stream: u64,
) -> Result<SyntheticTruth, ValidationError> {
    let (n, p, k, q) = (spec.n, spec.p, spec.k, spec.q);
    if n == 0 || p == 0 || q >= p {
        return Err(ValidationError::InvalidSpec(format!("need N ≥ 1, P ≥ 1 and Q < P (got N={n}, P={p}, Q={q})")));
    }
    let mut rng = RngStream::new(seed, stream);
    let coords = match &spec.coords {
        CoordMode::SphereUniform => (0..n).map(|_| sphere_point(&mut rng)).collect::<Vec<_>>(),
        CoordMode::Fixed(c) if c.len() == n => c.clone(),
        CoordMode::Fixed(c) => {
            return Err(ValidationError::InvalidSpec(format!("{} fixed coordinates for {n} units", c.len())))
        }
    };
    let mut state = match &spec.truth {
        TruthSpec::FromPrior(prior) => prior_truth(spec, prior, &mut rng)?,
        TruthSpec::Given(s) => {
            let mut s = s.clone();
            s.h = DVector::zeros(n);
            s
        }
    };
    if state.a.len() != p || state.gamma.len() != 1 + k + q || state.beta.len() != N_BETA {
        return Err(ValidationError::InvalidSpec("truth dimensions do not match N, P, K and Q".into()));
    }

    let raw_z = DMatrix::from_fn(n, k + q, |_, _| rng.normal());
    let z_std = if n > 1 { standardize(&raw_z)?.0 } else { raw_z };
    let xstar = z_std.columns(0, k).into_owned();
    let ystar = z_std.columns(k, q).into_owned();
    let zstar = DMatrix::from_fn(n, 1 + k + q, |i, j| if j == 0 { 1.0 } else { z_std[(i, j - 1)] });

    let t_raw = DVector::from_fn(n, |i, _| {
        zstar.row(i).iter().zip(state.gamma.iter()).map(|(z, g)| z * g).sum::<f64>()
            + state.sigma2_t.sqrt() * rng.normal()
    });
    let (t, shift, scale) = if n > 1 {
        let m = t_raw.mean();
        let sd = (t_raw.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        if !(sd > 0.0) {
            return Err(ValidationError::InvalidSpec("generated treatment is constant".into()));
        }
        (t_raw.map(|x| (x - m) / sd), m, sd)
    } else {
        (t_raw.clone(), 0.0, 1.0)
    };
    state.gamma[0] -= shift;
    state.gamma /= scale;
    state.sigma2_t /= scale * scale;

    let r = gps_vector(&zstar, &t, &state.gamma, state.sigma2_t)?;
    let mu = h_mean(state.beta.as_slice(), &t, &r)?;
    let anchor = match spec.anchor {
        Some(a) if a < n => a,
        Some(a) => return Err(ValidationError::InvalidSpec(format!("anchor {a} out of range"))),
        None => mu.argmin().0,
    };
    let acceptance = norm_cdf(-mu[anchor] / state.sigma2_h.sqrt());
    if !(acceptance >= MIN_ANCHOR_ACCEPTANCE) {
        return Err(ValidationError::RejectionStall { probability: acceptance, anchor });
    }
    let dist = DistanceMatrix::from_coords(&coords, EARTH_RADIUS_MM)?;
    let omega = correlation_matrix(&dist, state.phi)?;
    let chol = factor_correlation(&omega)?;
    let sd_h = state.sigma2_h.sqrt();
    state.h = loop {
        let h = sample_mvn_chol(&DVector::zeros(n), &chol, &mut rng) * sd_h + &mu;
        if h[anchor] < 0.0 {
            break h;
        }
    };
    let mut y = DMatrix::zeros(n, p);
    for i in 0..n {
        let yi = sample_mvn(&(&state.a * state.h[i]), &state.sigma_y, &mut rng)?;
        y.set_row(i, &yi.transpose());
    }
    if spec.model.outcome_terms == OutcomeTerms::LinearOnly {
        for &kk in &[2usize, 4, 5] {
            if state.beta[kk] != 0.0 {
                return Err(ValidationError::InvalidSpec("linear_only truth must have β2 = β4 = β5 = 0".into()));
            }
        }
    }
    let dataset = Dataset::from_matrices(y, xstar, ystar, t, coords, anchor)?;
    Ok(SyntheticTruth { state, dataset, anchor_acceptance: acceptance, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::fit_linear_regression;

    fn given(p: usize, zdim: usize) -> ParameterState {
        ParameterState {
            a: DVector::from_fn(p, |j, _| 1.0 + 0.5 * j as f64),
            h: DVector::zeros(0),
            sigma_y: DMatrix::identity(p, p) * 0.25,
            beta: DVector::from_vec(vec![-0.5, 0.8, 0.0, 0.3, 0.0, 0.0]),
            gamma: DVector::from_fn(zdim, |j, _| 0.4 * j as f64 - 0.2),
            sigma2_t: 0.5,
            sigma2_h: 0.5,
            phi: 2.0,
            zeta: DVector::zeros(zdim + 1),
        }
    }

    fn spec(n: usize, truth: TruthSpec) -> SyntheticSpec {
        SyntheticSpec {
            n,
            p: 3,
            k: 2,
            q: 1,
            truth,
            coords: CoordMode::SphereUniform,
            anchor: None,
            model: ModelSpec::default(),
        }
    }

    #[test]
    fn deterministic_and_anchor_negative() {
        let s = spec(25, TruthSpec::Given(given(3, 4)));
        let a = generate_synthetic(&s, 7).unwrap();
        let b = generate_synthetic(&s, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.state.h[a.dataset.anchor_index] < 0.0);
        a.dataset.validate_structure().unwrap();
        assert_ne!(generate_synthetic(&s, 8).unwrap().dataset.y, a.dataset.y);
        let p = spec(25, TruthSpec::FromPrior(PriorSpec { coef_var: 1.0, ..PriorSpec::default() }));
        let c = generate_synthetic(&p, 3).unwrap();
        assert!(c.state.h[c.dataset.anchor_index] < 0.0);
    }

    #[test]
    fn treatment_regression_recovers_gamma() {
        let s = spec(500, TruthSpec::Given(given(3, 4)));
        let g = generate_synthetic(&s, 11).unwrap();
        let fit = fit_linear_regression(&g.dataset.zstar(), &g.dataset.t).unwrap();
        for j in 0..4 {
            let z = (fit.coefficients[j] - g.state.gamma[j]) / fit.coefficient_se[j];
            assert!(z.abs() < 3.0, "γ_{j}: {} vs {}", fit.coefficients[j], g.state.gamma[j]);
        }
    }

    #[test]
    fn y_column_means_follow_loadings() {
        let s = spec(2000, TruthSpec::Given(given(3, 4)));
        let g = generate_synthetic(&s, 5).unwrap();
        let hbar = g.state.h.mean();
        for j in 0..3 {
            let col = g.dataset.y.column(j);
            let m = col.mean();
            // Y_ij - a_j H_i has variance 0.25
            let se = (0.25f64 / 2000.0).sqrt();
            assert!((m - g.state.a[j] * hbar).abs() < 4.0 * se, "column {j}");
        }
    }

    #[test]
    fn degenerate_h_variance() {
        let mut t = given(3, 4);
        t.sigma2_h = 1e-12;
        match generate_synthetic(&spec(30, TruthSpec::Given(t.clone())), 2) {
            Ok(g) => {
                let z = g.dataset.zstar();
                let r = gps_vector(&z, &g.dataset.t, &g.state.gamma, g.state.sigma2_t).unwrap();
                let mu = h_mean(g.state.beta.as_slice(), &g.dataset.t, &r).unwrap();
                assert!((&g.state.h - mu).amax() < 1e-4);
            }
            Err(e) => assert!(matches!(e, ValidationError::RejectionStall { .. })),
        }
        // anchor pinned at a unit whose mean is far above zero
        t.beta = DVector::from_vec(vec![5.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let s = SyntheticSpec { anchor: Some(0), ..spec(10, TruthSpec::Given(t)) };
        assert!(matches!(generate_synthetic(&s, 1), Err(ValidationError::RejectionStall { .. })));
    }

    #[test]
    fn sphere_points_are_uniform_in_sine_latitude() {
        let mut rng = RngStream::new(1, 0);
        let n = 20_000;
        let north = (0..n).filter(|_| sphere_point(&mut rng).lat > 30.0).count() as f64 / n as f64;
        // area above 30°N is (1 - sin 30°)/2 = 0.25
        assert!((north - 0.25).abs() < 0.01, "{north}");
    }
}
