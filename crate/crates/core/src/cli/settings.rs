//! Configuration keys shared by several commands.

use nalgebra::{DMatrix, DVector};

use super::{CliError, Config};
use crate::data::load_units;
use crate::model::{ModelSpec, ModelVariant, OutcomeTerms, ParameterState, PriorSpec, N_BETA};
use crate::sampler::McmcConfig;
use crate::validation::{CoordMode, SyntheticSpec, TruthSpec};

/// Config `seed`, or the `--seed` override.
pub fn master_seed(cfg: &Config, seed: Option<u64>) -> Result<u64, CliError> {
    let from_cfg = cfg.get_or("seed", 1u64)?;
    Ok(seed.unwrap_or(from_cfg))
}

pub fn model_spec(cfg: &Config) -> Result<ModelSpec, CliError> {
    let d = ModelSpec::default();
    let variant = match cfg.raw("model.variant") {
        None => d.variant,
        Some(v) => ModelVariant::parse(v).ok_or_else(|| CliError::Config(format!("unknown model.variant {v:?}")))?,
    };
    let outcome_terms = match cfg.raw("model.outcome_terms") {
        None => d.outcome_terms,
        Some(v) => {
            OutcomeTerms::parse(v).ok_or_else(|| CliError::Config(format!("unknown model.outcome_terms {v:?}")))?
        }
    };
    Ok(ModelSpec { variant, outcome_terms })
}

pub fn prior_spec(cfg: &Config) -> Result<PriorSpec, CliError> {
    let d = PriorSpec::default();
    Ok(PriorSpec {
        coef_mean: cfg.get_or("prior.coef_mean", d.coef_mean)?,
        coef_var: cfg.get_or("prior.coef_var", d.coef_var)?,
        log_sigma2_h_mean: cfg.get_or("prior.log_sigma2_h_mean", d.log_sigma2_h_mean)?,
        log_sigma2_h_var: cfg.get_or("prior.log_sigma2_h_var", d.log_sigma2_h_var)?,
        log_phi_mean: cfg.get_or("prior.log_phi_mean", d.log_phi_mean)?,
        log_phi_var: cfg.get_or("prior.log_phi_var", d.log_phi_var)?,
        sigma_y_df: cfg.get("prior.sigma_y_df")?,
        sigma_y_scale: cfg.get_or("prior.sigma_y_scale", d.sigma_y_scale)?,
        sigma2_t_shape: cfg.get_or("prior.sigma2_t_shape", d.sigma2_t_shape)?,
        sigma2_t_scale: cfg.get_or("prior.sigma2_t_scale", d.sigma2_t_scale)?,
    })
}

/// Sampler settings under `prefix` (`mcmc.` for `fit`), with the master
/// seed and `d` filling unset keys. Model and prior keys are global.
pub fn mcmc_config(cfg: &Config, prefix: &str, seed: u64, d: &McmcConfig) -> Result<McmcConfig, CliError> {
    let key = |k: &str| format!("{prefix}{k}");
    Ok(McmcConfig {
        n_scans: cfg.get_or(&key("n_scans"), d.n_scans)?,
        burn_in: cfg.get_or(&key("burn_in"), d.burn_in)?,
        thin: cfg.get_or(&key("thin"), d.thin)?,
        seed,
        chain_id: 0,
        adapt_start: cfg.get_or(&key("adapt_start"), d.adapt_start)?,
        proposal_scale_v: cfg.get_or(&key("proposal_scale_v"), d.proposal_scale_v)?,
        mixture_weight: cfg.get_or(&key("mixture_weight"), d.mixture_weight)?,
        narrow_sd: cfg.get_or(&key("narrow_sd"), d.narrow_sd)?,
        model: model_spec(cfg)?,
        prior: prior_spec(cfg)?,
        steps: d.steps,
    })
}

/// Truth used when a synthetic spec asks for given values and leaves some
/// unset: moderate loadings, a negative intercept so most units sit below
/// zero, and a mild treatment effect.
pub fn default_truth(p: usize, zdim: usize, terms: OutcomeTerms) -> ParameterState {
    let mut beta = DVector::from_vec(vec![-0.5, 0.5, -0.2, 0.3, -0.1, 0.2]);
    if terms == OutcomeTerms::LinearOnly {
        for k in [2, 4, 5] {
            beta[k] = 0.0;
        }
    }
    ParameterState {
        a: DVector::from_fn(p, |j, _| [1.0, 0.8, 1.2][j % 3]),
        h: DVector::zeros(0),
        sigma_y: DMatrix::identity(p, p) * 0.25,
        beta,
        gamma: DVector::from_fn(zdim, |j, _| if j == 0 { 0.0 } else { 0.5 / j as f64 }),
        sigma2_t: 1.0,
        sigma2_h: 0.5,
        phi: 2.0,
        zeta: DVector::zeros(zdim + 1),
    }
}

fn vector_or(cfg: &Config, key: &str, default: DVector<f64>) -> Result<DVector<f64>, CliError> {
    match cfg.parsed_list::<f64>(key)? {
        None => Ok(default),
        Some(v) if v.len() == default.len() => Ok(DVector::from_vec(v)),
        Some(v) => Err(CliError::Config(format!("{key} has {} values, expected {}", v.len(), default.len()))),
    }
}

/// Synthetic-data spec under `prefix` (e.g. `simulate.`).
///
/// Keys: `n`, `p`, `k`, `q`, `anchor`, `coords` (`sphere_uniform` or
/// `fixed` with `units` giving the coordinates), and `truth` (`given`, the
/// default, or `random` to draw from the prior). Given truths read
/// `truth.a`, `truth.beta`, `truth.gamma` (lists), `truth.sigma_y`
/// (multiple of the identity), `truth.sigma2_t`, `truth.sigma2_h` and
/// `truth.phi`.
pub fn synthetic_spec(
    cfg: &Config,
    prefix: &str,
    defaults: (usize, usize, usize, usize),
) -> Result<SyntheticSpec, CliError> {
    let key = |k: &str| format!("{prefix}{k}");
    let n = cfg.get_or(&key("n"), defaults.0)?;
    let p = cfg.get_or(&key("p"), defaults.1)?;
    let k = cfg.get_or(&key("k"), defaults.2)?;
    let q = cfg.get_or(&key("q"), defaults.3)?;
    let model = model_spec(cfg)?;
    let coords = match cfg.raw(&key("coords")).unwrap_or("sphere_uniform") {
        "sphere_uniform" => CoordMode::SphereUniform,
        "fixed" => {
            let path = cfg.require_path(&key("units"))?;
            let units = load_units(&path)?;
            CoordMode::Fixed(units.iter().map(|u| u.coords).collect())
        }
        other => return Err(CliError::Config(format!("unknown {} {other:?}", key("coords")))),
    };
    let truth = match cfg.raw(&key("truth")).unwrap_or("given") {
        "random" => TruthSpec::FromPrior(prior_spec(cfg)?),
        "given" => {
            let d = default_truth(p, 1 + k + q, model.outcome_terms);
            let sy: f64 = cfg.get_or(&key("truth.sigma_y"), 0.25)?;
            TruthSpec::Given(ParameterState {
                a: vector_or(cfg, &key("truth.a"), d.a)?,
                beta: vector_or(cfg, &key("truth.beta"), d.beta)?,
                gamma: vector_or(cfg, &key("truth.gamma"), d.gamma)?,
                sigma_y: DMatrix::identity(p, p) * sy,
                sigma2_t: cfg.get_or(&key("truth.sigma2_t"), d.sigma2_t)?,
                sigma2_h: cfg.get_or(&key("truth.sigma2_h"), d.sigma2_h)?,
                phi: cfg.get_or(&key("truth.phi"), d.phi)?,
                ..d
            })
        }
        other => return Err(CliError::Config(format!("unknown {} {other:?}", key("truth")))),
    };
    if let TruthSpec::Given(s) = &truth {
        if s.beta.len() != N_BETA || !(s.sigma2_h > 0.0 && s.sigma2_t > 0.0 && s.phi > 0.0) {
            return Err(CliError::Config("truth variances and range must be positive".into()));
        }
    }
    Ok(SyntheticSpec { n, p, k, q, truth, coords, anchor: cfg.get(&key("anchor"))?, model })
}
