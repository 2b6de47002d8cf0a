use log::{debug, info};
use nalgebra::{DMatrix, DVector};

use super::adaptive::AdaptiveMetropolis;
use super::io::Checkpoint;
use super::steps::{
    update_a, update_gamma_cutfeedback, update_h_anchor_truncated, update_h_nonanchor, update_sigma2_t, update_sigma_y,
    HPrecision,
};
use super::{McmcConfig, SamplerError};
use crate::data::Dataset;
use crate::model::{
    anchored_h_log_density, coef_log_prior, gps_vector, h_mean, ModelVariant, ParameterState, PriorSpec, N_BETA,
};
use crate::spatial::{correlation_matrix, factor_correlation, DistanceMatrix, EARTH_RADIUS_MM};
use crate::stats::special::LN_SQRT_2PI;
use crate::stats::{
    first_principal_component, fit_linear_regression, median, normal_logpdf, CholeskyFactor, RngStream,
};

/// Retained post-burn-in draws of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStore {
    pub draws: Vec<ParameterState>,
    pub scan_index: Vec<u64>,
    /// Whether the Metropolis block accepted on each retained scan.
    pub accepted: Vec<bool>,
    /// Metropolis acceptances and proposals over the whole run.
    pub acceptance_count: u64,
    pub proposals: u64,
    pub proposal_covariance: DMatrix<f64>,
    pub config: McmcConfig,
    pub anchor_index: usize,
}

impl ChainStore {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.acceptance_count as f64 / self.proposals as f64
        }
    }

    /// Draws × N matrix of H.
    pub fn h_matrix(&self) -> DMatrix<f64> {
        let n = self.draws.first().map_or(0, |d| d.h.len());
        DMatrix::from_fn(self.len(), n, |s, i| self.draws[s].h[i])
    }
}

/// Deterministic starting point computed from the data alone, with the
/// treatment-model part computed from T and Z* only.
pub fn initial_state(data: &Dataset) -> ParameterState {
    let (n, p) = (data.n(), data.p());
    let anc = data.anchor_index;
    let mut h = match (n >= 3 && p >= 2).then(|| first_principal_component(&data.y).ok()).flatten() {
        Some(pc) => {
            let sd = (pc.variance.max(1e-12)).sqrt();
            DVector::from_iterator(n, pc.scores.iter().map(|s| s / sd))
        }
        None => DVector::from_element(n, -1.0),
    };
    if h[anc] > 0.0 {
        h.neg_mut();
    }
    if !(h[anc] < -0.1) {
        h[anc] = -0.1;
    }
    let hh = h.norm_squared();
    let a = DVector::from_fn(p, |j, _| (0..n).map(|i| h[i] * data.y[(i, j)]).sum::<f64>() / hh);
    let mut sigma_y = DMatrix::identity(p, p);
    for j in 0..p {
        let rss: f64 = (0..n).map(|i| (data.y[(i, j)] - a[j] * h[i]).powi(2)).sum();
        sigma_y[(j, j)] = (rss / n as f64).max(0.1);
    }
    let z = data.zstar();
    let (gamma, sigma2_t) = match fit_linear_regression(&z, &data.t) {
        Ok(fit) if n > z.ncols() => (fit.coefficients, fit.residual_se.powi(2).max(1e-3)),
        _ => (DVector::zeros(z.ncols()), 1.0),
    };
    let hbar = h.mean();
    let sigma2_h = if n > 1 { h.iter().map(|x| (x - hbar).powi(2)).sum::<f64>() / n as f64 } else { 1.0 };
    let sigma2_h = sigma2_h.clamp(0.05, 10.0);
    let mut beta = DVector::zeros(N_BETA);
    beta[0] = hbar;
    let mut zeta = DVector::zeros(z.ncols() + 1);
    zeta[0] = hbar;
    let phi = if n > 1 {
        let d = DistanceMatrix::from_coords(&data.coords, EARTH_RADIUS_MM).map(|d| d.d).unwrap_or_default();
        let off: Vec<f64> = (0..n).flat_map(|i| (0..i).map(move |j| (i, j))).map(|(i, j)| d[(i, j)]).collect();
        let m = if off.is_empty() { 1.0 } else { median(&off) };
        if m > 0.0 {
            m / 2.0
        } else {
            1.0
        }
    } else {
        1.0
    };
    ParameterState { a, h, sigma_y, beta, gamma, sigma2_t, sigma2_h, phi, zeta }
}

/// One resumable chain.
#[derive(Debug, Clone)]
pub struct Sampler {
    pub config: McmcConfig,
    state: ParameterState,
    scan: u64,
    main: RngStream,
    treatment: RngStream,
    adapt: AdaptiveMetropolis,
    /// Authoritative Metropolis block coordinates.
    block: DVector<f64>,
    zstar: DMatrix<f64>,
    wstar: DMatrix<f64>,
    dist: Option<DistanceMatrix>,
    omega_chol: Option<CholeskyFactor>,
    precision_h: Option<DMatrix<f64>>,
    r: DVector<f64>,
}

/// RNG stream ids: outcome-side updates and treatment-model updates draw
/// from separate streams so the latter never depend on Y.
fn stream_ids(chain_id: u64) -> (u64, u64) {
    (2 * chain_id, 2 * chain_id + 1)
}

impl Sampler {
    pub fn new(config: McmcConfig, data: &Dataset) -> Result<Self, SamplerError> {
        let init = initial_state(data);
        Self::with_state(config, data, init)
    }

    pub fn with_state(config: McmcConfig, data: &Dataset, state: ParameterState) -> Result<Self, SamplerError> {
        let (m, t) = stream_ids(config.chain_id);
        let main = RngStream::new(config.seed, m);
        let treatment = RngStream::new(config.seed, t);
        let dim = block_dim(&config, data);
        let mut adapt =
            AdaptiveMetropolis::new(dim, config.adapt_start, config.proposal_scale_v, config.mixture_weight);
        adapt.narrow_sd = config.narrow_sd;
        Self::assemble(config, data, state, None, 0, main, treatment, adapt)
    }

    pub fn from_checkpoint(config: McmcConfig, data: &Dataset, ckpt: &Checkpoint) -> Result<Self, SamplerError> {
        if ckpt.adapt.dim != block_dim(&config, data) {
            return Err(SamplerError::Checkpoint("checkpoint does not match the model dimensions".into()));
        }
        Self::assemble(
            config,
            data,
            ckpt.state.clone(),
            Some(ckpt.block.clone()),
            ckpt.scan,
            RngStream::from_state(&ckpt.main_rng),
            RngStream::from_state(&ckpt.treatment_rng),
            ckpt.adapt.clone(),
        )
    }

    fn assemble(
        config: McmcConfig,
        data: &Dataset,
        mut state: ParameterState,
        block: Option<DVector<f64>>,
        scan: u64,
        main: RngStream,
        treatment: RngStream,
        adapt: AdaptiveMetropolis,
    ) -> Result<Self, SamplerError> {
        config.validate(data.p())?;
        data.validate_structure()?;
        state.check(data)?;
        let zstar = data.zstar();
        let wstar = data.wstar();
        // a fresh state is routed through block coordinates so both agree
        // bit for bit; a checkpoint already stores a consistent pair
        let block = match block {
            Some(b) if b.len() == adapt.dim => b,
            Some(_) => return Err(SamplerError::Checkpoint("block length does not match the model".into())),
            None => {
                if config.model.variant == ModelVariant::Lacsh {
                    state.zeta.fill(0.0);
                }
                let b = pack_block(&config, &state, data.anchor_index);
                unpack_block(&config, &mut state, &b, data.anchor_index);
                b
            }
        };
        let dist = match config.model.variant {
            ModelVariant::Lacsh => Some(DistanceMatrix::from_coords(&data.coords, EARTH_RADIUS_MM)?),
            ModelVariant::BaseLhfi => None,
        };
        let r = match config.model.variant {
            ModelVariant::Lacsh => gps_vector(&zstar, &data.t, &state.gamma, state.sigma2_t)?,
            ModelVariant::BaseLhfi => DVector::zeros(data.n()),
        };
        let mut s = Sampler {
            config,
            state,
            scan,
            main,
            treatment,
            adapt,
            block,
            zstar,
            wstar,
            dist,
            omega_chol: None,
            precision_h: None,
            r,
        };
        s.refresh_spatial()?;
        Ok(s)
    }

    pub fn state(&self) -> &ParameterState {
        &self.state
    }

    pub fn scans_done(&self) -> u64 {
        self.scan
    }

    pub fn adaptation(&self) -> &AdaptiveMetropolis {
        &self.adapt
    }

    /// Current GPS values R.
    pub fn gps(&self) -> &DVector<f64> {
        &self.r
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            scan: self.scan,
            state: self.state.clone(),
            main_rng: self.main.state(),
            treatment_rng: self.treatment.state(),
            adapt: self.adapt.clone(),
            block: self.block.clone(),
        }
    }

    fn refresh_spatial(&mut self) -> Result<(), SamplerError> {
        if let Some(dist) = &self.dist {
            let omega = correlation_matrix(dist, self.state.phi)?;
            let chol = factor_correlation(&omega)?;
            self.precision_h = Some(chol.inverse() / self.state.sigma2_h);
            self.omega_chol = Some(chol);
        }
        Ok(())
    }

    fn mean(&self) -> Result<DVector<f64>, SamplerError> {
        Ok(match self.config.model.variant {
            ModelVariant::Lacsh => h_mean(self.state.beta.as_slice(), &self.t_of(), &self.r)?,
            ModelVariant::BaseLhfi => &self.wstar * &self.state.zeta,
        })
    }

    fn t_of(&self) -> DVector<f64> {
        self.wstar.column(1).into_owned()
    }

    /// One full scan. `data` must match the dataset used at construction
    /// in everything except Y. Returns the Metropolis accept flag.
    pub fn scan(&mut self, data: &Dataset) -> Result<bool, SamplerError> {
        let steps = self.config.steps;
        let prior = self.config.prior.clone();
        let variant = self.config.model.variant;

        // (1) H, non-anchor sites
        if steps.h {
            let mu = self.mean()?;
            match (variant, &self.precision_h) {
                (ModelVariant::Lacsh, Some(q)) => {
                    update_h_nonanchor(&mut self.state, data, &mu, HPrecision::Dense(q), &mut self.main)?
                }
                _ => {
                    let prec = HPrecision::Diagonal(self.state.sigma2_h);
                    update_h_nonanchor(&mut self.state, data, &mu, prec, &mut self.main)?;
                    update_h_anchor_truncated(&mut self.state, data, &mu, &mut self.main)?;
                    self.sync_anchor(data.anchor_index);
                }
            }
        }
        // (2) loadings, (3) Σ_Y
        if steps.a {
            update_a(&mut self.state, data, &prior, &mut self.main)?;
        }
        if steps.sigma_y {
            update_sigma_y(&mut self.state, data, &prior, &mut self.main)?;
        }
        // (4) σ²_T, (5) γ: treatment model only
        if variant == ModelVariant::Lacsh {
            if steps.sigma2_t {
                self.state.sigma2_t =
                    update_sigma2_t(&self.zstar, &data.t, &self.state.gamma, &prior, &mut self.treatment)?;
            }
            if steps.gamma {
                self.state.gamma =
                    update_gamma_cutfeedback(&self.zstar, &data.t, self.state.sigma2_t, &prior, &mut self.treatment)?;
            }
            self.r = gps_vector(&self.zstar, &data.t, &self.state.gamma, self.state.sigma2_t)?;
        }
        // (6) Metropolis block
        let accepted = if steps.h_block { self.metropolis_block(data)? } else { false };
        self.scan += 1;
        Ok(accepted)
    }

    fn sync_anchor(&mut self, anc: usize) {
        if self.config.model.variant == ModelVariant::Lacsh {
            let d = self.block.len();
            self.block[d - 1] = self.state.h[anc];
        }
    }

    fn metropolis_block(&mut self, data: &Dataset) -> Result<bool, SamplerError> {
        let anc = data.anchor_index;
        let sy_chol = CholeskyFactor::new(&self.state.sigma_y)?;
        let ctx = BlockTarget {
            config: &self.config,
            state: &self.state,
            y_anc: DVector::from_iterator(data.p(), data.y.row(anc).iter().copied()),
            sy_chol: &sy_chol,
            t: self.wstar.column(1).into_owned(),
            r: &self.r,
            wstar: &self.wstar,
            dist: self.dist.as_ref(),
            current_log_phi: match self.config.model.variant {
                ModelVariant::Lacsh => self.block[self.block.len() - 2],
                ModelVariant::BaseLhfi => f64::NAN,
            },
            current_chol: self.omega_chol.as_ref(),
            anchor: anc,
        };
        let mut current = ctx.log_target(&self.block);
        if !current.is_finite() {
            return Err(SamplerError::Model(crate::model::ModelError::InvalidState(
                "current Metropolis block has zero target density".into(),
            )));
        }
        let mut u = self.block.clone();
        let accepted = self.adapt.step(&mut u, &mut current, |v| ctx.log_target(v), &mut self.main);
        if accepted {
            self.block = u;
            let changed = unpack_block(&self.config, &mut self.state, &self.block, anc);
            if changed {
                self.refresh_spatial()?;
            }
        }
        Ok(accepted)
    }
}

fn block_dim(config: &McmcConfig, data: &Dataset) -> usize {
    match config.model.variant {
        ModelVariant::Lacsh => config.model.outcome_terms.active().len() + 3,
        ModelVariant::BaseLhfi => data.k() + data.q() + 3,
    }
}

fn pack_block(config: &McmcConfig, s: &ParameterState, anc: usize) -> DVector<f64> {
    match config.model.variant {
        ModelVariant::Lacsh => {
            let mut v: Vec<f64> = config.model.outcome_terms.active().iter().map(|&k| s.beta[k]).collect();
            v.extend([s.sigma2_h.ln(), s.phi.ln(), s.h[anc]]);
            DVector::from_vec(v)
        }
        ModelVariant::BaseLhfi => {
            let mut v: Vec<f64> = s.zeta.iter().copied().collect();
            v.push(s.sigma2_h.ln());
            DVector::from_vec(v)
        }
    }
}

/// Write block coordinates into the state; true when σ²_H or φ changed.
fn unpack_block(config: &McmcConfig, s: &mut ParameterState, u: &DVector<f64>, anc: usize) -> bool {
    let old = (s.sigma2_h, s.phi);
    match config.model.variant {
        ModelVariant::Lacsh => {
            let active = config.model.outcome_terms.active();
            for (i, &k) in active.iter().enumerate() {
                s.beta[k] = u[i];
            }
            let m = active.len();
            s.sigma2_h = u[m].exp();
            s.phi = u[m + 1].exp();
            s.h[anc] = u[m + 2];
        }
        ModelVariant::BaseLhfi => {
            let m = s.zeta.len();
            for i in 0..m {
                s.zeta[i] = u[i];
            }
            s.sigma2_h = u[m].exp();
        }
    }
    old != (s.sigma2_h, s.phi)
}

struct BlockTarget<'a> {
    config: &'a McmcConfig,
    state: &'a ParameterState,
    y_anc: DVector<f64>,
    sy_chol: &'a CholeskyFactor,
    t: DVector<f64>,
    r: &'a DVector<f64>,
    wstar: &'a DMatrix<f64>,
    dist: Option<&'a DistanceMatrix>,
    current_log_phi: f64,
    current_chol: Option<&'a CholeskyFactor>,
    anchor: usize,
}

impl BlockTarget<'_> {
    fn log_prior_scale(prior: &PriorSpec, log_s2: f64) -> f64 {
        normal_logpdf(log_s2, prior.log_sigma2_h_mean, prior.log_sigma2_h_var).unwrap_or(f64::NEG_INFINITY)
    }

    /// Target in block coordinates; −∞ outside the support or when Ω(φ)
    /// cannot be factored.
    fn log_target(&self, u: &DVector<f64>) -> f64 {
        let prior = &self.config.prior;
        match self.config.model.variant {
            ModelVariant::Lacsh => {
                let active = self.config.model.outcome_terms.active();
                let m = active.len();
                let h_anc = u[m + 2];
                if !(h_anc < 0.0) {
                    return f64::NEG_INFINITY;
                }
                let (log_s2, log_phi) = (u[m], u[m + 1]);
                let (s2, phi) = (log_s2.exp(), log_phi.exp());
                if !(s2 > 0.0 && s2.is_finite() && phi > 0.0 && phi.is_finite()) {
                    return f64::NEG_INFINITY;
                }
                let mut beta = [0.0; N_BETA];
                for (i, &k) in active.iter().enumerate() {
                    beta[k] = u[i];
                }
                let fresh;
                let chol = if log_phi == self.current_log_phi && self.current_chol.is_some() {
                    self.current_chol.expect("checked")
                } else {
                    let Some(dist) = self.dist else { return f64::NEG_INFINITY };
                    let Ok(omega) = correlation_matrix(dist, phi) else { return f64::NEG_INFINITY };
                    match factor_correlation(&omega) {
                        Ok(c) => {
                            fresh = c;
                            &fresh
                        }
                        Err(_) => return f64::NEG_INFINITY,
                    }
                };
                let Ok(mu) = h_mean(&beta, &self.t, self.r) else { return f64::NEG_INFINITY };
                let mut h = self.state.h.clone();
                h[self.anchor] = h_anc;
                let Ok(dens) = anchored_h_log_density(&h, &mu, s2, Some(chol), self.anchor) else {
                    return f64::NEG_INFINITY;
                };
                let lp_phi = normal_logpdf(log_phi, prior.log_phi_mean, prior.log_phi_var).unwrap_or(f64::NEG_INFINITY);
                let lp = coef_log_prior(active.iter().map(|&k| &beta[k]), prior)
                    + Self::log_prior_scale(prior, log_s2)
                    + lp_phi;
                dens + lp + self.anchor_y_term(h_anc)
            }
            ModelVariant::BaseLhfi => {
                let m = self.state.zeta.len();
                let zeta = u.rows(0, m).into_owned();
                let s2 = u[m].exp();
                if !(s2 > 0.0 && s2.is_finite()) {
                    return f64::NEG_INFINITY;
                }
                let mu = self.wstar * &zeta;
                let Ok(dens) = anchored_h_log_density(&self.state.h, &mu, s2, None, self.anchor) else {
                    return f64::NEG_INFINITY;
                };
                dens + coef_log_prior(zeta.iter(), prior) + Self::log_prior_scale(prior, u[m])
            }
        }
    }

    /// `log N(y_anc; a H_anc, Σ_Y)`.
    fn anchor_y_term(&self, h_anc: f64) -> f64 {
        let p = self.y_anc.len();
        let resid = &self.y_anc - &self.state.a * h_anc;
        -(p as f64) * LN_SQRT_2PI - 0.5 * self.sy_chol.log_det() - 0.5 * self.sy_chol.quad_form_inv(&resid)
    }
}

impl Sampler {
    /// Continue until `config.n_scans`, retaining thinned post-burn-in
    /// states. A failing scan is reported with a resumable checkpoint.
    pub fn run(&mut self, data: &Dataset) -> Result<ChainStore, SamplerError> {
        let cfg = self.config.clone();
        let mut store = ChainStore {
            draws: Vec::with_capacity(cfg.retained() as usize),
            scan_index: Vec::new(),
            accepted: Vec::new(),
            acceptance_count: 0,
            proposals: 0,
            proposal_covariance: DMatrix::zeros(0, 0),
            config: cfg.clone(),
            anchor_index: data.anchor_index,
        };
        let report_every = (cfg.n_scans / 10).max(1);
        while self.scan < cfg.n_scans {
            let accepted = self.scan(data).map_err(|e| SamplerError::ChainFailed {
                scan: self.scan + 1,
                message: e.to_string(),
                checkpoint: Box::new(self.checkpoint()),
            })?;
            let s = self.scan;
            if s > cfg.burn_in && (s - cfg.burn_in).is_multiple_of(cfg.thin) {
                store.draws.push(self.state.clone());
                store.scan_index.push(s);
                store.accepted.push(accepted);
            }
            if s.is_multiple_of(report_every) {
                info!(
                    "chain {}: scan {s}/{}, Metropolis acceptance {:.3}",
                    cfg.chain_id,
                    cfg.n_scans,
                    self.adapt.acceptance_rate()
                );
            }
        }
        store.acceptance_count = self.adapt.accepted;
        store.proposals = self.adapt.scans;
        store.proposal_covariance =
            self.adapt.moments.covariance().unwrap_or_else(|| DMatrix::zeros(self.adapt.dim, self.adapt.dim));
        debug!("chain {} finished with {} draws", cfg.chain_id, store.len());
        Ok(store)
    }
}

/// Run one chain from the data-derived initial state.
pub fn run_chain(config: &McmcConfig, data: &Dataset) -> Result<ChainStore, SamplerError> {
    let mut sampler = Sampler::new(config.clone(), data)?;
    sampler.run(data)
}
