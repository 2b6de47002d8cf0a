//! The MCMC: Gibbs updates for H (non-anchor), a, Σ_Y, σ²_T and the
//! cut-feedback γ, then one adaptive Metropolis block over the remaining
//! H-level parameters.

mod adaptive;
mod chain;
mod io;
pub mod steps;

pub use adaptive::{AdaptiveMetropolis, ProposalKind, RunningMoments};
pub use chain::{initial_state, run_chain, ChainStore, Sampler};
pub use io::{read_chain_csv, write_chain_csv, ChainMetadata, Checkpoint, CHECKPOINT_MAGIC};

use thiserror::Error;

use crate::data::DataError;
use crate::model::{ModelError, ModelSpec, PriorSpec};
use crate::spatial::SpatialError;
use crate::stats::StatsError;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("numerical failure: {0}")]
    Stats(#[from] StatsError),
    #[error("spatial covariance: {0}")]
    Spatial(#[from] SpatialError),
    #[error("chain failed at scan {scan}: {message}")]
    ChainFailed { scan: u64, message: String, checkpoint: Box<Checkpoint> },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("chain file: {0}")]
    ChainFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which updates run each scan; everything on by default. Frozen blocks
/// keep their initial values (used by tractable test reductions).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepMask {
    pub h: bool,
    pub a: bool,
    pub sigma_y: bool,
    pub sigma2_t: bool,
    pub gamma: bool,
    pub h_block: bool,
}

impl Default for StepMask {
    fn default() -> Self {
        StepMask { h: true, a: true, sigma_y: true, sigma2_t: true, gamma: true, h_block: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McmcConfig {
    pub n_scans: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub seed: u64,
    /// Distinguishes parallel chains sharing one seed.
    pub chain_id: u64,
    pub adapt_start: u64,
    pub proposal_scale_v: f64,
    pub mixture_weight: f64,
    pub narrow_sd: f64,
    pub model: ModelSpec,
    pub prior: PriorSpec,
    pub steps: StepMask,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            n_scans: 120_000,
            burn_in: 20_000,
            thin: 10,
            seed: 1,
            chain_id: 0,
            adapt_start: 200,
            proposal_scale_v: 2.38,
            mixture_weight: 0.9,
            narrow_sd: 0.1,
            model: ModelSpec::default(),
            prior: PriorSpec::default(),
            steps: StepMask::default(),
        }
    }
}

impl McmcConfig {
    pub fn validate(&self, p: usize) -> Result<(), SamplerError> {
        let bad = |m: String| Err(SamplerError::Config(m));
        if self.burn_in >= self.n_scans {
            return bad(format!("burn_in {} must be below n_scans {}", self.burn_in, self.n_scans));
        }
        if self.thin == 0 || self.thin > self.n_scans - self.burn_in {
            return bad(format!("thin {} must lie in [1, n_scans - burn_in]", self.thin));
        }
        if !(self.proposal_scale_v > 0.0) || !(self.narrow_sd > 0.0) {
            return bad("proposal scales must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.mixture_weight) {
            return bad(format!("mixture weight {} outside [0, 1]", self.mixture_weight));
        }
        self.prior.validate(p)?;
        Ok(())
    }

    /// Number of draws a full run retains.
    pub fn retained(&self) -> u64 {
        (self.n_scans - self.burn_in) / self.thin
    }
}
