//! Adaptive random-walk Metropolis with an empirical-covariance mixture
//! proposal.

use nalgebra::{DMatrix, DVector};

use crate::stats::{CholeskyFactor, RngStream};

/// Streaming mean and covariance (Welford).
#[derive(Debug, Clone, PartialEq)]
pub struct RunningMoments {
    pub count: u64,
    pub mean: DVector<f64>,
    /// Sum of outer products of deviations from the running mean.
    pub m2: DMatrix<f64>,
}

impl RunningMoments {
    pub fn new(dim: usize) -> Self {
        RunningMoments { count: 0, mean: DVector::zeros(dim), m2: DMatrix::zeros(dim, dim) }
    }

    pub fn push(&mut self, x: &DVector<f64>) {
        self.count += 1;
        let delta = x - &self.mean;
        self.mean += &delta / self.count as f64;
        let delta2 = x - &self.mean;
        self.m2 += &delta * delta2.transpose();
    }

    /// Sample covariance (denominator n − 1); `None` below two states.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        if self.count < 2 {
            return None;
        }
        let mut c = &self.m2 / (self.count - 1) as f64;
        crate::stats::symmetrize(&mut c);
        Some(c)
    }
}

/// Which proposal component produced a move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProposalKind {
    Narrow,
    Adapted,
    /// The adapted component was chosen but Σ_s could not be factored.
    NarrowFallback,
}

/// For scans `s ≤ adapt_start` propose `MVN(u, narrow_sd² I/d)`; afterwards
/// `w·MVN(u, v² Σ_s / d) + (1 − w)·MVN(u, narrow_sd² I/d)` with Σ_s the
/// empirical covariance of all previous block states.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveMetropolis {
    pub dim: usize,
    pub adapt_start: u64,
    pub scale_v: f64,
    pub mixture_weight: f64,
    pub narrow_sd: f64,
    /// Proposals made so far.
    pub scans: u64,
    pub accepted: u64,
    pub moments: RunningMoments,
}

impl AdaptiveMetropolis {
    pub fn new(dim: usize, adapt_start: u64, scale_v: f64, mixture_weight: f64) -> Self {
        AdaptiveMetropolis {
            dim,
            adapt_start,
            scale_v,
            mixture_weight,
            narrow_sd: 0.1,
            scans: 0,
            accepted: 0,
            moments: RunningMoments::new(dim),
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.scans == 0 {
            0.0
        } else {
            self.accepted as f64 / self.scans as f64
        }
    }

    fn narrow(&self, u: &DVector<f64>, rng: &mut RngStream) -> DVector<f64> {
        let sd = self.narrow_sd / (self.dim as f64).sqrt();
        DVector::from_fn(self.dim, |i, _| u[i] + sd * rng.normal())
    }

    /// Draw a proposal for scan `self.scans + 1`.
    pub fn propose(&self, u: &DVector<f64>, rng: &mut RngStream) -> (DVector<f64>, ProposalKind) {
        let s = self.scans + 1;
        if s <= self.adapt_start {
            return (self.narrow(u, rng), ProposalKind::Narrow);
        }
        if rng.uniform() >= self.mixture_weight {
            return (self.narrow(u, rng), ProposalKind::Narrow);
        }
        let scaled = self
            .moments
            .covariance()
            .map(|c| c * (self.scale_v * self.scale_v / self.dim as f64))
            .and_then(|c| CholeskyFactor::new(&c).ok());
        match scaled {
            Some(chol) => {
                let z = DVector::from_fn(self.dim, |_, _| rng.normal());
                (u + chol.mul_l(&z), ProposalKind::Adapted)
            }
            None => (self.narrow(u, rng), ProposalKind::NarrowFallback),
        }
    }

    /// One Metropolis step on `u` with cached `current` log target.
    /// The post-step state is added to the adaptation moments.
    pub fn step<F>(&mut self, u: &mut DVector<f64>, current: &mut f64, mut log_target: F, rng: &mut RngStream) -> bool
    where
        F: FnMut(&DVector<f64>) -> f64,
    {
        let (proposal, _) = self.propose(u, rng);
        let lp = log_target(&proposal);
        let log_u = rng.uniform().ln();
        let accept = lp.is_finite() && (log_u < lp - *current);
        if accept {
            *u = proposal;
            *current = lp;
            self.accepted += 1;
        }
        self.scans += 1;
        self.moments.push(u);
        accept
    }
}
