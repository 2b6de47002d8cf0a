//! Moving-block covariate balance check for the GPS: within each block of
//! units sorted by treatment, the block indicator should not depend on the
//! covariates once the GPS at the block's median treatment is included.

use log::warn;
use nalgebra::{DMatrix, DVector};

use super::AnalysisError;
use crate::data::Dataset;
use crate::stats::{
    first_principal_component, fit_linear_regression, fit_logistic_regression, normal_pdf, RegressionFit, StatsError,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceOptions {
    pub block_size: usize,
    pub overlap: usize,
    /// Keep `r(t*; u_i, v)` in the block regressions. Turning it off gives
    /// the unadjusted check used to show the diagnostic has power.
    pub include_gps: bool,
}

impl Default for BalanceOptions {
    fn default() -> Self {
        BalanceOptions { block_size: 20, overlap: 10, include_gps: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceBlock {
    pub index: usize,
    /// Position of the block's first unit in treatment order.
    pub start: usize,
    pub t_median: f64,
    /// Wald p-value of the covariate-score slope; `None` when the block
    /// regression separates or is rank deficient.
    pub p_value: Option<f64>,
}

impl BalanceBlock {
    pub fn one_minus_p(&self) -> Option<f64> {
        self.p_value.map(|p| 1.0 - p)
    }

    pub fn flagged(&self, threshold: f64) -> bool {
        self.one_minus_p().is_some_and(|q| q > threshold)
    }

    pub fn indeterminate(&self) -> bool {
        self.p_value.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceReport {
    pub blocks: Vec<BalanceBlock>,
    pub block_size: usize,
    pub overlap: usize,
    pub include_gps: bool,
    /// Linear regression of T on Z*.
    pub gps_fit: RegressionFit,
}

impl BalanceReport {
    /// Fraction of determinate blocks with `1 − p` above `threshold`.
    pub fn flagged_fraction(&self, threshold: f64) -> f64 {
        let det: Vec<&BalanceBlock> = self.blocks.iter().filter(|b| !b.indeterminate()).collect();
        if det.is_empty() {
            return f64::NAN;
        }
        det.iter().filter(|b| b.flagged(threshold)).count() as f64 / det.len() as f64
    }
}

/// `⌊(N − size)/(size − overlap)⌋ + 1`.
pub fn block_count(n: usize, block_size: usize, overlap: usize) -> Result<usize, AnalysisError> {
    if block_size <= overlap || block_size == 0 {
        return Err(AnalysisError::InvalidBlocks(format!("block size {block_size} must exceed overlap {overlap}")));
    }
    if n < block_size {
        return Err(AnalysisError::InvalidBlocks(format!("{n} units is fewer than the block size {block_size}")));
    }
    Ok((n - block_size) / (block_size - overlap) + 1)
}

pub fn covariate_balance(data: &Dataset, opts: &BalanceOptions) -> Result<BalanceReport, AnalysisError> {
    let n = data.n();
    let blocks = block_count(n, opts.block_size, opts.overlap)?;
    let z = data.zstar();
    if z.ncols() < 2 {
        return Err(AnalysisError::InvalidBlocks("balance needs at least one treatment covariate".into()));
    }
    let gps_fit = fit_linear_regression(&z, &data.t)?;
    let v2 = gps_fit.residual_se.powi(2);
    let covariates = z.columns(1, z.ncols() - 1).into_owned();
    let f = first_principal_component(&covariates)?.scores;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| data.t[a].total_cmp(&data.t[b]).then(a.cmp(&b)));
    let step = opts.block_size - opts.overlap;
    let width = if opts.include_gps { 3 } else { 2 };

    let mut out = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let start = b * step;
        let members = &order[start..start + opts.block_size];
        let mut ts: Vec<f64> = members.iter().map(|&i| data.t[i]).collect();
        ts.sort_by(f64::total_cmp);
        let t_median = crate::stats::quantile_sorted(&ts, 0.5);
        let mut indicator = DVector::zeros(n);
        members.iter().for_each(|&i| indicator[i] = 1.0);
        let mut x = DMatrix::zeros(n, width);
        for i in 0..n {
            x[(i, 0)] = 1.0;
            x[(i, 1)] = f[i];
            if opts.include_gps {
                x[(i, 2)] = normal_pdf(t_median, gps_fit.fitted[i], v2)?;
            }
        }
        let p_value = match fit_logistic_regression(&x, &indicator) {
            Ok(fit) => Some(fit.p_values[1]),
            Err(e @ (StatsError::Separation | StatsError::RankDeficient | StatsError::SingleClass)) => {
                warn!("balance block {b} (start {start}) indeterminate: {e}");
                None
            }
            Err(e) => return Err(e.into()),
        };
        out.push(BalanceBlock { index: b, start, t_median, p_value });
    }
    Ok(BalanceReport {
        blocks: out,
        block_size: opts.block_size,
        overlap: opts.overlap,
        include_gps: opts.include_gps,
        gps_fit,
    })
}
