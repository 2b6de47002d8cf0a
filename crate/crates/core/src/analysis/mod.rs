//! Posterior summaries and diagnostics computed from retained draws.

mod balance;
mod dose;
mod emit;
mod lpml;

pub use balance::{block_count, covariate_balance, BalanceBlock, BalanceOptions, BalanceReport};
pub use dose::{default_t_grid, dose_response, is_strictly_increasing, DoseResponseCurve};
pub use emit::{
    write_balance_csv, write_dose_response_csv, write_ranking_csv, write_residuals_csv, write_rho_curve_csv,
    write_summary_csv,
};
pub use lpml::{lpml, lpml_from_log_likelihood, LpmlResult};

use nalgebra::DVector;
use thiserror::Error;

use crate::data::Dataset;
use crate::model::{base_lhfi_residuals, gps_vector, h_mean, ModelError, ModelVariant};
use crate::sampler::{ChainMetadata, ChainStore};
use crate::spatial::correlation;
use crate::stats::{median, quantile_sorted, StatsError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("chain has no retained draws")]
    EmptyChain,
    #[error("unit index {index} out of range for {n} units")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("pairwise comparison needs two distinct units, got {0} twice")]
    SameUnit(usize),
    #[error("dose-response grid is empty")]
    EmptyGrid,
    #[error("non-finite conditional predictive ordinate for units {units:?}")]
    DegenerateCpo { units: Vec<usize> },
    #[error("balance blocks: {0}")]
    InvalidBlocks(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("chain does not match the dataset: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Probabilities used for the posterior interval and median.
pub const DEFAULT_QUANTILES: [f64; 3] = [0.05, 0.5, 0.95];

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub name: String,
    pub quantiles: Vec<f64>,
    pub mean: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub probabilities: Vec<f64>,
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn row(&self, name: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

fn nonempty(chain: &ChainStore) -> Result<(), AnalysisError> {
    if chain.is_empty() {
        Err(AnalysisError::EmptyChain)
    } else {
        Ok(())
    }
}

/// Effective sample size by Geyer's initial monotone positive sequence.
/// A constant series counts every draw as effective.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return n as f64;
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    let acov =
        |lag: usize| xs[..n - lag].iter().zip(&xs[lag..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / n as f64;
    let c0 = acov(0);
    if !(c0 > 0.0) {
        return n as f64;
    }
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = (acov(lag) + acov(lag + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        tau += 2.0 * pair;
        prev = pair;
        lag += 2;
    }
    (n as f64 / tau.max(1e-12)).min(n as f64)
}

/// Type-7 quantiles, mean and ESS of every scalar parameter, in chain-file
/// column order.
pub fn summarize(chain: &ChainStore, probabilities: &[f64]) -> Result<SummaryTable, AnalysisError> {
    nonempty(chain)?;
    let meta = ChainMetadata::infer(chain).ok_or(AnalysisError::EmptyChain)?;
    let names = meta.parameter_names();
    let values: Vec<Vec<f64>> = chain.draws.iter().map(|d| meta.parameter_values(d)).collect();
    let rows = names
        .into_iter()
        .enumerate()
        .map(|(c, name)| {
            let col: Vec<f64> = values.iter().map(|v| v[c]).collect();
            let mut sorted = col.clone();
            sorted.sort_by(f64::total_cmp);
            SummaryRow {
                name,
                quantiles: probabilities.iter().map(|&p| quantile_sorted(&sorted, p)).collect(),
                mean: col.iter().sum::<f64>() / col.len() as f64,
                ess: effective_sample_size(&col),
            }
        })
        .collect();
    Ok(SummaryTable { probabilities: probabilities.to_vec(), rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    /// 1-based.
    pub rank: usize,
    pub unit_index: usize,
    pub unit_id: String,
    pub name: String,
    pub income_group: String,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Units by posterior median of H, best first; equal medians keep
/// ascending unit order. Intervals are the 5% and 95% quantiles.
pub fn rank_health(chain: &ChainStore, data: &Dataset) -> Result<Vec<RankEntry>, AnalysisError> {
    nonempty(chain)?;
    let n = data.n();
    if chain.draws[0].h.len() != n {
        return Err(AnalysisError::Mismatch(format!("{} H columns for {n} units", chain.draws[0].h.len())));
    }
    let mut entries: Vec<RankEntry> = (0..n)
        .map(|i| {
            let mut col: Vec<f64> = chain.draws.iter().map(|d| d.h[i]).collect();
            col.sort_by(f64::total_cmp);
            RankEntry {
                rank: 0,
                unit_index: i,
                unit_id: data.unit_ids[i].clone(),
                name: data.unit_names[i].clone(),
                income_group: data.income_group[i].clone(),
                median: quantile_sorted(&col, 0.5),
                lower: quantile_sorted(&col, 0.05),
                upper: quantile_sorted(&col, 0.95),
            }
        })
        .collect();
    entries.sort_by(|a, b| b.median.total_cmp(&a.median).then(a.unit_index.cmp(&b.unit_index)));
    for (r, e) in entries.iter_mut().enumerate() {
        e.rank = r + 1;
    }
    Ok(entries)
}

/// Posterior probability that unit `i` is healthier than unit `j`.
pub fn pairwise_superiority(chain: &ChainStore, i: usize, j: usize) -> Result<f64, AnalysisError> {
    nonempty(chain)?;
    let n = chain.draws[0].h.len();
    for index in [i, j] {
        if index >= n {
            return Err(AnalysisError::IndexOutOfRange { index, n });
        }
    }
    if i == j {
        return Err(AnalysisError::SameUnit(i));
    }
    let wins = chain.draws.iter().filter(|d| d.h[i] > d.h[j]).count();
    Ok(wins as f64 / chain.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhoPoint {
    pub distance: f64,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Posterior of `exp(-d/φ)` at each distance.
pub fn spatial_correlation_curve(chain: &ChainStore, d_grid: &[f64]) -> Result<Vec<RhoPoint>, AnalysisError> {
    nonempty(chain)?;
    Ok(d_grid
        .iter()
        .map(|&d| {
            let mut rho: Vec<f64> = chain.draws.iter().map(|s| correlation(d, s.phi)).collect();
            rho.sort_by(f64::total_cmp);
            RhoPoint {
                distance: d,
                median: quantile_sorted(&rho, 0.5),
                lower: quantile_sorted(&rho, 0.05),
                upper: quantile_sorted(&rho, 0.95),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRow {
    pub unit_id: String,
    pub lat: f64,
    pub lon: f64,
    pub residual: f64,
}

/// Posterior median of `H_i − μ_i` per unit, where μ is `W*ζ` for the base
/// variant and the GPS outcome mean for the full model.
pub fn residuals(chain: &ChainStore, data: &Dataset) -> Result<Vec<ResidualRow>, AnalysisError> {
    nonempty(chain)?;
    let n = data.n();
    if chain.draws[0].h.len() != n {
        return Err(AnalysisError::Mismatch(format!("{} H columns for {n} units", chain.draws[0].h.len())));
    }
    let values: DVector<f64> = match chain.config.model.variant {
        ModelVariant::BaseLhfi => {
            let h = chain.h_matrix();
            let w = chain.draws[0].zeta.len();
            let zeta = nalgebra::DMatrix::from_fn(chain.len(), w, |s, k| chain.draws[s].zeta[k]);
            base_lhfi_residuals(&h, data, &zeta)?
        }
        ModelVariant::Lacsh => {
            let z = data.zstar();
            let mut resid = vec![Vec::with_capacity(chain.len()); n];
            for d in &chain.draws {
                let r = gps_vector(&z, &data.t, &d.gamma, d.sigma2_t)?;
                let mu = h_mean(d.beta.as_slice(), &data.t, &r)?;
                for i in 0..n {
                    resid[i].push(d.h[i] - mu[i]);
                }
            }
            DVector::from_iterator(n, resid.iter().map(|v| median(v)))
        }
    };
    Ok((0..n)
        .map(|i| ResidualRow {
            unit_id: data.unit_ids[i].clone(),
            lat: data.coords[i].lat,
            lon: data.coords[i].lon,
            residual: values[i],
        })
        .collect())
}
