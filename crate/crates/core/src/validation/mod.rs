//! Synthetic data, brute-force oracles and simulation experiments used to
//! check the sampler and the diagnostics.

pub mod experiments;
pub mod oracle;
pub mod synthetic;

use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::data::DataError;
use crate::model::ModelError;
use crate::sampler::SamplerError;
use crate::spatial::SpatialError;
use crate::stats::StatsError;

pub use experiments::{
    balance_experiment, coverage_experiment, lpml_comparison, BalanceDesign, BalanceExperimentReport, CoverageReport,
    CoverageRow, CoverageSpec, LpmlComparison, LpmlComparisonSpec, LpmlPair, MIN_COVERAGE_REPLICATES,
};
pub use oracle::{
    grid_posterior_oracle, histogram, total_variation, GridAxis, GridPosterior, ToyPosterior, MAX_GRID_CELLS,
};
pub use synthetic::{
    generate_synthetic, generate_synthetic_stream, CoordMode, SyntheticSpec, SyntheticTruth, TruthSpec,
    MIN_ANCHOR_ACCEPTANCE,
};

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("anchor unit {anchor} has P(H < 0) = {probability:.3e}; rejection sampling would stall")]
    RejectionStall { probability: f64, anchor: usize },
    #[error("grid of {cells} cells exceeds the limit of {max}")]
    GridTooLarge { cells: usize, max: usize },
    #[error("invalid validation setup: {0}")]
    InvalidSpec(String),
    #[error("experiment needs at least one replicate")]
    NoReplicates,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
}
