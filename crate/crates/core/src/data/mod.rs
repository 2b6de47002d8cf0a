//! Panel ingestion, transformation, standardization and collinearity
//! pruning, ending in the [`Dataset`] the sampler consumes.

mod dataset;
mod panel;
mod prep;
mod transform;
mod units;

pub use dataset::{build_dataset, Dataset, DatasetSpec, DropRecord, NamedPruneRecord, StandardizationEntry};
pub use panel::{load_panel, read_panel, PanelEntry, PanelSchema, RawPanel, MISSING_TOKENS};
pub use prep::{
    average_panel, pearson, prune_collinear, standardize, ColumnRef, ColumnScale, PanelAverages, PruneRecord,
    UnitAverage,
};
pub use transform::{apply_transforms, Transform, TransformSpec};
pub use units::{load_units, read_units, UnitInfo};

use thiserror::Error;

use crate::spatial::SpatialError;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot open {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate entry for unit {unit}, year {year}, variable {variable}{}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    DuplicateKey { unit: String, year: i32, variable: String, line: Option<u64> },
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("{transform} undefined for value {value} (unit {unit}, year {year}, variable {variable})")]
    DomainError { variable: String, unit: String, year: i32, value: f64, transform: &'static str },
    #[error("no observed value for unit {unit}, variable {variable} in the averaging window")]
    AllMissing { unit: String, variable: String },
    #[error("column {0} has zero variance")]
    ZeroVariance(String),
    #[error("duplicate unit {0} in units table")]
    DuplicateUnit(String),
    #[error("anchor unit {0} is not in the data")]
    UnknownAnchor(String),
    #[error("anchor unit {0} was dropped for missing values")]
    AnchorDropped(String),
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("invalid coordinates for unit {unit}: {source}")]
    Coordinate { unit: String, source: SpatialError },
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
}
