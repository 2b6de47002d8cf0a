//! Averaging, standardization and collinearity pruning.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use log::info;
use nalgebra::DMatrix;

use super::{DataError, RawPanel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitAverage {
    pub mean: f64,
    pub n_years: usize,
}

/// `variable -> unit -> average` over a year window.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PanelAverages {
    pub values: BTreeMap<String, BTreeMap<String, UnitAverage>>,
}

impl PanelAverages {
    pub fn get(&self, variable: &str, unit: &str) -> Option<UnitAverage> {
        self.values.get(variable).and_then(|m| m.get(unit)).copied()
    }
}

/// Means over observed years; pairs with entries in the window but no
/// observed value are returned separately in the second element.
pub(crate) fn average_window(panel: &RawPanel, years: &RangeInclusive<i32>) -> (PanelAverages, Vec<(String, String)>) {
    let mut out = PanelAverages::default();
    let mut all_missing = Vec::new();
    for ((var, unit), series) in panel.by_variable_unit() {
        let mut in_window = false;
        let (mut sum, mut n) = (0.0, 0usize);
        for &(year, value) in &series {
            if !years.contains(&year) {
                continue;
            }
            in_window = true;
            if let Some(v) = value {
                sum += v;
                n += 1;
            }
        }
        if n > 0 {
            out.values
                .entry(var.to_string())
                .or_default()
                .insert(unit.to_string(), UnitAverage { mean: sum / n as f64, n_years: n });
        } else if in_window {
            all_missing.push((unit.to_string(), var.to_string()));
        }
    }
    (out, all_missing)
}

/// Arithmetic mean over observed years in `years` for every (unit,
/// variable) pair with entries in the window.
pub fn average_panel(panel: &RawPanel, years: RangeInclusive<i32>) -> Result<PanelAverages, DataError> {
    let (avg, missing) = average_window(panel, &years);
    if let Some((unit, variable)) = missing.into_iter().next() {
        return Err(DataError::AllMissing { unit, variable });
    }
    Ok(avg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnScale {
    pub mean: f64,
    /// Population standard deviation (denominator N).
    pub sd: f64,
}

fn column_moments(col: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mut mean = col.clone().sum::<f64>() / nf;
    // second pass tightens the mean so that re-standardizing is a no-op
    mean += col.clone().map(|x| x - mean).sum::<f64>() / nf;
    let var = col.map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
    (mean, var.sqrt())
}

/// Center and scale each column to mean 0 and population sd 1.
pub fn standardize(columns: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<ColumnScale>), DataError> {
    let names: Vec<String> = (0..columns.ncols()).map(|j| format!("column {j}")).collect();
    standardize_named(columns, &names)
}

pub(crate) fn standardize_named(
    columns: &DMatrix<f64>,
    names: &[String],
) -> Result<(DMatrix<f64>, Vec<ColumnScale>), DataError> {
    let n = columns.nrows();
    let mut out = columns.clone();
    let mut scales = Vec::with_capacity(columns.ncols());
    for j in 0..columns.ncols() {
        let col = columns.column(j);
        let (mean, sd) = column_moments(col.iter().copied(), n);
        if n < 2 || !(sd > 1e-12 * mean.abs().max(f64::MIN_POSITIVE)) || !sd.is_finite() {
            return Err(DataError::ZeroVariance(names[j].clone()));
        }
        for i in 0..n {
            out[(i, j)] = (columns[(i, j)] - mean) / sd;
        }
        scales.push(ColumnScale { mean, sd });
    }
    Ok((out, scales))
}

/// Pearson correlation; 0 when either column is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let r = sxy / (sxx * syy).sqrt();
    if r.is_finite() {
        r.clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRef {
    Covariate(usize),
    Lagged(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneRecord {
    /// Index of the removed column in the original Y*.
    pub removed: usize,
    pub partner: ColumnRef,
    /// Signed correlation that triggered the removal.
    pub correlation: f64,
}

/// Greedy one-at-a-time removal of Y* columns whose largest absolute
/// correlation with X* or another remaining Y* column reaches `threshold`.
/// Returns the kept Y* columns, their original indices and the removal log.
pub fn prune_collinear(
    xstar: &DMatrix<f64>,
    ystar: &DMatrix<f64>,
    threshold: f64,
) -> Result<(DMatrix<f64>, Vec<usize>, Vec<PruneRecord>), DataError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(DataError::InvalidSpec(format!("pruning threshold {threshold} outside (0, 1]")));
    }
    if xstar.nrows() != ystar.nrows() {
        return Err(DataError::InvalidDimensions("X* and Y* row counts differ".into()));
    }
    let xcols: Vec<Vec<f64>> = xstar.column_iter().map(|c| c.iter().copied().collect()).collect();
    let ycols: Vec<Vec<f64>> = ystar.column_iter().map(|c| c.iter().copied().collect()).collect();
    let q = ycols.len();
    let rx: Vec<Vec<f64>> = ycols.iter().map(|y| xcols.iter().map(|x| pearson(y, x)).collect()).collect();
    let ry: Vec<Vec<f64>> = (0..q).map(|a| (0..q).map(|b| pearson(&ycols[a], &ycols[b])).collect()).collect();

    let mut kept: Vec<usize> = (0..q).collect();
    let mut log = Vec::new();
    loop {
        // (column, |r|, partner, r) of the current worst offender
        let mut worst: Option<(usize, f64, ColumnRef, f64)> = None;
        for &c in &kept {
            let mut best: Option<(f64, ColumnRef, f64)> = None;
            for (k, &r) in rx[c].iter().enumerate() {
                if best.is_none_or(|(b, _, _)| r.abs() > b) {
                    best = Some((r.abs(), ColumnRef::Covariate(k), r));
                }
            }
            for &o in kept.iter().filter(|&&o| o != c) {
                let r = ry[c][o];
                if best.is_none_or(|(b, _, _)| r.abs() > b) {
                    best = Some((r.abs(), ColumnRef::Lagged(o), r));
                }
            }
            let Some((abs, partner, r)) = best else { continue };
            if abs < threshold {
                continue;
            }
            // ties go to the larger index, which comes later in `kept`
            if worst.is_none_or(|(_, w, _, _)| abs >= w) {
                worst = Some((c, abs, partner, r));
            }
        }
        let Some((c, _, partner, correlation)) = worst else { break };
        info!("pruning lagged column {c}: correlation {correlation} with {partner:?}");
        kept.retain(|&k| k != c);
        log.push(PruneRecord { removed: c, partner, correlation });
    }
    let pruned = DMatrix::from_fn(ystar.nrows(), kept.len(), |i, j| ystar[(i, kept[j])]);
    Ok((pruned, kept, log))
}
