//! The assembled, standardized model inputs.

use std::collections::{BTreeSet, HashSet};
use std::io::{Read, Write};
use std::ops::RangeInclusive;

use log::{info, warn};
use nalgebra::{DMatrix, DVector};

use super::prep::{average_window, pearson, standardize_named, ColumnRef};
use super::{apply_transforms, prune_collinear, ColumnScale, DataError, RawPanel, TransformSpec, UnitInfo};
use crate::spatial::LatLon;

#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationEntry {
    pub column: String,
    pub scale: ColumnScale,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedPruneRecord {
    pub removed: String,
    pub partner: String,
    pub correlation: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropRecord {
    pub unit_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Current-year metrics, N×P.
    pub y: DMatrix<f64>,
    /// Lagged-average covariates, N×K.
    pub xstar: DMatrix<f64>,
    /// Lagged-average metrics retained after pruning, N×Q.
    pub ystar: DMatrix<f64>,
    pub t: DVector<f64>,
    pub coords: Vec<LatLon>,
    pub unit_ids: Vec<String>,
    pub unit_names: Vec<String>,
    pub income_group: Vec<String>,
    pub anchor_index: usize,
    pub metric_names: Vec<String>,
    pub covariate_names: Vec<String>,
    pub lagged_names: Vec<String>,
    pub treatment_name: String,
    pub standardization_log: Vec<StandardizationEntry>,
    pub pruning_log: Vec<NamedPruneRecord>,
    pub dropped_units: Vec<DropRecord>,
}

const STD_TOL: f64 = 1e-9;

impl Dataset {
    pub fn n(&self) -> usize {
        self.y.nrows()
    }
    pub fn p(&self) -> usize {
        self.y.ncols()
    }
    pub fn k(&self) -> usize {
        self.xstar.ncols()
    }
    pub fn q(&self) -> usize {
        self.ystar.ncols()
    }

    /// Dataset from model-scale matrices with generated labels
    /// (`U1`…, `y1`…, `x1`…, `ys1`…). Values are taken as given.
    pub fn from_matrices(
        y: DMatrix<f64>,
        xstar: DMatrix<f64>,
        ystar: DMatrix<f64>,
        t: DVector<f64>,
        coords: Vec<LatLon>,
        anchor_index: usize,
    ) -> Result<Dataset, DataError> {
        let n = y.nrows();
        let names = |prefix: &str, m: usize| (1..=m).map(|j| format!("{prefix}{j}")).collect::<Vec<_>>();
        let ds = Dataset {
            metric_names: names("y", y.ncols()),
            covariate_names: names("x", xstar.ncols()),
            lagged_names: names("ys", ystar.ncols()),
            treatment_name: "t".into(),
            y,
            xstar,
            ystar,
            t,
            coords,
            unit_ids: names("U", n),
            unit_names: names("Unit ", n),
            income_group: vec!["none".into(); n],
            anchor_index,
            standardization_log: Vec::new(),
            pruning_log: Vec::new(),
            dropped_units: Vec::new(),
        };
        ds.validate_structure()?;
        Ok(ds)
    }

    /// Treatment-model design `(1, X*, Y*)`, N×(1+K+Q).
    pub fn zstar(&self) -> DMatrix<f64> {
        let (n, k, q) = (self.n(), self.k(), self.q());
        DMatrix::from_fn(n, 1 + k + q, |i, j| match j {
            0 => 1.0,
            j if j <= k => self.xstar[(i, j - 1)],
            j => self.ystar[(i, j - 1 - k)],
        })
    }

    /// Base-model design `(1, T, X*, Y*)`, N×(2+K+Q).
    pub fn wstar(&self) -> DMatrix<f64> {
        let z = self.zstar();
        DMatrix::from_fn(self.n(), z.ncols() + 1, |i, j| match j {
            0 => 1.0,
            1 => self.t[i],
            j => z[(i, j - 1)],
        })
    }

    /// Shapes, labels, coordinates and anchor. Tiny fixtures with fewer
    /// than three units pass this check but not [`Dataset::validate`].
    pub fn validate_structure(&self) -> Result<(), DataError> {
        let n = self.n();
        let bad = |m: String| Err(DataError::InvalidDimensions(m));
        if n < 1 {
            return bad("dataset has no units".into());
        }
        if self.p() < 1 {
            return bad("need at least one metric".into());
        }
        if self.q() >= self.p() {
            return bad(format!("Q = {} lagged metrics must be fewer than P = {}", self.q(), self.p()));
        }
        if self.xstar.nrows() != n || self.ystar.nrows() != n || self.t.len() != n {
            return bad("row counts of Y, X*, Y*, T differ".into());
        }
        if self.coords.len() != n
            || self.unit_ids.len() != n
            || self.unit_names.len() != n
            || self.income_group.len() != n
        {
            return bad("unit labels do not match N".into());
        }
        if self.metric_names.len() != self.p()
            || self.covariate_names.len() != self.k()
            || self.lagged_names.len() != self.q()
        {
            return bad("column names do not match matrix widths".into());
        }
        if self.anchor_index >= n {
            return bad(format!("anchor index {} outside [0, {n})", self.anchor_index));
        }
        for (c, id) in self.coords.iter().zip(&self.unit_ids) {
            c.validate().map_err(|source| DataError::Coordinate { unit: id.clone(), source })?;
        }
        let all_finite = self.y.iter().chain(self.xstar.iter()).chain(self.ystar.iter()).chain(self.t.iter());
        if all_finite.into_iter().any(|v| !v.is_finite()) {
            return bad("non-finite value in model inputs".into());
        }
        Ok(())
    }

    /// Structure plus the standardization and collinearity invariants.
    pub fn validate(&self) -> Result<(), DataError> {
        self.validate_structure()?;
        if self.n() < 3 {
            return Err(DataError::InvalidDimensions(format!("need at least 3 units, have {}", self.n())));
        }
        let n = self.n() as f64;
        let check = |name: &str, col: Vec<f64>| {
            let mean = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            if mean.abs() >= STD_TOL || (sd - 1.0).abs() >= STD_TOL {
                return Err(DataError::InvalidDimensions(format!("column {name} is not standardized")));
            }
            Ok(())
        };
        for (m, name) in
            [(&self.y, &self.metric_names), (&self.xstar, &self.covariate_names), (&self.ystar, &self.lagged_names)]
        {
            for (j, nm) in name.iter().enumerate() {
                check(nm, m.column(j).iter().copied().collect())?;
            }
        }
        check(&self.treatment_name, self.t.iter().copied().collect())?;
        let cols: Vec<Vec<f64>> =
            self.xstar.column_iter().chain(self.ystar.column_iter()).map(|c| c.iter().copied().collect()).collect();
        for a in self.k()..cols.len() {
            for b in 0..cols.len() {
                if a != b && pearson(&cols[a], &cols[b]).abs() >= 0.8 {
                    return Err(DataError::InvalidDimensions("lagged metrics remain collinear".into()));
                }
            }
        }
        Ok(())
    }

    /// Wide CSV snapshot holding everything the analysis stage needs.
    pub fn write_snapshot<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> =
            ["unit_id", "name", "income_group", "lat", "lon", "anchor"].iter().map(|s| s.to_string()).collect();
        header.push(format!("treatment:{}", self.treatment_name));
        header.extend(self.metric_names.iter().map(|m| format!("metric:{m}")));
        header.extend(self.covariate_names.iter().map(|m| format!("covariate:{m}")));
        header.extend(self.lagged_names.iter().map(|m| format!("lagged:{m}")));
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut row = vec![
                self.unit_ids[i].clone(),
                self.unit_names[i].clone(),
                self.income_group[i].clone(),
                format!("{}", self.coords[i].lat),
                format!("{}", self.coords[i].lon),
                (if i == self.anchor_index { "1" } else { "0" }).to_string(),
                format!("{}", self.t[i]),
            ];
            row.extend(self.y.row(i).iter().map(|v| format!("{v}")));
            row.extend(self.xstar.row(i).iter().map(|v| format!("{v}")));
            row.extend(self.ystar.row(i).iter().map(|v| format!("{v}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_snapshot<R: Read>(input: R) -> Result<Dataset, DataError> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let headers = r.headers().map_err(|e| DataError::MalformedRow { line: 1, reason: e.to_string() })?.clone();
        let fixed = ["unit_id", "name", "income_group", "lat", "lon", "anchor"];
        for (i, f) in fixed.iter().enumerate() {
            if headers.get(i) != Some(*f) {
                return Err(DataError::UnknownColumn(f.to_string()));
            }
        }
        let mut treatment_name = None;
        let (mut metrics, mut covs, mut lagged) = (Vec::new(), Vec::new(), Vec::new());
        let mut kinds = Vec::new();
        for h in headers.iter().skip(fixed.len()) {
            let (kind, name) = h.split_once(':').ok_or_else(|| DataError::UnknownColumn(h.to_string()))?;
            match kind {
                "treatment" => treatment_name = Some(name.to_string()),
                "metric" => metrics.push(name.to_string()),
                "covariate" => covs.push(name.to_string()),
                "lagged" => lagged.push(name.to_string()),
                _ => return Err(DataError::UnknownColumn(h.to_string())),
            }
            kinds.push(kind.to_string());
        }
        let treatment_name = treatment_name.ok_or_else(|| DataError::UnknownColumn("treatment".into()))?;
        let (mut ids, mut names, mut groups, mut coords) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let (mut t, mut yv, mut xv, mut lv) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut anchor = None;
        for (row_no, rec) in r.records().enumerate() {
            let line = row_no as u64 + 2;
            let rec = rec.map_err(|e| DataError::MalformedRow { line, reason: e.to_string() })?;
            let num = |s: &str| {
                s.parse::<f64>().map_err(|_| DataError::MalformedRow { line, reason: format!("bad number {s:?}") })
            };
            ids.push(rec[0].to_string());
            names.push(rec[1].to_string());
            groups.push(rec[2].to_string());
            coords.push(LatLon { lat: num(&rec[3])?, lon: num(&rec[4])? });
            if &rec[5] == "1" {
                anchor = Some(row_no);
            }
            for (kind, v) in kinds.iter().zip(rec.iter().skip(fixed.len())) {
                let v = num(v)?;
                match kind.as_str() {
                    "treatment" => t.push(v),
                    "metric" => yv.push(v),
                    "covariate" => xv.push(v),
                    _ => lv.push(v),
                }
            }
        }
        let n = ids.len();
        let ds = Dataset {
            y: DMatrix::from_row_slice(n, metrics.len(), &yv),
            xstar: DMatrix::from_row_slice(n, covs.len(), &xv),
            ystar: DMatrix::from_row_slice(n, lagged.len(), &lv),
            t: DVector::from_vec(t),
            coords,
            unit_ids: ids,
            unit_names: names,
            income_group: groups,
            anchor_index: anchor.ok_or_else(|| DataError::InvalidSpec("snapshot has no anchor row".into()))?,
            metric_names: metrics,
            covariate_names: covs,
            lagged_names: lagged,
            treatment_name,
            standardization_log: Vec::new(),
            pruning_log: Vec::new(),
            dropped_units: Vec::new(),
        };
        ds.validate_structure()?;
        Ok(ds)
    }

    pub fn write_pruning_report<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["order", "removed", "partner", "correlation"])?;
        for (i, r) in self.pruning_log.iter().enumerate() {
            w.write_record([(i + 1).to_string(), r.removed.clone(), r.partner.clone(), format!("{}", r.correlation)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_drop_report<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["unit_id", "reason"])?;
        for d in &self.dropped_units {
            w.write_record([&d.unit_id, &d.reason])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_standardization_report<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["column", "mean", "sd"])?;
        for s in &self.standardization_log {
            w.write_record([s.column.clone(), format!("{}", s.scale.mean), format!("{}", s.scale.sd)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// How to turn a panel into a [`Dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub metrics: Vec<String>,
    pub covariates: Vec<String>,
    /// Candidate lagged metrics before pruning.
    pub lagged_metrics: Vec<String>,
    pub treatment: String,
    pub anchor: String,
    pub current_year: i32,
    pub treatment_year: i32,
    pub lag_years: RangeInclusive<i32>,
    pub prune_threshold: f64,
    pub transforms: Vec<TransformSpec>,
}

struct Block<'a> {
    prefix: &'static str,
    names: &'a [String],
    years: RangeInclusive<i32>,
}

/// Transform, average, drop incomplete units, standardize and prune.
/// Units keep the order of `units`.
pub fn build_dataset(panel: &RawPanel, units: &[UnitInfo], spec: &DatasetSpec) -> Result<Dataset, DataError> {
    if spec.metrics.is_empty() {
        return Err(DataError::InvalidSpec("no metrics selected".into()));
    }
    let mut seen = BTreeSet::new();
    for v in spec.metrics.iter().chain(&spec.covariates).chain(std::iter::once(&spec.treatment)) {
        if !seen.insert(v) {
            return Err(DataError::InvalidSpec(format!("variable {v} used in more than one role")));
        }
    }
    if !units.iter().any(|u| u.unit_id == spec.anchor) {
        return Err(DataError::UnknownAnchor(spec.anchor.clone()));
    }
    let panel = apply_transforms(panel, &spec.transforms)?;
    let treatment = [spec.treatment.clone()];
    let blocks = [
        Block { prefix: "metric", names: &spec.metrics, years: spec.current_year..=spec.current_year },
        Block { prefix: "treatment", names: &treatment, years: spec.treatment_year..=spec.treatment_year },
        Block { prefix: "covariate", names: &spec.covariates, years: spec.lag_years.clone() },
        Block { prefix: "lagged", names: &spec.lagged_metrics, years: spec.lag_years.clone() },
    ];

    // values[block][unit][column]
    let mut values: Vec<Vec<Vec<Option<f64>>>> = Vec::new();
    for b in &blocks {
        let (avg, _) = average_window(&panel, &b.years);
        values.push(
            units.iter().map(|u| b.names.iter().map(|v| avg.get(v, &u.unit_id).map(|a| a.mean)).collect()).collect(),
        );
    }

    let panel_units: BTreeSet<&str> = panel.entries().iter().map(|e| e.unit_id.as_str()).collect();
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for (ui, u) in units.iter().enumerate() {
        let mut missing = Vec::new();
        for (bi, b) in blocks.iter().enumerate() {
            for (ci, v) in b.names.iter().enumerate() {
                if values[bi][ui][ci].is_none() {
                    missing.push(format!("{}:{v}", b.prefix));
                }
            }
        }
        if missing.is_empty() {
            keep.push(ui);
        } else {
            let reason = format!("missing {}", missing.join(" "));
            warn!("dropping unit {}: {reason}", u.unit_id);
            dropped.push(DropRecord { unit_id: u.unit_id.clone(), reason });
        }
    }
    let known: BTreeSet<&str> = units.iter().map(|u| u.unit_id.as_str()).collect();
    for id in panel_units.difference(&known) {
        dropped.push(DropRecord { unit_id: id.to_string(), reason: "not in units table".into() });
    }
    let anchor_index = keep
        .iter()
        .position(|&ui| units[ui].unit_id == spec.anchor)
        .ok_or_else(|| DataError::AnchorDropped(spec.anchor.clone()))?;

    let n = keep.len();
    let matrix = |bi: usize| {
        let w = blocks[bi].names.len();
        DMatrix::from_fn(n, w, |i, j| values[bi][keep[i]][j].expect("complete unit"))
    };
    let mut standardization_log = Vec::new();
    let mut std_block = |bi: usize| -> Result<DMatrix<f64>, DataError> {
        let names: Vec<String> = blocks[bi].names.iter().map(|v| format!("{}:{v}", blocks[bi].prefix)).collect();
        let (z, scales) = standardize_named(&matrix(bi), &names)?;
        standardization_log
            .extend(names.into_iter().zip(scales).map(|(column, scale)| StandardizationEntry { column, scale }));
        Ok(z)
    };
    if n < 3 {
        return Err(DataError::InvalidDimensions(format!("only {n} complete units")));
    }
    let y = std_block(0)?;
    let t = std_block(1)?;
    let xstar = std_block(2)?;
    let ystar_all = std_block(3)?;

    let (ystar, kept, raw_log) = prune_collinear(&xstar, &ystar_all, spec.prune_threshold)?;
    let pruning_log = raw_log
        .iter()
        .map(|r| NamedPruneRecord {
            removed: spec.lagged_metrics[r.removed].clone(),
            partner: match r.partner {
                ColumnRef::Covariate(k) => format!("covariate:{}", spec.covariates[k]),
                ColumnRef::Lagged(q) => format!("lagged:{}", spec.lagged_metrics[q]),
            },
            correlation: r.correlation,
        })
        .collect::<Vec<_>>();
    if pruning_log.is_empty() {
        info!("collinearity screen removed nothing");
    }
    let lagged_names: Vec<String> = kept.iter().map(|&q| spec.lagged_metrics[q].clone()).collect();
    let keep_cols: HashSet<&str> = lagged_names.iter().map(String::as_str).collect();
    standardization_log.retain(|e| e.column.strip_prefix("lagged:").is_none_or(|name| keep_cols.contains(name)));

    let ds = Dataset {
        y,
        xstar,
        ystar,
        t: DVector::from_iterator(n, t.iter().copied()),
        coords: keep.iter().map(|&i| units[i].coords).collect(),
        unit_ids: keep.iter().map(|&i| units[i].unit_id.clone()).collect(),
        unit_names: keep.iter().map(|&i| units[i].name.clone()).collect(),
        income_group: keep.iter().map(|&i| units[i].income_group.clone()).collect(),
        anchor_index,
        metric_names: spec.metrics.clone(),
        covariate_names: spec.covariates.clone(),
        lagged_names,
        treatment_name: spec.treatment.clone(),
        standardization_log,
        pruning_log,
        dropped_units: dropped,
    };
    ds.validate()?;
    Ok(ds)
}
