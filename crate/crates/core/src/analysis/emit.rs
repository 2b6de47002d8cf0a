//! Tidy CSV output, one row per plotted point or table entry.

use std::io::Write;

use super::{AnalysisError, BalanceReport, DoseResponseCurve, RankEntry, ResidualRow, RhoPoint, SummaryTable};

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub fn write_summary_csv<W: Write>(table: &SummaryTable, out: W) -> Result<(), AnalysisError> {
    let mut w = writer(out);
    let mut header = vec!["parameter".to_string()];
    header.extend(table.probabilities.iter().map(|p| format!("q{p}")));
    header.extend(["mean".to_string(), "ess".into()]);
    w.write_record(&header)?;
    for r in &table.rows {
        let mut rec = vec![r.name.clone()];
        rec.extend(r.quantiles.iter().map(f64::to_string));
        rec.push(r.mean.to_string());
        rec.push(r.ess.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ranking_csv<W: Write>(ranking: &[RankEntry], out: W) -> Result<(), AnalysisError> {
    let mut w = writer(out);
    w.write_record(["rank", "unit_id", "name", "income_group", "median", "q0.05", "q0.95"])?;
    for e in ranking {
        w.write_record([
            e.rank.to_string(),
            e.unit_id.clone(),
            e.name.clone(),
            e.income_group.clone(),
            e.median.to_string(),
            e.lower.to_string(),
            e.upper.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `series,curve,t,value`; `series` is `median`, `q0.05`, `q0.95`
/// or `draw`, and `curve` is the scan of a thinned draw (empty otherwise).
pub fn write_dose_response_csv<W: Write>(c: &DoseResponseCurve, out: W) -> Result<(), AnalysisError> {
    let mut w = writer(out);
    w.write_record(["series", "curve", "t", "value"])?;
    for (name, ys) in [("median", &c.median), ("q0.05", &c.lower), ("q0.95", &c.upper)] {
        for (t, y) in c.t_grid.iter().zip(ys.iter()) {
            w.write_record([name.to_string(), String::new(), t.to_string(), y.to_string()])?;
        }
    }
    for (r, scan) in c.curve_scans.iter().enumerate() {
        for (k, t) in c.t_grid.iter().enumerate() {
            w.write_record(["draw".to_string(), scan.to_string(), t.to_string(), c.curves[(r, k)].to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_balance_csv<W: Write>(r: &BalanceReport, out: W) -> Result<(), AnalysisError> {
    let mut w = writer(out);
    w.write_record(["block", "start", "t_median", "p_value", "one_minus_p", "flag_0.9", "flag_0.95", "indeterminate"])?;
    for b in &r.blocks {
        w.write_record([
            b.index.to_string(),
            b.start.to_string(),
            b.t_median.to_string(),
            opt(b.p_value),
            opt(b.one_minus_p()),
            u8::from(b.flagged(0.9)).to_string(),
            u8::from(b.flagged(0.95)).to_string(),
            u8::from(b.indeterminate()).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rho_curve_csv<W: Write>(pts: &[RhoPoint], out: W) -> Result<(), AnalysisError> {
    let mut w = writer(out);
    w.write_record(["distance", "median", "q0.05", "q0.95"])?;
    for p in pts {
        w.write_record([p.distance.to_string(), p.median.to_string(), p.lower.to_string(), p.upper.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_residuals_csv<W: Write>(rows: &[ResidualRow], out: W) -> Result<(), AnalysisError> {
    let mut w = writer(out);
    w.write_record(["unit_id", "lat", "lon", "residual"])?;
    for r in rows {
        w.write_record([r.unit_id.clone(), r.lat.to_string(), r.lon.to_string(), r.residual.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
