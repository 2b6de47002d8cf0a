use std::collections::HashSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use super::DataError;
use crate::spatial::LatLon;

#[derive(Debug, Clone, PartialEq)]
pub struct UnitInfo {
    pub unit_id: String,
    pub name: String,
    pub income_group: String,
    pub coords: LatLon,
}

pub fn load_units(path: &Path) -> Result<Vec<UnitInfo>, DataError> {
    let file = File::open(path).map_err(|e| DataError::Io { path: path.display().to_string(), source: e })?;
    read_units(file)
}

/// Reads `unit_id,name,income_group,lat,lon`, keeping file order.
pub fn read_units<R: Read>(input: R) -> Result<Vec<UnitInfo>, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = reader.headers().map_err(|e| DataError::MalformedRow { line: 1, reason: e.to_string() })?.clone();
    let idx = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| DataError::UnknownColumn(name.to_string()))
    };
    let (iu, iname, ig, ilat, ilon) = (idx("unit_id")?, idx("name")?, idx("income_group")?, idx("lat")?, idx("lon")?);

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| DataError::MalformedRow {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let num = |i: usize| {
            field(i)
                .parse::<f64>()
                .map_err(|_| DataError::MalformedRow { line, reason: format!("bad coordinate {:?}", field(i)) })
        };
        let unit_id = field(iu).to_string();
        if unit_id.is_empty() {
            return Err(DataError::MalformedRow { line, reason: "empty unit_id".into() });
        }
        let coords = LatLon::new(num(ilat)?, num(ilon)?)
            .map_err(|source| DataError::Coordinate { unit: unit_id.clone(), source })?;
        if !seen.insert(unit_id.clone()) {
            return Err(DataError::DuplicateUnit(unit_id));
        }
        out.push(UnitInfo { unit_id, name: field(iname).to_string(), income_group: field(ig).to_string(), coords });
    }
    Ok(out)
}
