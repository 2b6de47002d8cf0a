//! Long-format panel ingestion.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use super::DataError;

/// Tokens read as an explicit missing value.
pub const MISSING_TOKENS: [&str; 2] = ["NA", ""];

#[derive(Debug, Clone, PartialEq)]
pub struct PanelEntry {
    pub unit_id: String,
    pub year: i32,
    pub variable: String,
    pub value: Option<f64>,
}

/// Long-format table of `(unit, year, variable) -> value`, unique per key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawPanel {
    entries: Vec<PanelEntry>,
}

impl RawPanel {
    pub fn from_entries(entries: Vec<PanelEntry>) -> Result<Self, DataError> {
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if !seen.insert((e.unit_id.as_str(), e.year, e.variable.as_str())) {
                return Err(DataError::DuplicateKey {
                    unit: e.unit_id.clone(),
                    year: e.year,
                    variable: e.variable.clone(),
                    line: None,
                });
            }
        }
        Ok(RawPanel { entries })
    }

    pub fn entries(&self) -> &[PanelEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub(crate) fn map_values<F>(&self, mut f: F) -> Result<RawPanel, DataError>
    where
        F: FnMut(&PanelEntry) -> Result<Option<f64>, DataError>,
    {
        let mut entries = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            entries.push(PanelEntry { value: f(e)?, ..e.clone() });
        }
        Ok(RawPanel { entries })
    }

    /// `(variable, unit) -> [(year, value)]`, each list sorted by year.
    pub(crate) fn by_variable_unit(&self) -> BTreeMap<(&str, &str), Vec<(i32, Option<f64>)>> {
        let mut map: BTreeMap<(&str, &str), Vec<(i32, Option<f64>)>> = BTreeMap::new();
        for e in &self.entries {
            map.entry((e.variable.as_str(), e.unit_id.as_str())).or_default().push((e.year, e.value));
        }
        for v in map.values_mut() {
            v.sort_by_key(|(y, _)| *y);
        }
        map
    }
}

/// Header names of the four panel columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanelSchema {
    pub unit_id: String,
    pub year: String,
    pub variable: String,
    pub value: String,
}

impl Default for PanelSchema {
    fn default() -> Self {
        PanelSchema {
            unit_id: "unit_id".into(),
            year: "year".into(),
            variable: "variable".into(),
            value: "value".into(),
        }
    }
}

pub fn load_panel(path: &Path, schema: &PanelSchema) -> Result<RawPanel, DataError> {
    let file = File::open(path).map_err(|e| DataError::Io { path: path.display().to_string(), source: e })?;
    read_panel(file, schema)
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize, DataError> {
    headers.iter().position(|h| h.trim() == name).ok_or_else(|| DataError::UnknownColumn(name.to_string()))
}

pub(crate) fn parse_value(raw: &str) -> Result<Option<f64>, String> {
    let t = raw.trim();
    if MISSING_TOKENS.contains(&t) {
        return Ok(None);
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        Ok(v) => Err(format!("non-finite value {v}")),
        Err(_) => Err(format!("cannot parse value {t:?}")),
    }
}

pub fn read_panel<R: Read>(input: R, schema: &PanelSchema) -> Result<RawPanel, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = reader.headers().map_err(|e| DataError::MalformedRow { line: 1, reason: e.to_string() })?.clone();
    let iu = column_index(&headers, &schema.unit_id)?;
    let iy = column_index(&headers, &schema.year)?;
    let iv = column_index(&headers, &schema.variable)?;
    let ix = column_index(&headers, &schema.value)?;

    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| DataError::MalformedRow {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let unit_id = field(iu).to_string();
        let variable = field(iv).to_string();
        if unit_id.is_empty() || variable.is_empty() {
            return Err(DataError::MalformedRow { line, reason: "empty unit or variable".into() });
        }
        let year = field(iy)
            .parse::<i32>()
            .map_err(|_| DataError::MalformedRow { line, reason: format!("bad year {:?}", field(iy)) })?;
        let value = parse_value(field(ix)).map_err(|reason| DataError::MalformedRow { line, reason })?;
        if !seen.insert((unit_id.clone(), year, variable.clone())) {
            return Err(DataError::DuplicateKey { unit: unit_id, year, variable, line: Some(line) });
        }
        entries.push(PanelEntry { unit_id, year, variable, value });
    }
    Ok(RawPanel { entries })
}
