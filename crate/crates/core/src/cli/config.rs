//! Flat `key = value` configuration with `#` comments and dotted keys.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::CliError;

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
    lines: BTreeMap<String, usize>,
    /// Directory relative paths are resolved against.
    base: PathBuf,
    used: RefCell<BTreeSet<String>>,
}

impl Config {
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        let mut lines = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", i + 1)))?;
            let k = k.trim().to_string();
            if k.is_empty() {
                return Err(CliError::Config(format!("line {}: empty key", i + 1)));
            }
            if let Some(prev) = lines.insert(k.clone(), i + 1) {
                return Err(CliError::Config(format!("line {}: key {k} already set on line {prev}", i + 1)));
            }
            values.insert(k, v.trim().to_string());
        }
        Ok(Config { values, lines, base: base.to_path_buf(), used: RefCell::new(BTreeSet::new()) })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Config::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.values.insert(key.to_string(), value);
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().insert(key.to_string());
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, CliError> {
        self.raw(key).ok_or_else(|| CliError::Config(format!("missing required key {key}")))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| self.bad(key, v)),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require_parsed<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let v = self.require(key)?;
        v.parse().map_err(|_| self.bad(key, v))
    }

    /// Comma-separated list; an absent or empty value is an empty list.
    pub fn list(&self, key: &str) -> Vec<String> {
        self.raw(key)
            .map(|v| v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect())
            .unwrap_or_default()
    }

    pub fn parsed_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError> {
        if self.raw(key).is_none() {
            return Ok(None);
        }
        self.list(key).iter().map(|s| s.parse().map_err(|_| self.bad(key, s))).collect::<Result<_, _>>().map(Some)
    }

    pub fn path(&self, key: &str) -> Result<Option<PathBuf>, CliError> {
        Ok(self.raw(key).map(|v| self.base.join(v)))
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf, CliError> {
        Ok(self.base.join(self.require(key)?))
    }

    /// All entries whose key starts with one of `prefixes`, marked used.
    pub fn entries_with_prefix(&self, prefixes: &[&str]) -> Vec<(String, String)> {
        let out: Vec<(String, String)> = self
            .values
            .iter()
            .filter(|(k, _)| prefixes.iter().any(|p| k.starts_with(p)))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        self.used.borrow_mut().extend(out.iter().map(|(k, _)| k.clone()));
        out
    }

    fn bad(&self, key: &str, v: &str) -> CliError {
        let line = self.lines.get(key).map(|l| format!(" (line {l})")).unwrap_or_default();
        CliError::Config(format!("invalid value {v:?} for {key}{line}"))
    }

    /// Fails on keys no reader asked for, which are almost always typos.
    pub fn reject_unused(&self) -> Result<(), CliError> {
        let used = self.used.borrow();
        let unknown: Vec<&String> = self.values.keys().filter(|k| !used.contains(*k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "unknown keys: {}",
                unknown.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            )))
        }
    }
}
