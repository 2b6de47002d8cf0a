use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use super::{DataError, RawPanel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Transform {
    #[default]
    Identity,
    Sqrt,
    Log,
    Cubic,
}

impl Transform {
    pub fn name(self) -> &'static str {
        match self {
            Transform::Identity => "identity",
            Transform::Sqrt => "sqrt",
            Transform::Log => "log",
            Transform::Cubic => "cubic",
        }
    }

    /// `None` when `x` is outside the domain.
    pub fn apply(self, x: f64) -> Option<f64> {
        match self {
            Transform::Identity => Some(x),
            Transform::Sqrt if x >= 0.0 => Some(x.sqrt()),
            Transform::Log if x > 0.0 => Some(x.ln()),
            Transform::Cubic => Some(x * x * x),
            _ => None,
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Transform {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "identity" | "none" => Ok(Transform::Identity),
            "sqrt" => Ok(Transform::Sqrt),
            "log" => Ok(Transform::Log),
            "cubic" => Ok(Transform::Cubic),
            other => Err(format!("unknown transform {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformSpec {
    pub variable: String,
    pub transform: Transform,
    /// Higher raw value means worse health; negated after `transform`.
    pub reversed: bool,
}

impl TransformSpec {
    pub fn new(variable: impl Into<String>, transform: Transform, reversed: bool) -> Self {
        TransformSpec { variable: variable.into(), transform, reversed }
    }
}

/// Apply each spec to its variable's observed values; missing stays missing.
pub fn apply_transforms(panel: &RawPanel, specs: &[TransformSpec]) -> Result<RawPanel, DataError> {
    let mut by_var: HashMap<&str, &TransformSpec> = HashMap::new();
    for s in specs {
        if by_var.insert(s.variable.as_str(), s).is_some() {
            return Err(DataError::InvalidSpec(format!("two transforms given for {}", s.variable)));
        }
    }
    panel.map_values(|e| {
        let (Some(spec), Some(x)) = (by_var.get(e.variable.as_str()), e.value) else {
            return Ok(e.value);
        };
        let y = spec.transform.apply(x).ok_or_else(|| DataError::DomainError {
            variable: e.variable.clone(),
            unit: e.unit_id.clone(),
            year: e.year,
            value: x,
            transform: spec.transform.name(),
        })?;
        Ok(Some(if spec.reversed { -y } else { y }))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PanelEntry;

    fn panel(vals: &[(&str, Option<f64>)]) -> RawPanel {
        RawPanel::from_entries(
            vals.iter()
                .enumerate()
                .map(|(i, (v, x))| PanelEntry {
                    unit_id: format!("U{i}"),
                    year: 2010,
                    variable: v.to_string(),
                    value: *x,
                })
                .collect(),
        )
        .unwrap()
    }

    fn one(x: f64, t: Transform, reversed: bool) -> f64 {
        let p = apply_transforms(&panel(&[("v", Some(x))]), &[TransformSpec::new("v", t, reversed)]).unwrap();
        p.entries()[0].value.unwrap()
    }

    #[test]
    fn arithmetic() {
        assert_eq!(one(16.0, Transform::Sqrt, false), 4.0);
        assert!((one(100.0, Transform::Log, false) - 4.605_170_185_988_091).abs() < 1e-12);
        assert_eq!(one(2.0, Transform::Cubic, false), 8.0);
        assert_eq!(one(2.0, Transform::Cubic, true), -8.0);
        assert_eq!(one(9.0, Transform::Sqrt, true), -3.0);
    }

    #[test]
    fn domain_errors_name_the_entry() {
        let p = panel(&[("v", Some(1.0)), ("v", Some(0.0))]);
        let e = apply_transforms(&p, &[TransformSpec::new("v", Transform::Log, false)]).unwrap_err();
        match e {
            DataError::DomainError { unit, year, .. } => {
                assert_eq!(unit, "U1");
                assert_eq!(year, 2010);
            }
            other => panic!("{other:?}"),
        }
        let p = panel(&[("v", Some(-1.0))]);
        assert!(apply_transforms(&p, &[TransformSpec::new("v", Transform::Sqrt, false)]).is_err());
        assert_eq!(one(0.0, Transform::Sqrt, false), 0.0);
    }

    #[test]
    fn untouched_and_missing() {
        let p = panel(&[("v", None), ("w", Some(-3.0))]);
        let out = apply_transforms(&p, &[TransformSpec::new("v", Transform::Log, false)]).unwrap();
        assert_eq!(out.entries()[0].value, None);
        assert_eq!(out.entries()[1].value, Some(-3.0));
    }

    #[test]
    fn parse_names() {
        assert_eq!("sqrt".parse::<Transform>().unwrap(), Transform::Sqrt);
        assert!("exp".parse::<Transform>().is_err());
    }
}
