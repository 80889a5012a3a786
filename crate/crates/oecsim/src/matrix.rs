//! Experiment matrix files.
//!
//! A matrix file is a scenario file plus three kinds of extra keys:
//!
//! ```text
//! matrix.technologies = BLE5, WIZE@2400, WIZE@6400
//! matrix.speeds = 30, 50, 70
//! cell.ble5-50.disruption.windows = 50..75
//! ```
//!
//! Every technology is crossed with every speed. Cells are named
//! `<technology>[<rate>]-<speed>` in lower case (`ble5-30`, `wize2400-70`)
//! and run in file order, technologies outer. Keys without a `matrix.` or
//! `cell.` prefix apply to every cell; `cell.<name>.<key>` applies to one.

use std::path::Path;

use oecsim_core::radio::Technology;
use oecsim_core::Scenario;

use crate::config::{parse_entries, scenario_from_entries, ConfigError, Entries, Entry};

pub const PAPER_MATRIX: &str = include_str!("../calibration/paper.matrix");

#[derive(Debug, Clone, PartialEq)]
pub struct CellSpec {
    pub name: String,
    pub technology: Technology,
    /// Token as written, e.g. `2400`.
    pub data_rate: Option<String>,
    pub speed: String,
}

fn bad(entries: &Entries, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        line: entries.get(key).map_or(0, |e| e.line),
        key: key.to_string(),
        message: message.into(),
    }
}

fn list<'a>(entries: &'a Entries, key: &'static str) -> Result<Vec<&'a str>, ConfigError> {
    let e = entries.get(key).ok_or(ConfigError::Missing(key))?;
    let items: Vec<&str> = e.value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(bad(entries, key, "empty list"));
    }
    Ok(items)
}

/// The cells a matrix file defines, in run order.
pub fn cells(entries: &Entries) -> Result<Vec<CellSpec>, ConfigError> {
    let mut out = Vec::new();
    for tech in list(entries, "matrix.technologies")? {
        let (t, rate) = match tech.split_once('@') {
            Some((t, r)) => (t.trim(), Some(r.trim().to_string())),
            None => (tech, None),
        };
        let technology: Technology = t
            .parse()
            .map_err(|e| bad(entries, "matrix.technologies", format!("{e}")))?;
        for speed in list(entries, "matrix.speeds")? {
            speed
                .parse::<f64>()
                .map_err(|e| bad(entries, "matrix.speeds", format!("`{speed}`: {e}")))?;
            let name = format!(
                "{}{}-{}",
                technology.as_str().to_lowercase(),
                rate.as_deref().unwrap_or(""),
                speed
            );
            if out.iter().any(|c: &CellSpec| c.name == name) {
                return Err(bad(entries, "matrix.technologies", format!("cell `{name}` listed twice")));
            }
            out.push(CellSpec {
                name,
                technology,
                data_rate: rate.clone(),
                speed: speed.to_string(),
            });
        }
    }
    Ok(out)
}

const PER_CELL: &[&str] = &["technology", "data_rate", "speed"];

pub fn expand_entries(entries: &Entries, base_dir: Option<&Path>) -> Result<Vec<Scenario>, ConfigError> {
    let specs = cells(entries)?;
    let mut shared = Entries::new();
    let mut overrides: Vec<(&str, &str, &Entry)> = Vec::new();
    for (key, e) in entries {
        if let Some(rest) = key.strip_prefix("cell.") {
            let (cell, sub) = rest.split_once('.').ok_or_else(|| ConfigError::Syntax {
                line: e.line,
                message: format!("expected `cell.<name>.<key>`, got `{key}`"),
            })?;
            if !specs.iter().any(|c| c.name == cell) {
                return Err(bad(entries, key, format!("no cell named `{cell}`")));
            }
            overrides.push((cell, sub, e));
        } else if key.starts_with("matrix.") {
            if key != "matrix.technologies" && key != "matrix.speeds" {
                return Err(ConfigError::UnknownKey {
                    line: e.line,
                    key: key.clone(),
                });
            }
        } else if PER_CELL.contains(&key.as_str()) {
            return Err(bad(entries, key, "set per cell by matrix.technologies / matrix.speeds"));
        } else {
            shared.insert(key.clone(), e.clone());
        }
    }

    let synth = |v: &str| Entry {
        value: v.to_string(),
        line: 0,
    };
    let mut out = Vec::with_capacity(specs.len());
    for spec in &specs {
        let mut cell = shared.clone();
        cell.insert("name".into(), synth(&spec.name));
        cell.insert("technology".into(), synth(spec.technology.as_str()));
        cell.insert("speed".into(), synth(&spec.speed));
        if let Some(r) = &spec.data_rate {
            cell.insert("data_rate".into(), synth(r));
        }
        for (name, sub, e) in &overrides {
            if *name == spec.name {
                cell.insert(sub.to_string(), (*e).clone());
            }
        }
        out.push(scenario_from_entries(&cell, base_dir)?);
    }
    Ok(out)
}

pub fn parse_matrix(text: &str, base_dir: Option<&Path>) -> Result<Vec<Scenario>, ConfigError> {
    expand_entries(&parse_entries(text)?, base_dir)
}

pub fn load_matrix(path: &Path) -> Result<Vec<Scenario>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_matrix(&text, path.parent())
}

/// The shipped field-test matrix.
pub fn paper_matrix() -> Vec<Scenario> {
    parse_matrix(PAPER_MATRIX, None).expect("shipped matrix is valid")
}
