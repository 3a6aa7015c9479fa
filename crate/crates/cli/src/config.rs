//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys use snake_case
//! and match the long flag names (`gamma_min` for `--gamma-min`). Values given
//! on the command line win over the file, which wins over built-in defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

pub const KEYS: &[&str] = &[
    "gamma",
    "gamma_min",
    "gamma_max",
    "steps",
    "step",
    "log",
    "tol",
    "format",
    "out",
    "bound",
    "control",
    "duration",
    "grid",
    "gtilde",
    "domain_factor",
    "dt",
    "relax_time",
    "atom_number",
    "convergence",
    "switch_points",
    "sequential",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", i + 1)))?;
            let key = key.trim().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                return Err(CliError::Config(format!("line {}: unknown key `{key}`", i + 1)));
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key `{key}`", i + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Config(format!("invalid value `{v}` for `{key}`"))),
        }
    }

    /// Command line, then file, then `default`.
    pub fn pick<T: FromStr>(&self, cli: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        match cli {
            Some(v) => Ok(v),
            None => Ok(self.get(key)?.unwrap_or(default)),
        }
    }

    pub fn pick_opt<T: FromStr>(&self, cli: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        match cli {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    /// Boolean switches can only be turned on from the command line.
    pub fn flag(&self, cli: bool, key: &str) -> Result<bool, CliError> {
        Ok(cli || self.get(key)?.unwrap_or(false))
    }

    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        let Some(v) = self.values.get(key) else { return Ok(None) };
        if v.is_empty() {
            return Ok(Some(Vec::new()));
        }
        v.split(',')
            .map(|p| p.trim().parse().map_err(|_| CliError::Config(format!("invalid number `{p}` in `{key}`"))))
            .collect::<Result<Vec<f64>, _>>()
            .map(Some)
    }
}
