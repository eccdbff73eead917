//! Flat `key = value` configuration files. Flags override file values.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

/// Keys accepted in configuration files.
pub const KNOWN_KEYS: &[&str] = &[
    "size",
    "kind",
    "warp",
    "angles",
    "angle_min",
    "angle_max",
    "lines",
    "noise",
    "kappa_factor",
    "kappa",
    "seed",
    "method",
    "gamma",
    "epsilon",
    "tau",
    "lambda",
    "iters",
    "tol",
    "inner_iters",
    "inner_tol",
    "truncation",
    "power",
    "filter",
    "max_iter",
];

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("config line {}: expected key = value", lineno + 1))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if !KNOWN_KEYS.contains(&k) {
                return Err(CliError::Config(format!(
                    "config line {}: unknown key '{k}'",
                    lineno + 1
                )));
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(CliError::Config(format!(
                    "config line {}: duplicate key '{k}'",
                    lineno + 1
                )));
            }
        }
        Ok(Self { values })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Config(format!("config key '{key}': bad value '{v}'"))),
        }
    }

    /// Flag value if given, else the file value, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        Ok(match flag {
            Some(v) => v,
            None => self.get(key)?.unwrap_or(default),
        })
    }

    /// Flag value if given, else the file value.
    pub fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }
}
