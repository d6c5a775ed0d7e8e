//! Flat key=value run configuration files with CLI flag overrides.
//!
//! A config file holds one `key = value` pair per line (`#` comments, blank
//! lines allowed); keys match the long CLI flag names with `-` replaced by
//! `_`. Precedence: explicit CLI flag, then config file, then the built-in
//! default, so a config file is a diff-able record of an experiment.

use anyhow::{bail, Context, Result};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    map: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&PathBuf>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("config {}:{}: expected 'key = value'", path.display(), i + 1);
            };
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { map })
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => match raw.parse::<T>() {
                Ok(v) => Ok(Some(v)),
                Err(e) => bail!("config key '{key}' = '{raw}': {e}"),
            },
        }
    }

    /// CLI flag > config file > default.
    pub fn resolve<T: FromStr>(&self, cli: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(cli.or(self.parse(key)?).unwrap_or(default))
    }

    /// CLI flag > config file; error when neither is present.
    pub fn require<T: FromStr>(&self, cli: Option<T>, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match cli.or(self.parse(key)?) {
            Some(v) => Ok(v),
            None => bail!("missing required parameter '{key}' (flag or config file)"),
        }
    }

    /// Optional: CLI flag > config file > None.
    pub fn optional<T: FromStr>(&self, cli: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        Ok(cli.or(self.parse(key)?))
    }

    pub fn optional_path(&self, cli: Option<PathBuf>, key: &str) -> Option<PathBuf> {
        cli.or_else(|| self.map.get(key).map(PathBuf::from))
    }

    pub fn require_path(&self, cli: Option<PathBuf>, key: &str) -> Result<PathBuf> {
        match self.optional_path(cli, key) {
            Some(p) => Ok(p),
            None => bail!("missing required path '{key}' (flag or config file)"),
        }
    }
}

pub fn check_exists(path: &Path) -> Result<()> {
    if !path.exists() {
        bail!("input file {} does not exist", path.display());
    }
    Ok(())
}
