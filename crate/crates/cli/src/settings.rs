//! Flag, config-file and default merging.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

/// Resolved settings of one command: flags override the config file, which
/// overrides defaults. Every resolved value is recorded for the manifest.
pub struct Settings {
    file: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

fn normalize_key(k: &str) -> String {
    k.trim().replace('-', "_")
}

/// Parses `key = value` lines; `#` starts a comment line.
pub fn parse_config(text: &str, source: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Usage(format!("{source}:{}: expected `key = value`", i + 1)));
        };
        let key = normalize_key(k);
        if key.is_empty() {
            return Err(CliError::Usage(format!("{source}:{}: empty key", i + 1)));
        }
        if out.insert(key.clone(), v.trim().to_owned()).is_some() {
            return Err(CliError::Usage(format!("{source}:{}: duplicate key {key}", i + 1)));
        }
    }
    Ok(out)
}

impl Settings {
    /// Loads `config` (if any) and rejects keys that are not flags of the
    /// command.
    pub fn new(config: Option<&Path>, known: &BTreeSet<String>) -> Result<Self, CliError> {
        let file = match config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Core(gekc::Error::Io {
                        path: p.to_owned(),
                        source: e,
                    })
                })?;
                parse_config(&text, &p.display().to_string())?
            }
            None => BTreeMap::new(),
        };
        if let Some(bad) = file.keys().find(|k| !known.contains(*k)) {
            return Err(CliError::Usage(format!("unknown config key '{bad}'")));
        }
        Ok(Settings {
            file,
            resolved: BTreeMap::new(),
        })
    }

    fn file_value<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key {key}: {e}"))),
        }
    }

    pub fn opt<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.file_value(key)?,
        };
        if let Some(v) = &v {
            self.resolved.insert(key.to_owned(), v.to_string());
        }
        Ok(v)
    }

    pub fn get<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let v = self.opt(key, flag)?.unwrap_or(default);
        self.resolved.insert(key.to_owned(), v.to_string());
        Ok(v)
    }

    /// A switch that is on when given as a flag or set true in the file.
    pub fn switch(&mut self, key: &str, flag: bool) -> Result<bool, CliError> {
        let v = flag || self.file_value::<bool>(key)?.unwrap_or(false);
        self.resolved.insert(key.to_owned(), v.to_string());
        Ok(v)
    }

    /// Comma-separated list.
    pub fn list<T: FromStr + Display>(
        &mut self,
        key: &str,
        flag: Option<String>,
        default: &str,
    ) -> Result<Vec<T>, CliError>
    where
        T::Err: Display,
    {
        let raw = self.get(key, flag, default.to_owned())?;
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| CliError::Usage(format!("{key}: bad item '{s}': {e}")))
            })
            .collect()
    }

    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }
}
