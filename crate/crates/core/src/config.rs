//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys a command
//! does not know are reported with a warning so that one file can be
//! shared between commands.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;

use crate::error::{Error, Result};

/// A configuration struct settable from string pairs.
pub trait KeyValue {
    /// Sets one field. Returns `Ok(false)` when the key is not recognized.
    fn set(&mut self, key: &str, value: &str) -> Result<bool>;

    /// Current values as `(key, value)` pairs, in documentation order.
    fn entries(&self) -> Vec<(&'static str, String)>;

    fn apply_pairs(&mut self, pairs: &[(String, String)]) -> Result<()> {
        for (k, v) in pairs {
            if !self.set(k, v)? {
                warn!("ignoring unknown config key {k:?}");
            }
        }
        Ok(())
    }

    fn apply_file(&mut self, path: &Path) -> Result<()> {
        let pairs = read_file(path)?;
        self.apply_pairs(&pairs)
    }

    /// Like [`KeyValue::apply_pairs`] but unknown keys are an error.
    fn apply_overrides(&mut self, pairs: &[(String, String)]) -> Result<()> {
        for (k, v) in pairs {
            if !self.set(k, v)? {
                return Err(Error::Config(format!("unknown key {k:?}")));
            }
        }
        Ok(())
    }

    fn to_kv_string(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got {raw:?}", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Parses `key=value` command-line overrides.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {s:?} is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

pub fn value<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: Display,
{
    v.parse().map_err(|e| Error::Config(format!("{key} = {v:?}: {e}")))
}

pub fn flag(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key} = {v:?}: expected true or false"))),
    }
}

/// Empty values and `none` clear an optional setting.
pub fn optional<T: FromStr>(key: &str, v: &str) -> Result<Option<T>>
where
    T::Err: Display,
{
    if v.is_empty() || v.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        value(key, v).map(Some)
    }
}

pub fn optional_path(v: &str) -> Option<PathBuf> {
    if v.is_empty() || v.eq_ignore_ascii_case("none") {
        None
    } else {
        Some(PathBuf::from(v))
    }
}

pub fn show_optional<T: Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), |v| v.to_string())
}

pub fn show_path(v: &Option<PathBuf>) -> String {
    v.as_ref()
        .map_or_else(|| "none".to_string(), |p| p.display().to_string())
}
