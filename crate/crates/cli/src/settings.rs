//! Flag and config-file resolution.
//!
//! Every option is a `key = value` string until a command asks for it with a
//! typed getter; the getter applies the default, parses, and records the
//! resolved value so the manifest can reproduce the run.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use wzlri_core::harness::nearest_dyadic;

use crate::CliError;

pub const KEYS: &[&str] = &[
    "scheme",
    "T",
    "tau",
    "delta",
    "R",
    "N",
    "lambda",
    "seed",
    "samples",
    "data",
    "data-seed",
    "norm-s",
    "workers",
    "out",
    "tau-ref",
    "n-ref",
    "h-fine",
    "path-source",
    "raw",
    "scale",
];

/// How a decimal time is brought onto an admissible value.
#[derive(Debug, Clone, Copy)]
pub enum Snap {
    /// Nearest multiple of the fine grid spacing.
    Grid(f64),
    /// Nearest `T·2^{-j}`.
    Dyadic(f64),
}

/// Parses `a^b` exactly or a decimal; the flag says whether it was a power literal.
pub fn parse_time_literal(text: &str) -> Result<(f64, bool), CliError> {
    let text = text.trim();
    let bad = || CliError::Usage(format!("cannot read time '{text}'"));
    let (value, exact) = match text.split_once('^') {
        Some((base, exp)) => {
            let base: f64 = base.trim().parse().map_err(|_| bad())?;
            let exp: f64 = exp.trim().parse().map_err(|_| bad())?;
            (base.powf(exp), true)
        }
        None => (text.parse::<f64>().map_err(|_| bad())?, false),
    };
    if !(value.is_finite() && value > 0.0) {
        return Err(CliError::Usage(format!("time '{text}' must be positive")));
    }
    Ok((value, exact))
}

pub fn snap_time(key: &str, text: &str, snap: Snap) -> Result<f64, CliError> {
    let (value, exact) = parse_time_literal(text)?;
    if exact {
        return Ok(value);
    }
    let snapped = match snap {
        Snap::Grid(h) => ((value / h).round() * h).max(h),
        Snap::Dyadic(horizon) => nearest_dyadic(value, horizon),
    };
    if (snapped - value).abs() > 1e-12 * value {
        log::warn!("{key}={text} snapped to {snapped}");
    }
    Ok(snapped)
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", n + 1)))?;
        let key = normalize_key(key.trim());
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Usage(format!("config line {}: unknown key '{key}'", n + 1)));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

fn normalize_key(key: &str) -> String {
    let key = key.trim_start_matches("--").replace('_', "-");
    match key.as_str() {
        "t" => "T".into(),
        "r" => "R".into(),
        "n" => "N".into(),
        _ => key,
    }
}

#[derive(Debug, Clone, Default)]
pub struct Resolver {
    given: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Resolver {
    /// Config values first, then flags on top.
    pub fn new(config: BTreeMap<String, String>, flags: BTreeMap<String, String>) -> Self {
        let mut given = config;
        given.extend(flags);
        Self {
            given,
            resolved: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.given.insert(key.to_string(), value.into());
    }

    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.given.get(key).map(String::as_str)
    }

    pub fn value<T>(&mut self, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match self.raw(key) {
            Some(text) => text
                .parse::<T>()
                .map_err(|e| CliError::Usage(format!("invalid --{key} '{text}': {e}")))?,
            None => default,
        };
        self.resolved.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    pub fn list<T>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let values = match self.raw(key) {
            Some(text) => text
                .split(',')
                .map(|part| {
                    part.trim()
                        .parse::<T>()
                        .map_err(|e| CliError::Usage(format!("invalid --{key} entry '{part}': {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?,
            None => default,
        };
        self.record_list(key, &values);
        Ok(values)
    }

    pub fn time(&mut self, key: &str, default: f64, snap: Snap) -> Result<f64, CliError> {
        let value = match self.raw(key) {
            Some(text) => snap_time(key, text, snap)?,
            None => default,
        };
        self.resolved.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    pub fn times(&mut self, key: &str, default: Vec<f64>, snap: Snap) -> Result<Vec<f64>, CliError> {
        let values = match self.raw(key) {
            Some(text) => text
                .split(',')
                .map(|part| snap_time(key, part, snap))
                .collect::<Result<Vec<_>, _>>()?,
            None => default,
        };
        self.record_list(key, &values);
        Ok(values)
    }

    fn record_list<T: Display>(&mut self, key: &str, values: &[T]) {
        let joined = values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        self.resolved.insert(key.to_string(), joined);
    }
}
