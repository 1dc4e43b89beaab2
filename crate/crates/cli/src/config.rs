//! Flat `key = value` configuration with dotted task sections.

use std::collections::BTreeMap;
use std::fmt;

use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Int,
    Float,
    Bool,
    Str,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v:e}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Str(v) => write!(f, "{v:?}"),
        }
    }
}

/// Every accepted key with its type.
pub const SCHEMA: &[(&str, Kind)] = &[
    ("task", Kind::Str),
    ("model", Kind::Str),
    ("N", Kind::Int),
    ("X", Kind::Float),
    ("mu", Kind::Float),
    ("ricci", Kind::Str),
    ("perturb", Kind::Str),
    ("seed", Kind::Int),
    ("out", Kind::Str),
    ("jobs", Kind::Int),
    ("tol.newton", Kind::Float),
    ("continuity.spectral", Kind::Bool),
    ("flow.T", Kind::Float),
    ("flow.dt", Kind::Float),
    ("flow.init", Kind::Str),
    ("distance.u", Kind::Str),
    ("distance.v", Kind::Str),
    ("geodesic.u", Kind::Str),
    ("geodesic.v", Kind::Str),
    ("geodesic.K", Kind::Int),
    ("orbit.eta", Kind::Str),
    ("orbit.window", Kind::Float),
    ("orbit.steps", Kind::Int),
    ("mt.rays", Kind::Int),
    ("mt.steps", Kind::Int),
    ("alpha.family", Kind::Str),
    ("alpha.beta", Kind::Str),
    ("alpha.a_max", Kind::Float),
    ("alpha.count", Kind::Int),
    ("functionals.phi", Kind::Str),
    ("acceptance.only", Kind::Str),
];

/// Keys that do not change numerical output and stay out of the hash.
const UNHASHED: &[&str] = &["out", "jobs"];

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn kind_of(key: &str) -> Option<Kind> {
    SCHEMA.iter().find(|(k, _)| *k == key).map(|(_, t)| *t)
}

/// Resolved settings: file values overridden by flags.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, Value>,
}

impl Settings {
    /// Parses a config file body. Nested tables are flattened to dotted keys.
    pub fn parse(text: &str) -> Result<Settings, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError(e.message().to_string()))?;
        let mut out = Settings::default();
        flatten("", &table, &mut out)?;
        Ok(out)
    }

    /// Sets `key` from a flag value, checking the schema.
    pub fn set(&mut self, key: &str, value: Value) -> Result<(), ConfigError> {
        let kind = kind_of(key).ok_or_else(|| ConfigError(format!("unknown key '{key}'")))?;
        let value = match (kind, value) {
            (Kind::Float, Value::Int(v)) => Value::Float(v as f64),
            (Kind::Int, v @ Value::Int(_)) | (Kind::Float, v @ Value::Float(_)) | (Kind::Bool, v @ Value::Bool(_)) | (Kind::Str, v @ Value::Str(_)) => v,
            (k, v) => return Err(ConfigError(format!("key '{key}' expects {k:?}, got {v}"))),
        };
        self.values.insert(key.to_string(), value);
        Ok(())
    }

    pub fn overlay(&mut self, other: &Settings) {
        for (k, v) in &other.values {
            self.values.insert(k.clone(), v.clone());
        }
    }

    pub fn int(&self, key: &str) -> Option<i64> {
        match self.values.get(key) {
            Some(Value::Int(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn float(&self, key: &str) -> Option<f64> {
        match self.values.get(key) {
            Some(Value::Float(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn boolean(&self, key: &str) -> Option<bool> {
        match self.values.get(key) {
            Some(Value::Bool(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn string(&self, key: &str) -> Option<&str> {
        match self.values.get(key) {
            Some(Value::Str(v)) => Some(v),
            _ => None,
        }
    }

    /// Canonical `key = value` lines of the hashed keys, sorted.
    pub fn canonical(&self) -> String {
        self.values.iter().filter(|(k, _)| !UNHASHED.contains(&k.as_str())).map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// First 16 hex digits of the SHA-256 of [`Settings::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Settings) -> Result<(), ConfigError> {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        let value = match v {
            toml::Value::Table(t) => {
                flatten(&key, t, out)?;
                continue;
            }
            toml::Value::Integer(i) => Value::Int(*i),
            toml::Value::Float(f) => Value::Float(*f),
            toml::Value::Boolean(b) => Value::Bool(*b),
            toml::Value::String(s) => Value::Str(s.clone()),
            other => return Err(ConfigError(format!("key '{key}' has unsupported value {other}"))),
        };
        out.set(&key, value)?;
    }
    Ok(())
}
