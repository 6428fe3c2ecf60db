//! Machine-readable results: `key=value` lines and JSON report files.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::ConfigFile;
use crate::error::{IoError, Result};

/// Ordered results of one command.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub library_version: String,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<ConfigFile>,
    pub results: Map<String, Value>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self {
            library_version: crate::library_version(),
            command: command.to_string(),
            config: None,
            results: Map::new(),
        }
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Into<Value>) {
        self.results.insert(key.into(), value.into());
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.results.get(key).and_then(Value::as_f64)
    }

    /// One `key=value` line per result; floats use Rust's round-trip
    /// formatting (`1.0`, `0.8125`).
    pub fn write_lines(&self, out: &mut dyn Write) -> std::io::Result<()> {
        for (k, v) in &self.results {
            match v {
                Value::Number(n) if n.is_f64() => writeln!(out, "{k}={:?}", n.as_f64().unwrap_or(f64::NAN))?,
                Value::String(s) => writeln!(out, "{k}={s}")?,
                other => writeln!(out, "{k}={other}")?,
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| IoError::file(path, e))
    }
}

/// Key for a per-radius result, e.g. `certified_accuracy@1.0`.
pub fn at(key: &str, epsilon: f64) -> String {
    format!("{key}@{epsilon:?}")
}
