//! Per-run JSON record of configuration, timing and checks.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::config::RunConfig;

/// Check keys are lowercase snake_case labels.
pub fn is_check_key(key: &str) -> bool {
    let mut chars = key.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub passed: bool,
    pub value: f64,
    pub limit: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub command: String,
    pub version: &'static str,
    pub config: RunConfig,
    pub wall_seconds: f64,
    pub checks: BTreeMap<String, Check>,
    pub metadata: BTreeMap<String, serde_json::Value>,
    pub passed: bool,
    #[serde(skip)]
    started: Option<Instant>,
}

impl RunRecord {
    pub fn new(config: RunConfig) -> Self {
        Self {
            command: config.command.clone(),
            version: env!("CARGO_PKG_VERSION"),
            config,
            wall_seconds: 0.0,
            checks: BTreeMap::new(),
            metadata: BTreeMap::new(),
            passed: true,
            started: Some(Instant::now()),
        }
    }

    /// Records `value <= limit`.
    pub fn at_most(&mut self, key: &str, value: f64, limit: f64) {
        self.push(key, value <= limit, value, Some(limit), String::new());
    }

    pub fn flag(&mut self, key: &str, passed: bool, detail: impl Into<String>) {
        self.push(key, passed, if passed { 1.0 } else { 0.0 }, None, detail.into());
    }

    pub fn push(&mut self, key: &str, passed: bool, value: f64, limit: Option<f64>, detail: String) {
        assert!(is_check_key(key), "malformed check key `{key}`");
        let previous = self.checks.insert(
            key.to_string(),
            Check {
                passed,
                value,
                limit,
                detail,
            },
        );
        assert!(previous.is_none(), "check `{key}` recorded twice");
    }

    pub fn meta(&mut self, key: &str, value: impl Serialize) {
        self.metadata.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(serde_json::Value::Null),
        );
    }

    pub fn failing(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|(_, c)| !c.passed)
            .map(|(k, _)| k.as_str())
            .collect()
    }

    pub fn finish(&mut self) {
        self.wall_seconds = self.started.map_or(0.0, |s| s.elapsed().as_secs_f64());
        self.passed = self.checks.values().all(|c| c.passed);
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(dir.join("run.json"), text + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys() {
        assert!(is_check_key("dominant_mode_decay_rate"));
        assert!(is_check_key("a1"));
        assert!(!is_check_key("Eq_4_20"));
        assert!(!is_check_key("1abc"));
        assert!(!is_check_key("rate-fit"));
        assert!(!is_check_key(""));
    }
}
