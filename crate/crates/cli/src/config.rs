//! Flat `key = value` run configuration. Command-line flags override the
//! file; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config `{path}`: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("config line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("unknown key `{key}` for `{command}`")]
    UnknownKey { key: String, command: String },
    #[error("invalid value for `{key}`: `{value}` ({reason})")]
    Invalid {
        key: String,
        value: String,
        reason: String,
    },
}

/// Keys every subcommand accepts.
pub const GLOBAL_KEYS: [&str; 7] = ["functional", "n", "dt", "t_max", "tol", "seed", "out"];

pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.to_string(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(ConfigError::Duplicate {
                line: i + 1,
                key: key.to_string(),
            });
        }
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_text(&text)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub functional: String,
    pub n: usize,
    pub dt: f64,
    pub t_max: f64,
    /// Command tolerance; each command documents its default.
    pub tol: Option<f64>,
    pub seed: u64,
    pub out: PathBuf,
    /// Subcommand-specific settings, still as text.
    pub options: BTreeMap<String, String>,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::Invalid {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn positive(key: &str, value: f64) -> Result<f64, ConfigError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ConfigError::Invalid {
            key: key.to_string(),
            value: value.to_string(),
            reason: "must be positive".into(),
        })
    }
}

impl RunConfig {
    /// Merges file settings with flag overrides for `command`, whose own keys
    /// are `allowed`.
    pub fn resolve(
        command: &str,
        allowed: &[&str],
        file: BTreeMap<String, String>,
        flags: BTreeMap<String, String>,
    ) -> Result<Self, ConfigError> {
        let mut merged = file;
        merged.extend(flags);
        if let Some(key) = merged
            .keys()
            .find(|k| !GLOBAL_KEYS.contains(&k.as_str()) && !allowed.contains(&k.as_str()))
        {
            return Err(ConfigError::UnknownKey {
                key: key.clone(),
                command: command.to_string(),
            });
        }
        let mut take = |key: &str| merged.remove(key);
        let functional = take("functional").unwrap_or_else(|| "sphere".into());
        let n: usize = take("n").map_or(Ok(256), |v| parse("n", &v))?;
        if n < 8 {
            return Err(ConfigError::Invalid {
                key: "n".into(),
                value: n.to_string(),
                reason: "need at least 8 grid points".into(),
            });
        }
        let dt = positive("dt", take("dt").map_or(Ok(1e-3), |v| parse("dt", &v))?)?;
        let t_max = positive("t_max", take("t_max").map_or(Ok(10.0), |v| parse("t_max", &v))?)?;
        let tol = take("tol")
            .map(|v| parse("tol", &v).and_then(|t| positive("tol", t)))
            .transpose()?;
        let seed = take("seed").map_or(Ok(0), |v| parse("seed", &v))?;
        let out = take("out").map_or_else(|| PathBuf::from("output"), PathBuf::from);
        Ok(Self {
            command: command.to_string(),
            functional,
            n,
            dt,
            t_max,
            tol,
            seed,
            out,
            options: merged,
        })
    }

    pub fn tol_or(&self, default: f64) -> f64 {
        self.tol.unwrap_or(default)
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.options.get(key).map_or(Ok(default), |v| parse(key, v))
    }

    pub fn get_positive(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        positive(key, self.get(key, default)?)
    }

    /// Comma-separated list of reals.
    pub fn get_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        match self.options.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v.split(',').map(|x| parse(key, x.trim())).collect(),
        }
    }

    pub fn get_string(&self, key: &str) -> Option<&str> {
        self.options.get(key).map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn parses_comments_and_blank_lines() {
        let m = parse_config_text("# run\nn = 64\n\ndt=0.01 # step\n").unwrap();
        assert_eq!(m, map(&[("n", "64"), ("dt", "0.01")]));
        assert!(matches!(parse_config_text("n 64"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(parse_config_text("n=1\nn=2"), Err(ConfigError::Duplicate { line: 2, .. })));
    }

    #[test]
    fn flags_win_over_the_file() {
        let cfg = RunConfig::resolve(
            "construct",
            &["a"],
            map(&[("n", "64"), ("a", "0.1")]),
            map(&[("n", "32")]),
        )
        .unwrap();
        assert_eq!(cfg.n, 32);
        assert_eq!(cfg.get_list("a", &[]).unwrap(), vec![0.1]);
        assert_eq!(cfg.dt, 1e-3);
    }

    #[test]
    fn strictness() {
        let unknown = RunConfig::resolve("spectrum", &[], map(&[("bogus", "1")]), BTreeMap::new());
        assert!(matches!(unknown, Err(ConfigError::UnknownKey { .. })));
        let negative = RunConfig::resolve("spectrum", &[], BTreeMap::new(), map(&[("dt", "-0.1")]));
        match negative {
            Err(ConfigError::Invalid { key, .. }) => assert_eq!(key, "dt"),
            other => panic!("{other:?}"),
        }
        let garbage = RunConfig::resolve("spectrum", &[], map(&[("n", "many")]), BTreeMap::new());
        assert!(matches!(garbage, Err(ConfigError::Invalid { .. })));
    }
}
