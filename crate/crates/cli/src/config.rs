//! Flat `key = value` configuration shared by every command.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::CliError;

/// Every key the commands understand.
pub const KNOWN_KEYS: &[&str] = &[
    "train",
    "test",
    "model",
    "model_out",
    "csv",
    "report",
    "input",
    "output",
    "train_out",
    "test_out",
    "preset",
    "method",
    "initial_ratio",
    "batch_size",
    "seed",
    "lambda",
    "beta",
    "beta_grid",
    "lambda1",
    "lambda2",
    "lambda3",
    "dict_limit",
    "lasso_tol",
    "lasso_max_sweeps",
    "cg_rel_tol",
    "cg_max_iters",
    "init_max_iters",
    "init_rel_tol",
    "staged",
    "eval_ks",
    "record_timings",
    "lambda_struct",
    "delta",
    "sweep_count",
    "sweep_seed",
];

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

fn split_pair(text: &str) -> Option<(String, String)> {
    let (k, v) = text.split_once('=')?;
    let k = k.trim();
    if k.is_empty() {
        return None;
    }
    Some((k.to_string(), v.trim().to_string()))
}

impl Config {
    /// Reads `path` (if any), then applies `overrides` on top.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut cfg = Config::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::config(format!("cannot read config {}: {}", p.display(), e)))?;
            for (i, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = split_pair(line).ok_or_else(|| {
                    CliError::config(format!("{}:{}: expected key = value", p.display(), i + 1))
                })?;
                cfg.insert(k, v)?;
            }
        }
        for o in overrides {
            let (k, v) = split_pair(o).ok_or_else(|| CliError::config(format!("--set expects key=value, got '{}'", o)))?;
            cfg.insert(k, v)?;
        }
        Ok(cfg)
    }

    fn insert(&mut self, key: String, value: String) -> Result<(), CliError> {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(CliError::config(format!("unknown config key '{}'", key)));
        }
        self.values.insert(key, value);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::config(format!("invalid value '{}' for {}", v, key))),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    pub fn usize_opt(&self, key: &str) -> Result<Option<usize>, CliError> {
        self.parse(key)
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, CliError> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64, CliError> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(v) => Err(CliError::config(format!("invalid boolean '{}' for {}", v, key))),
        }
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| CliError::config(format!("invalid list entry '{}' for {}", s, key)))
                })
                .collect::<Result<Vec<T>, _>>()
                .map(Some),
        }
    }

    pub fn usize_list_or(&self, key: &str, default: &[usize]) -> Result<Vec<usize>, CliError> {
        Ok(self.list(key)?.unwrap_or_else(|| default.to_vec()))
    }

    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        Ok(self.list(key)?.unwrap_or_else(|| default.to_vec()))
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    /// A path that must be set.
    pub fn required_path(&self, key: &str) -> Result<PathBuf, CliError> {
        self.path(key).ok_or_else(|| CliError::config(format!("missing required key '{}'", key)))
    }

    /// A path that must be set and point at an existing file.
    pub fn input_path(&self, key: &str) -> Result<PathBuf, CliError> {
        let p = self.required_path(key)?;
        if !p.is_file() {
            return Err(CliError::config(format!("{} file not found: {}", key, p.display())));
        }
        Ok(p)
    }
}
