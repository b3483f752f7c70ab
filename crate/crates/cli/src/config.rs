//! Run configuration: a flat `key = value` file with dotted keys.
//!
//! ```text
//! # comments start with '#'
//! model.id = duffing-oscillator
//! model.alpha = 1
//! run.N = 16
//! run.tol = 1e-10
//! run.eps = 0.01, 0.001, 0.0001
//! ```

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use clap::ValueEnum;
use melnikov_core::models::{ModelConfig, ModelId};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: cannot parse `{value}`")]
    BadValue { key: String, value: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Scan,
    Zeros,
    Derivative,
    VerifySplitting,
    Diagnostics,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Scan => "scan",
            Command::Zeros => "zeros",
            Command::Derivative => "derivative",
            Command::VerifySplitting => "verify-splitting",
            Command::Diagnostics => "diagnostics",
        }
    }
}

impl FromStr for Command {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Command::value_variants()
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| ConfigError::BadValue { key: "run.command".into(), value: s.into() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn as_str(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub model: ModelConfig,
    pub n: usize,
    pub tol: f64,
    /// Decreasing perturbation sizes for `verify-splitting`.
    pub eps: Vec<f64>,
    /// Phase used by `verify-splitting` and `diagnostics`.
    pub phase: f64,
    pub format: Format,
    pub out: Option<PathBuf>,
    /// Seeds the random check phases of `diagnostics`.
    pub seed: u64,
}

impl RunConfig {
    pub fn new(command: Command, model: ModelConfig) -> Self {
        Self {
            command,
            model,
            n: 64,
            tol: 1e-10,
            eps: vec![1e-2, 1e-3, 1e-4],
            phase: FRAC_PI_2,
            format: Format::Csv,
            out: None,
            seed: 0,
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: i + 1, text: raw.to_string() })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
            }
            if kv.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ConfigError::Duplicate { line: i + 1, key: k.to_string() });
            }
        }

        let id: ModelId = kv
            .remove("model.id")
            .ok_or(ConfigError::Missing("model.id"))?
            .parse()
            .map_err(|e: melnikov_core::Error| ConfigError::Invalid(e.to_string()))?;
        let command = match kv.remove("run.command") {
            Some(c) => c.parse()?,
            None => Command::Scan,
        };
        let mut cfg = RunConfig::new(command, ModelConfig::new(id));
        for (key, value) in kv {
            let bad = || ConfigError::BadValue { key: key.clone(), value: value.clone() };
            match key.as_str() {
                "run.N" => cfg.n = value.parse().map_err(|_| bad())?,
                "run.tol" => cfg.tol = float(&value).ok_or_else(bad)?,
                "run.eps" => {
                    cfg.eps = if value.is_empty() {
                        Vec::new()
                    } else {
                        value.split(',').map(|s| float(s.trim())).collect::<Option<_>>().ok_or_else(bad)?
                    }
                }
                "run.phase" => cfg.phase = float(&value).ok_or_else(bad)?,
                "run.format" => cfg.format = <Format as ValueEnum>::from_str(&value, false).map_err(|_| bad())?,
                "run.out" => cfg.out = Some(PathBuf::from(value)),
                "run.seed" => cfg.seed = value.parse().map_err(|_| bad())?,
                k => match k.strip_prefix("model.") {
                    Some(p) if id.defaults().iter().any(|(d, _)| *d == p) => {
                        cfg.model.params.insert(p.to_string(), float(&value).ok_or_else(bad)?);
                    }
                    _ => return Err(ConfigError::UnknownKey(key)),
                },
            }
        }
        Ok(cfg)
    }

    /// Renders the configuration in the file format; `parse` inverts it
    /// exactly.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "model.id = {}", self.model.id);
        for (k, v) in &self.model.params {
            let _ = writeln!(s, "model.{k} = {}", fmt_float(*v));
        }
        let _ = writeln!(s, "run.command = {}", self.command.as_str());
        let _ = writeln!(s, "run.N = {}", self.n);
        let _ = writeln!(s, "run.tol = {}", fmt_float(self.tol));
        let eps: Vec<String> = self.eps.iter().map(|e| fmt_float(*e)).collect();
        let _ = writeln!(s, "run.eps = {}", eps.join(", "));
        let _ = writeln!(s, "run.phase = {}", fmt_float(self.phase));
        let _ = writeln!(s, "run.format = {}", self.format.as_str());
        if let Some(p) = &self.out {
            let _ = writeln!(s, "run.out = {}", p.display());
        }
        let _ = writeln!(s, "run.seed = {}", self.seed);
        s
    }

    /// Checks the run parameters; model parameters are checked when the model
    /// is built.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.n < 8 {
            return bad(format!("run.N must be at least 8, got {}", self.n));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad(format!("run.tol must be positive, got {}", self.tol));
        }
        if !self.phase.is_finite() {
            return bad("run.phase must be finite".into());
        }
        if self.command == Command::VerifySplitting {
            if self.eps.is_empty() || self.eps.iter().any(|e| !(*e > 0.0 && *e <= melnikov_core::splitting::EPS_MAX)) {
                return bad(format!("run.eps entries must lie in (0, {}]", melnikov_core::splitting::EPS_MAX));
            }
            if self.eps.windows(2).any(|w| w[1] >= w[0]) {
                return bad("run.eps must be strictly decreasing".into());
            }
        }
        self.model.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

fn float(s: &str) -> Option<f64> {
    s.parse::<f64>().ok()
}

/// Shortest representation that parses back to the same value.
pub fn fmt_float(x: f64) -> String {
    format!("{x:?}")
}
