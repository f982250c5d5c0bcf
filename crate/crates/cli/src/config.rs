//! Run configuration: preset, then `key = value` file, then `--set` overrides.

use std::fmt;
use std::path::Path;

use hocbf::acc::{AccParams, Form};
use hocbf::SimConfig;
use thiserror::Error;

/// Where a setting came from, for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub enum Origin {
    File { path: String, line: usize },
    Flag,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line } => write!(f, "{path} line {line}"),
            Origin::Flag => f.write_str("--set"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{origin}: key '{key}': {message}")]
    Key { origin: Origin, key: String, message: String },
    #[error("{origin}: expected key=value, got '{text}'")]
    Syntax { origin: Origin, text: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown preset '{0}', expected table1")]
    Preset(String),
    #[error("invalid parameters: {0}")]
    Invalid(String),
}

pub const KEYS: &[&str] = &[
    "v0_i", "z0", "delta", "v_ip", "mass", "grav", "f0", "f1", "f2", "v_max", "v_min", "dt", "eps", "c_a", "c_d",
    "p_acc", "v_d", "p", "p1", "p2", "form", "horizon", "substeps",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: AccParams,
    pub horizon: f64,
    pub substeps: usize,
}

impl RunConfig {
    pub fn preset(name: Option<&str>) -> Result<Self, ConfigError> {
        match name.unwrap_or("table1") {
            "table1" => Ok(Self { params: AccParams::table1(), horizon: 30.0, substeps: 4 }),
            other => Err(ConfigError::Preset(other.to_string())),
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig { substeps: self.substeps, ..self.params.sim_config(self.horizon) }
    }

    /// Applies one setting. `value` is trimmed by the caller.
    pub fn set(&mut self, key: &str, value: &str, origin: &Origin) -> Result<(), ConfigError> {
        let err = |message: String| ConfigError::Key { origin: origin.clone(), key: key.to_string(), message };
        let num = || -> Result<f64, ConfigError> {
            value.parse::<f64>().map_err(|_| err(format!("expected a number, got '{value}'")))
        };
        let p = &mut self.params;
        match key {
            "v0_i" => p.v0_i = num()?,
            "z0" => p.z0 = num()?,
            "delta" => p.delta = num()?,
            "v_ip" => p.v_ip = num()?,
            "mass" => p.mass = num()?,
            "grav" => p.grav = num()?,
            "f0" => p.f0 = num()?,
            "f1" => p.f1 = num()?,
            "f2" => p.f2 = num()?,
            "v_max" => p.v_max = num()?,
            "v_min" => p.v_min = num()?,
            "dt" => p.dt = num()?,
            "eps" => p.eps = num()?,
            "c_a" => p.c_a = num()?,
            "c_d" => p.c_d = num()?,
            "p_acc" => p.p_acc = num()?,
            "v_d" => p.v_d = num()?,
            "p" => p.p = num()?,
            "p1" => p.p1 = Some(num()?),
            "p2" => p.p2 = Some(num()?),
            "form" => p.form = value.parse::<Form>().map_err(|e| err(e.0))?,
            "horizon" => self.horizon = num()?,
            "substeps" => {
                self.substeps =
                    value.parse::<usize>().map_err(|_| err(format!("expected a positive integer, got '{value}'")))?
            }
            _ => return Err(err(format!("unknown key, expected one of {}", KEYS.join(", ")))),
        }
        Ok(())
    }

    /// Applies a `key=value` pair.
    pub fn apply(&mut self, text: &str, origin: &Origin) -> Result<(), ConfigError> {
        let (key, value) = split_pair(text, origin)?;
        self.set(key, value, origin)
    }

    /// Applies a `key = value` file. Blank lines and `#` comments are skipped.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let origin = Origin::File { path: path.display().to_string(), line: i + 1 };
            self.apply(line, &origin)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params.validate().map_err(|e| ConfigError::Invalid(e.0))?;
        self.sim_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

pub fn split_pair<'a>(text: &'a str, origin: &Origin) -> Result<(&'a str, &'a str), ConfigError> {
    match text.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim(), v.trim())),
        _ => Err(ConfigError::Syntax { origin: origin.clone(), text: text.to_string() }),
    }
}

/// Parses `field=v1,v2,...`. The field must be numeric.
pub fn parse_sweep(text: &str) -> Result<(String, Vec<f64>), ConfigError> {
    let origin = Origin::Flag;
    let (key, values) = split_pair(text, &origin)
        .map_err(|_| ConfigError::Syntax { origin: origin.clone(), text: format!("--sweep {text}") })?;
    let err = |message: String| ConfigError::Key { origin: Origin::Flag, key: key.to_string(), message };
    if !KEYS.contains(&key) {
        return Err(err(format!("unknown key, expected one of {}", KEYS.join(", "))));
    }
    if key == "form" {
        return Err(err("sweep field must be numeric".into()));
    }
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| err(format!("expected a number, got '{}'", v.trim()))))
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(err("empty sweep".into()));
    }
    Ok((key.to_string(), values))
}
