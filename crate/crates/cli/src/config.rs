//! Run configuration: JSON from a file or inline, validated and filled with defaults.

use std::fmt;
use std::path::Path;

use parisi::optimizer::OptimizerOptions;
use parisi::{GridParams, Mixture, RsbMeasure};
use serde::Deserialize;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    Gamma,
    SphericalSolve,
    Check,
    Export,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Command::Solve => "solve",
            Command::Gamma => "gamma",
            Command::SphericalSolve => "spherical-solve",
            Command::Check => "check",
            Command::Export => "export",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    #[default]
    Ising,
    Spherical,
}

/// Partial grid settings layered over [`GridParams::for_mixture`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridOverrides {
    pub x_max: Option<f64>,
    pub n_x: Option<usize>,
    pub n_u: Option<usize>,
    pub quad_order: Option<usize>,
}

impl GridOverrides {
    pub fn apply(&self, mix: &Mixture) -> GridParams {
        let base = GridParams::for_mixture(mix);
        GridParams {
            x_max: self.x_max.unwrap_or(base.x_max),
            n_x: self.n_x.unwrap_or(base.n_x),
            n_u: self.n_u.unwrap_or(base.n_u),
            quad_order: self.quad_order.unwrap_or(base.quad_order),
        }
    }
}

/// Parameters of the exactly solvable spherical model.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct TwoPlusPSpec {
    pub p: u32,
    pub t: f64,
    pub beta_sq: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    model: Model,
    mixture: Option<Value>,
    command: Option<Command>,
    #[serde(default)]
    grid: GridOverrides,
    seed: Option<u64>,
    out: Option<String>,
    csv: Option<String>,
    measure: Option<RsbMeasure>,
    u_samples: Option<Vec<f64>>,
    optimizer: Option<OptimizerOptions>,
    p: Option<u32>,
    t: Option<f64>,
    beta_sq: Option<f64>,
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: Model,
    pub command: Command,
    pub mixture: Option<Mixture>,
    pub grid: GridOverrides,
    pub seed: u64,
    pub out: Option<String>,
    pub csv: Option<String>,
    pub measure: Option<RsbMeasure>,
    pub u_samples: Option<Vec<f64>>,
    pub optimizer: OptimizerOptions,
    pub two_plus_p: Option<TwoPlusPSpec>,
}

/// Failure classes of configuration handling.
#[derive(Debug)]
pub enum ConfigError {
    Io { path: String, source: std::io::Error },
    Syntax { line: usize, column: usize, message: String },
    Field { field: String, message: String },
    Validation(parisi::Error),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, source } => write!(f, "cannot read config {path}: {source}"),
            ConfigError::Syntax { line, column, message } => {
                write!(f, "config syntax error at line {line}, column {column}: {message}")
            }
            ConfigError::Field { field, message } => write!(f, "config field `{field}`: {message}"),
            ConfigError::Validation(e) => write!(f, "invalid mixture: {e}"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl From<parisi::Error> for ConfigError {
    fn from(e: parisi::Error) -> Self {
        ConfigError::Validation(e)
    }
}

fn field(name: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { field: name.to_string(), message: message.into() }
}

/// Reads `source` as a path if such a file exists, otherwise as inline JSON.
pub fn parse_config(source: &str, command: Option<Command>) -> Result<RunConfig, ConfigError> {
    let text = if source.trim_start().starts_with('{') || !Path::new(source).exists() {
        source.to_string()
    } else {
        std::fs::read_to_string(source).map_err(|e| ConfigError::Io { path: source.to_string(), source: e })?
    };
    let value: Value = serde_json::from_str(&text).map_err(|e| ConfigError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let raw: RawConfig = serde_json::from_value(value).map_err(|e| {
        let message = e.to_string();
        // serde names the offending key in backticks.
        let name = message.split('`').nth(1).unwrap_or("<root>").to_string();
        ConfigError::Field { field: name, message }
    })?;
    let command = match (command, raw.command) {
        (Some(a), Some(b)) if a != b => {
            return Err(field("command", format!("config says {b} but {a} was requested")));
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => return Err(field("command", "missing; give it in the config or on the command line")),
    };
    let mixture = match raw.mixture {
        Some(v) => Some(parse_mixture(v)?),
        None if command == Command::SphericalSolve => None,
        None => return Err(field("mixture", "missing")),
    };
    let two_plus_p = match (raw.p, raw.t, raw.beta_sq) {
        (Some(p), Some(t), Some(beta_sq)) => Some(TwoPlusPSpec { p, t, beta_sq }),
        (None, None, None) => None,
        _ => return Err(field("p", "p, t and beta_sq must be given together")),
    };
    if command == Command::SphericalSolve && two_plus_p.is_none() {
        return Err(field("p", "spherical-solve needs p, t and beta_sq"));
    }
    if command == Command::Solve && raw.model == Model::Spherical {
        return Err(field("model", "solve minimizes the Ising functional; use spherical-solve"));
    }
    let mut optimizer = raw.optimizer.unwrap_or_default();
    let seed = raw.seed.unwrap_or(optimizer.seed);
    optimizer.seed = seed;
    Ok(RunConfig {
        model: raw.model,
        command,
        mixture,
        grid: raw.grid,
        seed,
        out: raw.out,
        csv: raw.csv,
        measure: raw.measure,
        u_samples: raw.u_samples,
        optimizer,
        two_plus_p,
    })
}

/// Mixture JSON maps degree strings to `beta_p^2`.
fn parse_mixture(v: Value) -> Result<Mixture, ConfigError> {
    let Value::Object(map) = v else {
        return Err(field("mixture", "expected an object such as {\"2\": 0.64}"));
    };
    let mut pairs = std::collections::BTreeMap::new();
    for (k, v) in map {
        let p: u32 = k.parse().map_err(|_| field("mixture", format!("degree `{k}` is not an integer")))?;
        let c = v.as_f64().ok_or_else(|| field("mixture", format!("coefficient of degree {p} is not a number")))?;
        pairs.insert(p, c);
    }
    Ok(Mixture::new(&pairs)?)
}
