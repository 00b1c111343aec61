//! Run configuration: defaults, then a config file, then command-line flags.
//!
//! Config files are flat `section.key = value` text (`#` starts a comment) or
//! JSON with the same keys, either flat (`{"network.model": ...}`) or nested
//! by section (`{"network": {"model": ...}}`).
//!
//! | key                      | flag                | default        |
//! |--------------------------|---------------------|----------------|
//! | `network.model`          | `--model`           | required       |
//! | `network.gain`           | `--gain`            | `1`            |
//! | `network.n0`             | `--n0`              | `1`            |
//! | `network.i0`             | `--i0`              | `1`            |
//! | `network.nodes`          | `--n`               | `10000`        |
//! | `run.seed`               | `--seed`            | `1` (`auto` draws one and records it) |
//! | `run.replicas`           | `--replicas`        | `32`           |
//! | `run.burn_in`            | `--burn-in`         | `auto`         |
//! | `lyapunov.kind`          | `--kind`            | `growth_rate`  |
//! | `lyapunov.validation`    | `--validation`      | `false`        |
//! | `calibrate.tol`          | `--tol`             | `0.001`        |
//! | `calibrate.g_init`       | `--g-init`          | `1`            |
//! | `calibrate.max_steps`    | `--max-steps`       | `8 * nodes`    |
//! | `verify.tolerance_sigma` | `--tolerance-sigma` | `3`            |
//! | `sweep.grid`             | `--grid`            | none           |

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cocycle::NetworkConfig;
use crate::coeff::{CoefficientModel, GainPolicy};
use crate::error::{Error, Result};
use crate::lyapunov::{EstimatorKind, EstimatorOptions, DEFAULT_BURN_IN};
use crate::scaling::{default_slope_burn_in, VerifyOptions, DEFAULT_TOLERANCE_SIGMA};

pub const KNOWN_KEYS: &[&str] = &[
    "network.model",
    "network.gain",
    "network.n0",
    "network.i0",
    "network.nodes",
    "run.seed",
    "run.replicas",
    "run.burn_in",
    "lyapunov.kind",
    "lyapunov.validation",
    "calibrate.tol",
    "calibrate.g_init",
    "calibrate.max_steps",
    "verify.tolerance_sigma",
    "sweep.grid",
];

pub const DEFAULT_NODES: usize = 10_000;
pub const DEFAULT_REPLICAS: usize = 32;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Lyapunov,
    Simulate,
    Calibrate,
    Verify,
    Sweep,
}

impl std::fmt::Display for Command {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Command::Lyapunov => "lyapunov",
            Command::Simulate => "simulate",
            Command::Calibrate => "calibrate",
            Command::Verify => "verify",
            Command::Sweep => "sweep",
        })
    }
}

/// Fully resolved parameters of one command. Its JSON form is the canonical
/// encoding hashed into the manifest digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub model: CoefficientModel,
    pub gain: GainPolicy,
    pub n0: f64,
    pub i0: f64,
    pub nodes: usize,
    pub master_seed: u64,
    pub replicas: usize,
    /// `None` selects each estimator's own default.
    pub burn_in: Option<usize>,
    pub kind: EstimatorKind,
    pub validation: bool,
    pub tol: f64,
    pub g_init: f64,
    pub max_steps: usize,
    pub tolerance_sigma: f64,
    pub grid: Vec<f64>,
}

impl RunConfig {
    pub fn network(&self) -> NetworkConfig {
        NetworkConfig {
            model: self.model,
            gains: self.gain.clone(),
            n0: self.n0,
            i0: self.i0,
            n_nodes: self.nodes,
            master_seed: self.master_seed,
        }
    }

    pub fn estimator_options(&self) -> EstimatorOptions {
        EstimatorOptions {
            burn_in: self.burn_in.unwrap_or(DEFAULT_BURN_IN),
            validation: self.validation,
            i0: self.i0,
        }
    }

    pub fn verify_options(&self) -> VerifyOptions {
        VerifyOptions {
            burn_in: Some(
                self.burn_in
                    .unwrap_or_else(|| default_slope_burn_in(self.nodes)),
            ),
            tolerance_sigma: self.tolerance_sigma,
            estimator: self.estimator_options(),
            ..VerifyOptions::default()
        }
    }
}

/// One raw value and where it came from (`--gain`, `cfg.txt:network.gain`, ...).
#[derive(Debug, Clone)]
struct Entry {
    value: String,
    origin: String,
}

/// Layered raw settings keyed by canonical key.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    entries: BTreeMap<String, Entry>,
}

impl Settings {
    /// Reads a key-value or JSON config file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let label = path.display().to_string();
        if text.trim_start().starts_with('{') {
            Self::from_json(&text, &label)
        } else {
            Self::from_key_values(&text, &label)
        }
    }

    pub fn from_key_values(text: &str, label: &str) -> Result<Self> {
        let mut s = Settings::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(
                    format!("{label}:{}", lineno + 1),
                    format!("expected `key = value`, got `{line}`"),
                )
            })?;
            s.insert(k.trim(), v.trim(), format!("{label}:{}", k.trim()))?;
        }
        Ok(s)
    }

    pub fn from_json(text: &str, label: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::config(label, "top level must be an object"))?;
        let mut s = Settings::default();
        for (k, v) in obj {
            match v {
                serde_json::Value::Object(section) => {
                    for (sk, sv) in section {
                        let key = format!("{k}.{sk}");
                        s.insert(&key, &json_scalar(sv, &key)?, format!("{label}:{key}"))?;
                    }
                }
                other => s.insert(k, &json_scalar(other, k)?, format!("{label}:{k}"))?,
            }
        }
        Ok(s)
    }

    /// Sets `key`, rejecting keys outside [`KNOWN_KEYS`].
    pub fn insert(&mut self, key: &str, value: &str, origin: impl Into<String>) -> Result<()> {
        let origin = origin.into();
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::config(origin, format!("unknown key `{key}`")));
        }
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                origin,
            },
        );
        Ok(())
    }

    /// Values from `other` replace values here.
    pub fn overlay(&mut self, other: Settings) {
        self.entries.extend(other.entries);
    }

    fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T, what: &str) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(e) => e.value.parse().map_err(|_| {
                Error::config(&e.origin, format!("expected {what}, got `{}`", e.value))
            }),
        }
    }

    fn positive_f64(&self, key: &str, default: f64) -> Result<f64> {
        let v: f64 = self.parse_or(key, default, "a number")?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::config(
                self.origin(key),
                format!("must be strictly positive, got {v}"),
            ))
        }
    }

    fn positive_usize(&self, key: &str, default: usize) -> Result<usize> {
        let v: usize = self.parse_or(key, default, "a positive integer")?;
        if v == 0 {
            return Err(Error::config(self.origin(key), "must be at least 1"));
        }
        Ok(v)
    }

    fn origin(&self, key: &str) -> String {
        self.get(key)
            .map_or_else(|| key.to_string(), |e| e.origin.clone())
    }

    /// Resolves every key into a validated [`RunConfig`].
    pub fn resolve(&self, command: Command) -> Result<RunConfig> {
        let model_entry = self.get("network.model").ok_or_else(|| {
            Error::config(
                "network.model",
                "a coefficient model is required (e.g. --model rayleigh:mu=1)",
            )
        })?;
        let model: CoefficientModel = model_entry
            .value
            .parse()
            .map_err(|e: Error| Error::config(&model_entry.origin, e.to_string()))?;

        let gain: GainPolicy = match self.get("network.gain") {
            None => GainPolicy::Constant(1.0),
            Some(e) => e.value.parse().map_err(|err: Error| match err {
                Error::Config { reason, .. } => Error::config(&e.origin, reason),
                other => Error::config(&e.origin, other.to_string()),
            })?,
        };

        let nodes = self.positive_usize("network.nodes", DEFAULT_NODES)?;
        if nodes < 2 {
            return Err(Error::config(
                self.origin("network.nodes"),
                "need at least 2 nodes",
            ));
        }
        if let GainPolicy::PerNode(gs) = &gain {
            if gs.len() < nodes {
                return Err(Error::config(
                    self.origin("network.gain"),
                    format!("per-node gain list has {} entries, need {nodes}", gs.len()),
                ));
            }
        }

        let master_seed = match self.get("run.seed") {
            None => DEFAULT_SEED,
            Some(e) if e.value == "auto" => {
                let seed = rand::random::<u64>();
                log::info!("--seed auto drew master seed {seed}");
                seed
            }
            Some(e) => e.value.parse().map_err(|_| {
                Error::config(
                    &e.origin,
                    format!(
                        "expected an unsigned 64-bit seed or `auto`, got `{}`",
                        e.value
                    ),
                )
            })?,
        };

        let burn_in = match self.get("run.burn_in") {
            None => None,
            Some(e) if e.value == "auto" => None,
            Some(e) => Some(e.value.parse().map_err(|_| {
                Error::config(
                    &e.origin,
                    format!(
                        "expected a non-negative integer or `auto`, got `{}`",
                        e.value
                    ),
                )
            })?),
        };

        let kind = match self.get("lyapunov.kind") {
            None => EstimatorKind::GrowthRate,
            Some(e) => e
                .value
                .parse()
                .map_err(|err: Error| Error::config(&e.origin, err.to_string()))?,
        };

        let grid = match self.get("sweep.grid") {
            None => Vec::new(),
            Some(e) => e
                .value
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|g| *g > 0.0 && g.is_finite())
                        .ok_or_else(|| {
                            Error::config(
                                &e.origin,
                                format!("`{}` is not a positive gain", s.trim()),
                            )
                        })
                })
                .collect::<Result<Vec<_>>>()?,
        };
        if command == Command::Sweep && grid.is_empty() {
            return Err(Error::config(
                "sweep.grid",
                "sweep needs a gain grid (e.g. --grid 0.25,0.5,1)",
            ));
        }

        let cfg = RunConfig {
            command,
            model,
            gain,
            n0: self.positive_f64("network.n0", 1.0)?,
            i0: self.positive_f64("network.i0", 1.0)?,
            nodes,
            master_seed,
            replicas: self.positive_usize("run.replicas", DEFAULT_REPLICAS)?,
            burn_in,
            kind,
            validation: self.parse_or("lyapunov.validation", false, "true or false")?,
            tol: self.positive_f64("calibrate.tol", DEFAULT_TOL)?,
            g_init: self.positive_f64("calibrate.g_init", 1.0)?,
            max_steps: self.positive_usize("calibrate.max_steps", nodes.saturating_mul(8))?,
            tolerance_sigma: self
                .positive_f64("verify.tolerance_sigma", DEFAULT_TOLERANCE_SIGMA)?,
            grid,
        };
        if cfg.model.is_validation_only() && !(command == Command::Lyapunov && cfg.validation) {
            return Err(Error::config(
                model_entry.origin.clone(),
                "the signed model is only accepted by `lyapunov --validation`",
            ));
        }
        if let Some(b) = cfg.burn_in {
            if b >= cfg.nodes {
                return Err(Error::config(
                    self.origin("run.burn_in"),
                    "burn-in must be shorter than the run",
                ));
            }
        }
        Ok(cfg)
    }
}

fn json_scalar(v: &serde_json::Value, key: &str) -> Result<String> {
    match v {
        serde_json::Value::String(s) => Ok(s.clone()),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        serde_json::Value::Bool(b) => Ok(b.to_string()),
        serde_json::Value::Array(items) => items
            .iter()
            .map(|i| json_scalar(i, key))
            .collect::<Result<Vec<_>>>()
            .map(|v| v.join(",")),
        _ => Err(Error::config(key, "expected a scalar value")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(pairs: &[(&str, &str, &str)]) -> Settings {
        let mut s = Settings::default();
        for (k, v, o) in pairs {
            s.insert(k, v, *o).unwrap();
        }
        s
    }

    #[test]
    fn flag_only_config() {
        let s = flags(&[
            ("network.model", "deterministic:c=1", "--model"),
            ("network.gain", "0.5", "--gain"),
            ("network.nodes", "1000", "--n"),
        ]);
        let cfg = s.resolve(Command::Lyapunov).unwrap();
        assert_eq!(cfg.gain, GainPolicy::Constant(0.5));
        assert_eq!(cfg.nodes, 1000);
        assert_eq!(
            (cfg.n0, cfg.i0, cfg.replicas, cfg.burn_in),
            (1.0, 1.0, 32, None)
        );
    }

    #[test]
    fn negative_gain_names_the_key() {
        let s = flags(&[
            ("network.model", "deterministic:c=1", "--model"),
            ("network.gain", "-1", "--gain"),
        ]);
        match s.resolve(Command::Lyapunov) {
            Err(Error::Config { key, .. }) => assert!(key.contains("gain"), "{key}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn flags_override_file() {
        let mut s = Settings::from_key_values(
            "network.model = rayleigh:mu=1\nnetwork.n0 = 1 # noise\n",
            "cfg",
        )
        .unwrap();
        s.overlay(flags(&[("network.n0", "2", "--n0")]));
        assert_eq!(s.resolve(Command::Simulate).unwrap().n0, 2.0);
    }

    #[test]
    fn json_forms() {
        let nested = Settings::from_json(
            r#"{"network": {"model": "rayleigh:mu=1", "n0": 0.5}, "sweep": {"grid": [0.5, 1]}}"#,
            "j",
        )
        .unwrap();
        let cfg = nested.resolve(Command::Sweep).unwrap();
        assert_eq!(cfg.n0, 0.5);
        assert_eq!(cfg.grid, vec![0.5, 1.0]);
        let flat = Settings::from_json(
            r#"{"network.model": "uniform:a=0.5,b=1.5", "run.seed": 9}"#,
            "j",
        )
        .unwrap();
        assert_eq!(flat.resolve(Command::Verify).unwrap().master_seed, 9);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            Settings::from_key_values("network.colour = red", "cfg"),
            Err(Error::Config { .. })
        ));
        let s = flags(&[("network.model", "rayleigh:mu=0", "--model")]);
        assert!(s.resolve(Command::Lyapunov).is_err());
        let s = flags(&[("network.model", "signed:p=0.5", "--model")]);
        assert!(s.resolve(Command::Lyapunov).is_err());
        assert!(s.resolve(Command::Verify).is_err());
        let s = flags(&[
            ("network.model", "signed:p=0.5", "--model"),
            ("lyapunov.validation", "true", "--validation"),
        ]);
        assert!(s.resolve(Command::Lyapunov).is_ok());
        let s = flags(&[("network.model", "rayleigh:mu=1", "--model")]);
        assert!(s.resolve(Command::Sweep).is_err());
        assert!(Settings::default().resolve(Command::Lyapunov).is_err());
    }

    #[test]
    fn canonical_encoding_round_trips() {
        let s = flags(&[
            ("network.model", "lognormal:m=-0.5,s=0.25", "--model"),
            ("network.gain", "nodes:1,2,3", "--gain"),
            ("network.nodes", "3", "--n"),
            ("run.burn_in", "1", "--burn-in"),
        ]);
        let cfg = s.resolve(Command::Simulate).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }
}
