//! Report schemas, CSV writers and run manifests.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::CalibrationResult;
use crate::cocycle::fmt_f64;
use crate::config::{Command, RunConfig};
use crate::error::{Error, Result};
use crate::lyapunov::{EstimatorKind, LyapunovEstimate};
use crate::scaling::{LawReport, ReplicaSlopes};

pub const MANIFEST_FILE: &str = "manifest.json";

/// JSON form of a Lyapunov estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub lambda_hat: f64,
    pub std_err: f64,
    pub ci95: [f64; 2],
    pub n_steps: usize,
    pub n_replicas: usize,
    pub estimator_kind: EstimatorKind,
    pub master_seed: u64,
    pub model_spec: String,
    pub gain_spec: String,
}

impl LyapunovReport {
    pub fn new(est: &LyapunovEstimate, cfg: &RunConfig) -> Self {
        Self {
            lambda_hat: est.lambda_hat,
            std_err: est.std_err,
            ci95: [est.ci95_lo, est.ci95_hi],
            n_steps: est.n_steps,
            n_replicas: est.n_replicas,
            estimator_kind: est.estimator_kind,
            master_seed: cfg.master_seed,
            model_spec: cfg.model.to_string(),
            gain_spec: cfg.gain.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub model_spec: String,
    pub master_seed: u64,
    #[serde(flatten)]
    pub result: CalibrationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub model_spec: String,
    pub gain_spec: String,
    pub master_seed: u64,
    pub all_consistent: bool,
    pub capacity: LawReport,
    pub power: LawReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: Command,
    pub config_echo: RunConfig,
    pub master_seed: u64,
    /// SHA-256 of the canonical JSON encoding of `config_echo`.
    pub config_digest: String,
    /// UTC, ISO-8601.
    pub timestamp: String,
    /// Data files written by the run, relative to the output directory.
    pub output_files: Vec<String>,
}

pub fn config_digest(cfg: &RunConfig) -> Result<String> {
    let canonical = serde_json::to_string(cfg)?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

impl RunManifest {
    pub fn new(cfg: &RunConfig, output_files: Vec<String>) -> Result<Self> {
        Ok(Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: cfg.command,
            config_echo: cfg.clone(),
            master_seed: cfg.master_seed,
            config_digest: config_digest(cfg)?,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            output_files,
        })
    }

    /// Loads a manifest and checks its digest against the echoed config.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: RunManifest = serde_json::from_str(&text)?;
        let digest = config_digest(&manifest.config_echo)?;
        if digest != manifest.config_digest {
            return Err(Error::config(
                "config_digest",
                format!(
                    "manifest digest {} does not match its config ({digest})",
                    manifest.config_digest
                ),
            ));
        }
        if manifest.master_seed != manifest.config_echo.master_seed {
            return Err(Error::config(
                "master_seed",
                "manifest seed differs from its config",
            ));
        }
        Ok(manifest)
    }
}

/// Collects the files a command writes into one output directory.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    /// Opens `name` for writing and records it as a data output.
    pub fn write_with<F>(&mut self, name: &str, body: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let path = self.root.join(name);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(value)?;
        self.write_with(name, |w| writeln!(w, "{text}"))
    }

    /// Writes the manifest for everything recorded so far.
    pub fn finish(self, cfg: &RunConfig) -> Result<PathBuf> {
        let manifest = RunManifest::new(cfg, self.written)?;
        let path = self.root.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, format!("{text}\n")).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

pub fn write_slopes_csv(w: &mut dyn Write, slopes: &[ReplicaSlopes]) -> std::io::Result<()> {
    writeln!(w, "stream_id,capacity_slope,power_slope")?;
    for s in slopes {
        writeln!(
            w,
            "{},{},{}",
            s.stream_id,
            fmt_f64(s.capacity_slope),
            fmt_f64(s.power_slope)
        )?;
    }
    Ok(())
}

pub fn write_sweep_csv(w: &mut dyn Write, rows: &[(f64, LyapunovEstimate)]) -> std::io::Result<()> {
    writeln!(w, "g,lambda_hat,std_err")?;
    for (g, est) in rows {
        writeln!(
            w,
            "{},{},{}",
            fmt_f64(*g),
            fmt_f64(est.lambda_hat),
            fmt_f64(est.std_err)
        )?;
    }
    Ok(())
}
