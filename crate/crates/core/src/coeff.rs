//! Random coefficient models for the hop magnitudes `eta = |h| * g`.
//!
//! Every draw consumes exactly [`RAW_OUTPUTS_PER_DRAW`] 64-bit outputs from the
//! underlying generator, whatever the variant. Two runs that differ only in the
//! gain therefore see the same channel realisations hop for hop, which is what
//! the common-random-number calibration relies on.
//!
//! Random streams are ChaCha8 keyed by the master seed (expanded with
//! `SeedableRng::seed_from_u64`) with the ChaCha stream word set to the replica
//! index. Distinct stream words give non-overlapping keystreams.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

pub const RAW_OUTPUTS_PER_DRAW: usize = 2;

/// Distribution of the channel magnitude `|h|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum CoefficientModel {
    Deterministic {
        c: f64,
    },
    /// Rayleigh magnitude with `E[|h|^2] = mu`.
    Rayleigh {
        mu: f64,
    },
    /// `log|h| ~ N(m, s^2)`.
    LogNormal {
        m: f64,
        s: f64,
    },
    Uniform {
        a: f64,
        b: f64,
    },
    /// Coefficients `+1` with probability `p`, else `-1`. Validation only.
    SignedBernoulli {
        p: f64,
    },
}

impl CoefficientModel {
    pub fn is_validation_only(&self) -> bool {
        matches!(self, CoefficientModel::SignedBernoulli { .. })
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, CoefficientModel::Deterministic { .. })
    }

    /// Checks parameter domains. Does not reject the validation model.
    pub fn validate(&self) -> Result<()> {
        let spec = || self.to_string();
        let bad = |reason: &str| Error::ModelSpec {
            spec: spec(),
            reason: reason.to_string(),
        };
        match *self {
            CoefficientModel::Deterministic { c } if !(c > 0.0 && c.is_finite()) => {
                Err(bad("c must be strictly positive"))
            }
            CoefficientModel::Rayleigh { mu } if !(mu > 0.0 && mu.is_finite()) => {
                Err(bad("mu must be strictly positive"))
            }
            CoefficientModel::LogNormal { m, s }
                if !(m.is_finite() && s > 0.0 && s.is_finite()) =>
            {
                Err(bad("m must be finite and s strictly positive"))
            }
            CoefficientModel::Uniform { a, b } if !(a > 0.0 && b.is_finite() && a < b) => {
                Err(bad("need 0 < a < b"))
            }
            CoefficientModel::SignedBernoulli { p } if !(0.0..=1.0).contains(&p) => {
                Err(bad("p must lie in [0, 1]"))
            }
            _ => Ok(()),
        }
    }

    /// Rejects the signed validation model.
    pub fn require_positive_class(&self) -> Result<()> {
        self.validate()?;
        if self.is_validation_only() {
            return Err(Error::ValidationOnly);
        }
        Ok(())
    }

    /// One draw of `|h|` (or the sign for the validation model). Consumes exactly
    /// two raw outputs. The caller is responsible for having validated `self`.
    #[inline]
    pub fn draw<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        let u1 = open_unit(rng.next_u64());
        let u2 = open_unit(rng.next_u64());
        match *self {
            CoefficientModel::Deterministic { c } => c,
            CoefficientModel::Rayleigh { mu } => (-mu * u1.ln()).sqrt(),
            CoefficientModel::LogNormal { m, s } => {
                let z = (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos();
                (m + s * z).exp()
            }
            CoefficientModel::Uniform { a, b } => a + (b - a) * u1,
            CoefficientModel::SignedBernoulli { p } => {
                if u1 < p {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

/// Maps a raw 64-bit output to the open interval (0, 1) using its top 52 bits;
/// `k + 0.5` stays exact so neither endpoint is reachable.
#[inline]
pub fn open_unit(raw: u64) -> f64 {
    ((raw >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

impl fmt::Display for CoefficientModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            CoefficientModel::Deterministic { c } => write!(f, "deterministic:c={c}"),
            CoefficientModel::Rayleigh { mu } => write!(f, "rayleigh:mu={mu}"),
            CoefficientModel::LogNormal { m, s } => write!(f, "lognormal:m={m},s={s}"),
            CoefficientModel::Uniform { a, b } => write!(f, "uniform:a={a},b={b}"),
            CoefficientModel::SignedBernoulli { p } => write!(f, "signed:p={p}"),
        }
    }
}

impl FromStr for CoefficientModel {
    type Err = Error;

    /// Parses `name:key=value,key=value`, e.g. `rayleigh:mu=1.0`.
    fn from_str(spec: &str) -> Result<Self> {
        let err = |reason: String| Error::ModelSpec {
            spec: spec.to_string(),
            reason,
        };
        let spec_trim = spec.trim();
        let (name, rest) = spec_trim.split_once(':').unwrap_or((spec_trim, ""));
        let mut params: Vec<(&str, f64)> = Vec::new();
        for item in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got `{item}`")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| err(format!("`{}` is not a number", v.trim())))?;
            params.push((k.trim(), v));
        }
        let take = |keys: &[&str]| -> Result<Vec<f64>> {
            for (k, _) in &params {
                if !keys.contains(k) {
                    return Err(err(format!("unknown parameter `{k}`")));
                }
            }
            keys.iter()
                .map(|key| {
                    params
                        .iter()
                        .find(|(k, _)| k == key)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| err(format!("missing parameter `{key}`")))
                })
                .collect()
        };
        let model = match name.to_ascii_lowercase().as_str() {
            "deterministic" => CoefficientModel::Deterministic {
                c: take(&["c"])?[0],
            },
            "rayleigh" => CoefficientModel::Rayleigh {
                mu: take(&["mu"])?[0],
            },
            "lognormal" => {
                let v = take(&["m", "s"])?;
                CoefficientModel::LogNormal { m: v[0], s: v[1] }
            }
            "uniform" => {
                let v = take(&["a", "b"])?;
                CoefficientModel::Uniform { a: v[0], b: v[1] }
            }
            "signed" => CoefficientModel::SignedBernoulli {
                p: take(&["p"])?[0],
            },
            other => return Err(err(format!("unknown model `{other}`"))),
        };
        model.validate()?;
        Ok(model)
    }
}

impl From<CoefficientModel> for String {
    fn from(m: CoefficientModel) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for CoefficientModel {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Amplification factor applied at each receiving node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum GainPolicy {
    Constant(f64),
    /// `gains[j - 1]` is the gain of node `j`, for `j = 1..`.
    PerNode(Vec<f64>),
}

impl GainPolicy {
    /// Checks positivity and, for per-node gains, that nodes `1..=n_nodes` are covered.
    pub fn validate(&self, n_nodes: usize) -> Result<()> {
        match self {
            GainPolicy::Constant(g) => require_positive("gain", *g).map(|_| ()),
            GainPolicy::PerNode(gs) => {
                if gs.len() < n_nodes {
                    return Err(Error::config(
                        "gain",
                        format!(
                            "per-node gain list has {} entries, need {n_nodes}",
                            gs.len()
                        ),
                    ));
                }
                gs.iter()
                    .try_for_each(|g| require_positive("gain", *g).map(|_| ()))
            }
        }
    }

    /// Gain of node `node` (1-based).
    #[inline]
    pub fn at(&self, node: usize) -> f64 {
        match self {
            GainPolicy::Constant(g) => *g,
            GainPolicy::PerNode(gs) => gs[node - 1],
        }
    }

    /// Multiplies every gain by `factor`.
    pub fn scaled(&self, factor: f64) -> GainPolicy {
        match self {
            GainPolicy::Constant(g) => GainPolicy::Constant(g * factor),
            GainPolicy::PerNode(gs) => GainPolicy::PerNode(gs.iter().map(|g| g * factor).collect()),
        }
    }
}

impl fmt::Display for GainPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GainPolicy::Constant(g) => write!(f, "{g}"),
            GainPolicy::PerNode(gs) => {
                f.write_str("nodes:")?;
                for (i, g) in gs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{g}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for GainPolicy {
    type Err = Error;

    /// `0.5`, `constant:g=0.5` or `nodes:0.5,0.6,...`.
    fn from_str(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let num = |s: &str| -> Result<f64> {
            let v: f64 = s
                .trim()
                .parse()
                .map_err(|_| Error::config("gain", format!("`{}` is not a number", s.trim())))?;
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(Error::config(
                    "gain",
                    format!("gain must be strictly positive, got {v}"),
                ))
            }
        };
        if let Some(list) = spec.strip_prefix("nodes:") {
            let gs = list.split(',').map(num).collect::<Result<Vec<_>>>()?;
            if gs.is_empty() {
                return Err(Error::config("gain", "empty per-node gain list"));
            }
            Ok(GainPolicy::PerNode(gs))
        } else if let Some(g) = spec.strip_prefix("constant:g=") {
            Ok(GainPolicy::Constant(num(g)?))
        } else {
            Ok(GainPolicy::Constant(num(spec)?))
        }
    }
}

impl From<GainPolicy> for String {
    fn from(g: GainPolicy) -> String {
        g.to_string()
    }
}

impl TryFrom<String> for GainPolicy {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Identifies one reproducible random stream: `(master_seed, stream_id)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn generator(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Stream used for the `attempt`-th restart of a replica. Restart streams live
    /// above bit 40 so they never collide with ordinary replica indices.
    pub fn restart(&self, attempt: u64) -> RngStream {
        RngStream::new(self.master_seed, self.stream_id + (attempt << 40))
    }
}

/// One draw of `eta = |h| * gain`.
pub fn sample_eta<R: RngCore + ?Sized>(
    model: &CoefficientModel,
    gain: f64,
    rng: &mut R,
) -> Result<f64> {
    model.require_positive_class()?;
    require_positive("gain", gain)?;
    Ok(model.draw(rng) * gain)
}

/// `E[log eta]` in closed form. Every positive variant has one.
pub fn expected_log_eta(model: &CoefficientModel, gain: f64) -> Result<f64> {
    model.require_positive_class()?;
    require_positive("gain", gain)?;
    let log_h = match *model {
        CoefficientModel::Deterministic { c } => c.ln(),
        CoefficientModel::Rayleigh { mu } => 0.5 * (mu.ln() - EULER_GAMMA),
        CoefficientModel::LogNormal { m, .. } => m,
        CoefficientModel::Uniform { a, b } => (b * b.ln() - a * a.ln()) / (b - a) - 1.0,
        CoefficientModel::SignedBernoulli { .. } => unreachable!("rejected above"),
    };
    let value = log_h + gain.ln();
    if !value.is_finite() {
        return Err(Error::Degenerate(format!(
            "E[log eta] is not finite for {model}"
        )));
    }
    Ok(value)
}

/// Monte Carlo estimate of `E[log eta]` with its standard error.
pub fn expected_log_eta_monte_carlo(
    model: &CoefficientModel,
    gain: f64,
    samples: usize,
    stream: RngStream,
) -> Result<(f64, f64)> {
    model.require_positive_class()?;
    require_positive("gain", gain)?;
    if samples < 2 {
        return Err(Error::config("samples", "need at least two samples"));
    }
    let mut rng = stream.generator();
    let (mut mean, mut m2) = (0.0f64, 0.0f64);
    for k in 1..=samples {
        let x = (model.draw(&mut rng) * gain).ln();
        let delta = x - mean;
        mean += delta / k as f64;
        m2 += delta * (x - mean);
    }
    let var = m2 / (samples - 1) as f64;
    Ok((mean, (var / samples as f64).sqrt()))
}
