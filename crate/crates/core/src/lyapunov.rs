//! Monte Carlo estimation of the top Lyapunov exponent of the information
//! cocycle and of the growth rate of the noise cocycle.
//!
//! Each replica runs on its own stream `(master_seed, replica_index)` and
//! replicas are reduced in ascending index order, so estimates do not depend on
//! the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle::{init_info, renormalize, NetworkConfig, NoiseCocycleState};
use crate::coeff::{CoefficientModel, GainPolicy, RngStream};
use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;

pub const DEFAULT_BURN_IN: usize = 100;

/// Minimum trajectory length accepted by the growth-rate estimator.
pub const MIN_GROWTH_RATE_STEPS: usize = 1_000;

const MAX_RESTARTS: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Mean of `(1/n) log I_n` over replicas.
    GrowthRate,
    /// Mean of `log(I_k / I_{k-1})` over the last half of the run. Deterministic models only.
    TailRatio,
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "growth_rate" | "growth-rate" => Ok(EstimatorKind::GrowthRate),
            "tail_ratio" | "tail-ratio" => Ok(EstimatorKind::TailRatio),
            other => Err(Error::config(
                "kind",
                format!("expected growth_rate or tail_ratio, got `{other}`"),
            )),
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimatorKind::GrowthRate => "growth_rate",
            EstimatorKind::TailRatio => "tail_ratio",
        })
    }
}

/// Point estimate in nats per node with a replica-based normal 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub lambda_hat: f64,
    pub std_err: f64,
    pub n_steps: usize,
    pub n_replicas: usize,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
    pub estimator_kind: EstimatorKind,
}

impl LyapunovEstimate {
    /// Reduces per-replica values in the given order. A single replica has zero
    /// standard error.
    pub fn from_replicas(values: &[f64], n_steps: usize, kind: EstimatorKind) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        let (mean, std_err) = mean_and_std_err(values);
        Ok(Self {
            lambda_hat: mean,
            std_err,
            n_steps,
            n_replicas: values.len(),
            ci95_lo: mean - Z95 * std_err,
            ci95_hi: mean + Z95 * std_err,
            estimator_kind: kind,
        })
    }

    pub fn ci_contains(&self, x: f64) -> bool {
        self.ci95_lo <= x && x <= self.ci95_hi
    }
}

/// Sample mean and standard error of the mean, both accumulated in slice order.
pub fn mean_and_std_err(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0) / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOptions {
    /// Nodes discarded before growth accounting starts; 0 keeps `(1/n) log I_n` verbatim.
    pub burn_in: usize,
    /// Admits the signed validation model.
    pub validation: bool,
    /// Source magnitude `I_0`.
    pub i0: f64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            burn_in: DEFAULT_BURN_IN,
            validation: false,
            i0: 1.0,
        }
    }
}

/// `log` of the dominant root of `x^2 = cg x + cg`.
pub fn lambda_deterministic_closed_form(c: f64, g: f64) -> f64 {
    let a = c * g;
    ((a + (a * a + 4.0 * a).sqrt()) / 2.0).ln()
}

/// Estimates the top Lyapunov exponent of the information cocycle.
pub fn estimate_lambda(
    model: &CoefficientModel,
    gains: &GainPolicy,
    n_steps: usize,
    n_replicas: usize,
    master_seed: u64,
    kind: EstimatorKind,
    options: &EstimatorOptions,
) -> Result<LyapunovEstimate> {
    let values = replica_lambdas(
        model,
        gains,
        n_steps,
        n_replicas,
        master_seed,
        kind,
        options,
    )?;
    LyapunovEstimate::from_replicas(&values, n_steps, kind)
}

/// Per-replica exponent values, in replica order.
pub fn replica_lambdas(
    model: &CoefficientModel,
    gains: &GainPolicy,
    n_steps: usize,
    n_replicas: usize,
    master_seed: u64,
    kind: EstimatorKind,
    options: &EstimatorOptions,
) -> Result<Vec<f64>> {
    model.validate()?;
    if model.is_validation_only() && !options.validation {
        return Err(Error::ValidationOnly);
    }
    gains.validate(n_steps)?;
    crate::error::require_positive("i0", options.i0)?;
    if n_replicas == 0 {
        return Err(Error::config("replicas", "need at least one replica"));
    }
    match kind {
        EstimatorKind::GrowthRate => {
            if n_steps < MIN_GROWTH_RATE_STEPS {
                return Err(Error::Estimator {
                    kind: "growth_rate",
                    requirement: format!("n_steps >= {MIN_GROWTH_RATE_STEPS}, got {n_steps}"),
                });
            }
            if options.burn_in >= n_steps {
                return Err(Error::config(
                    "burn_in",
                    "burn-in must be shorter than the run",
                ));
            }
        }
        EstimatorKind::TailRatio => {
            if !model.is_deterministic() {
                return Err(Error::Estimator {
                    kind: "tail_ratio",
                    requirement: "a deterministic coefficient model".into(),
                });
            }
            if n_steps < 2 {
                return Err(Error::Estimator {
                    kind: "tail_ratio",
                    requirement: "n_steps >= 2".into(),
                });
            }
        }
    }
    (0..n_replicas as u64)
        .into_par_iter()
        .map(|r| {
            let stream = RngStream::new(master_seed, r);
            if model.is_validation_only() {
                signed_replica(model, gains, n_steps, stream, options)
            } else {
                Ok(positive_replica(
                    model, gains, n_steps, stream, kind, options,
                ))
            }
        })
        .collect()
}

/// Node index whose log-magnitude anchors the growth accounting, and the span.
fn accounting_window(n_steps: usize, kind: EstimatorKind, burn_in: usize) -> (usize, usize) {
    match kind {
        EstimatorKind::GrowthRate => (burn_in, n_steps - burn_in),
        EstimatorKind::TailRatio => {
            let h = n_steps.div_ceil(2);
            (n_steps - h, h)
        }
    }
}

fn positive_replica(
    model: &CoefficientModel,
    gains: &GainPolicy,
    n_steps: usize,
    stream: RngStream,
    kind: EstimatorKind,
    options: &EstimatorOptions,
) -> f64 {
    let (anchor, span) = accounting_window(n_steps, kind, options.burn_in);
    let mut rng = stream.generator();
    let eta01 = model.draw(&mut rng) * gains.at(1);
    let mut state = init_info(options.i0, eta01).expect("validated inputs");
    // anchor 0 stands for the empty prefix: (1/n) log I_n.
    let mut base = if anchor == 1 {
        state.log_current()
    } else {
        0.0
    };
    for node in 2..=n_steps {
        let g = gains.at(node);
        let eta_2 = model.draw(&mut rng) * g;
        let eta_1 = model.draw(&mut rng) * g;
        state.step_raw(eta_2, eta_1);
        state
            .renormalize()
            .expect("positive cocycle never vanishes");
        if node == anchor {
            base = state.log_current();
        }
    }
    (state.log_current() - base) / span as f64
}

/// Signed sequence `x_n = s x_{n-1} + s' x_{n-2}` scored by `(1/n) log |x_n|`.
/// A replica whose anchor or final value is exactly zero restarts on a fresh stream.
fn signed_replica(
    model: &CoefficientModel,
    gains: &GainPolicy,
    n_steps: usize,
    stream: RngStream,
    options: &EstimatorOptions,
) -> Result<f64> {
    let (anchor, span) = accounting_window(n_steps, EstimatorKind::GrowthRate, options.burn_in);
    for attempt in 0..MAX_RESTARTS {
        let mut rng = stream.restart(attempt).generator();
        let mut v = [options.i0, model.draw(&mut rng) * gains.at(1) * options.i0];
        let mut log_scale = 0.0;
        renormalize(&mut v, &mut log_scale)?;
        let mut base = if anchor == 1 {
            log_scale + v[1].abs().ln()
        } else {
            0.0
        };
        for node in 2..=n_steps {
            let g = gains.at(node);
            let s_2 = model.draw(&mut rng) * g;
            let s_1 = model.draw(&mut rng) * g;
            v = [v[1], s_2 * v[0] + s_1 * v[1]];
            renormalize(&mut v, &mut log_scale)?;
            if node == anchor {
                base = log_scale + v[1].abs().ln();
            }
        }
        let value = (log_scale + v[1].abs().ln() - base) / span as f64;
        if value.is_finite() {
            return Ok(value);
        }
        log::warn!(
            "signed replica {} hit x = 0 on attempt {attempt}; restarting",
            stream.stream_id
        );
    }
    Err(Error::Degenerate(format!(
        "signed replica {} hit zero on {MAX_RESTARTS} consecutive streams",
        stream.stream_id
    )))
}

/// Estimates the growth rate of `N_n^2`, which equals `max{0, 2 lambda}`.
///
/// Uses `n_steps` nodes (overriding `config.n_nodes`) and the same streams and
/// draw order as [`estimate_lambda`], so the two estimates share randomness.
pub fn estimate_noise_exponent(
    config: &NetworkConfig,
    n_steps: usize,
    n_replicas: usize,
    options: &EstimatorOptions,
) -> Result<LyapunovEstimate> {
    if config.n0 == 0.0 {
        return Err(Error::Degenerate(
            "noise exponent is undefined for n0 = 0 (zero noise trajectory)".into(),
        ));
    }
    let mut config = config.clone();
    config.n_nodes = n_steps;
    config.validate()?;
    if n_replicas == 0 {
        return Err(Error::config("replicas", "need at least one replica"));
    }
    if n_steps < MIN_GROWTH_RATE_STEPS {
        return Err(Error::Estimator {
            kind: "growth_rate",
            requirement: format!("n_steps >= {MIN_GROWTH_RATE_STEPS}, got {n_steps}"),
        });
    }
    if options.burn_in >= n_steps {
        return Err(Error::config(
            "burn_in",
            "burn-in must be shorter than the run",
        ));
    }
    let (anchor, span) = accounting_window(n_steps, EstimatorKind::GrowthRate, options.burn_in);
    let values: Vec<f64> = (0..n_replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(config.master_seed, r).generator();
            // eta_{0,1} only feeds the information cocycle; draw it to stay aligned.
            let _ = config.model.draw(&mut rng);
            let mut noise = NoiseCocycleState::new();
            let mut base = 0.0;
            for node in 2..=n_steps {
                let g = config.gains.at(node);
                let eta_2 = config.model.draw(&mut rng) * g;
                let eta_1 = config.model.draw(&mut rng) * g;
                noise.step_raw(eta_2 * eta_2, eta_1 * eta_1, config.n0);
                noise.renormalize()?;
                if node == 2 && anchor == 1 {
                    base = noise.log_previous();
                } else if node == anchor {
                    base = noise.log_current();
                }
            }
            Ok((noise.log_current() - base) / span as f64)
        })
        .collect::<Result<_>>()?;
    LyapunovEstimate::from_replicas(&values, n_steps, EstimatorKind::GrowthRate)
}
