//! Empirical checks of the capacity and transmit-power scaling laws.
//!
//! With `lambda` the top exponent of the information cocycle,
//!
//! ```text
//! (1/n) log c_n   -> min{0, 2 lambda}
//! (1/n) log X_n^2 -> max{0, 2 lambda}
//! ```
//!
//! Slopes are fitted per replica by least squares on the log series and then
//! averaged, so the reported error reflects replica-to-replica variation.
//! The order statements are read probabilistically: `f(n) = Theta_P(g(n))`
//! with slack `exp(+-h(n))`, `h(n) = c_h n^a`, `a < 1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle::{run_trajectory, NetworkConfig};
use crate::error::{Error, Result};
use crate::lyapunov::{
    estimate_lambda, mean_and_std_err, EstimatorKind, EstimatorOptions, LyapunovEstimate,
};
use crate::metrics::log_capacity_nats;

/// Absolute slope resolution (nats per node) used as the floor of the
/// consistency band; scaled by `|predicted|` when that exceeds one.
pub const SLOPE_RESOLUTION: f64 = 0.01;

pub const DEFAULT_TOLERANCE_SIGMA: f64 = 3.0;
pub const DEFAULT_H_EXPONENT: f64 = 0.75;
pub const DEFAULT_H_COEFFICIENT: f64 = 1.0;

/// Minimum number of points a slope fit keeps after burn-in.
pub const MIN_FIT_POINTS: usize = 10;

/// `max(100, ceil(5% of n))`.
pub fn default_slope_burn_in(n: usize) -> usize {
    100.max(n.div_ceil(20))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub std_err: f64,
    pub n_points: usize,
    pub burn_in: usize,
}

/// Least-squares line through `(n, series[n - 1])` for nodes `n > burn_in`.
pub fn slope_estimate(series: &[f64], burn_in: usize) -> Result<SlopeFit> {
    if series.len() <= burn_in + MIN_FIT_POINTS {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            burn_in,
            needed: burn_in + MIN_FIT_POINTS + 1,
        });
    }
    let ys = &series[burn_in..];
    if let Some(bad) = ys.iter().find(|y| !y.is_finite()) {
        return Err(Error::Degenerate(format!(
            "non-finite value {bad} in fitted series"
        )));
    }
    let m = ys.len() as f64;
    let first = (burn_in + 1) as f64;
    let x_mean = first + (m - 1.0) / 2.0;
    let y_mean = ys.iter().sum::<f64>() / m;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (k, y) in ys.iter().enumerate() {
        let dx = first + k as f64 - x_mean;
        sxx += dx * dx;
        sxy += dx * (y - y_mean);
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ssr: f64 = ys
        .iter()
        .enumerate()
        .map(|(k, y)| {
            let r = y - (intercept + slope * (first + k as f64));
            r * r
        })
        .sum();
    let std_err = (ssr / (m - 2.0) / sxx).sqrt();
    Ok(SlopeFit {
        slope,
        intercept,
        std_err,
        n_points: ys.len(),
        burn_in,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Law {
    /// `c_n = Theta_P(exp(n min{0, 2 lambda}))`
    Capacity,
    /// `X_n^2 = Theta_P(exp(n max{0, 2 lambda}))`
    Power,
}

impl Law {
    pub fn predicted_exponent(self, lambda: f64) -> f64 {
        match self {
            Law::Capacity => (2.0 * lambda).min(0.0),
            Law::Power => (2.0 * lambda).max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Inconsistent,
}

/// Fractions of replicas inside the upper and lower envelopes at the last node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaPCheck {
    pub n: usize,
    pub rate: f64,
    pub h_exponent: f64,
    pub c_h: f64,
    /// `P[value <= rate n + h(n)]`, the O_P side.
    pub upper_fraction: f64,
    /// `P[value >= rate n - h(n)]`, the Omega_P side.
    pub lower_fraction: f64,
}

/// Empirical O_P / Omega_P fractions for log-domain series at their last node.
pub fn check_theta_p(
    ensemble: &[Vec<f64>],
    rate: f64,
    h_exponent: f64,
    c_h: f64,
) -> Result<ThetaPCheck> {
    if !(h_exponent > 0.0 && h_exponent < 1.0) {
        return Err(Error::config(
            "h_exponent",
            "must lie in (0, 1) so that h(n) = o(n)",
        ));
    }
    crate::error::require_positive("c_h", c_h)?;
    if ensemble.is_empty() || ensemble.iter().any(Vec::is_empty) {
        return Err(Error::EmptyEnsemble);
    }
    let n = ensemble.iter().map(Vec::len).min().unwrap_or(0);
    let nf = n as f64;
    let h = c_h * nf.powf(h_exponent);
    let (mut upper, mut lower) = (0usize, 0usize);
    for series in ensemble {
        let v = series[n - 1];
        if v <= rate * nf + h {
            upper += 1;
        }
        if v >= rate * nf - h {
            lower += 1;
        }
    }
    let total = ensemble.len() as f64;
    Ok(ThetaPCheck {
        n,
        rate,
        h_exponent,
        c_h,
        upper_fraction: upper as f64 / total,
        lower_fraction: lower as f64 / total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawReport {
    pub law: Law,
    pub predicted_exponent: f64,
    /// Replica-averaged fit; `std_err` is the standard error across replicas.
    pub measured: SlopeFit,
    pub lambda_estimate: LyapunovEstimate,
    pub combined_std_err: f64,
    pub tolerance_sigma: f64,
    /// Half-width actually applied: `max(tolerance_sigma * combined_std_err, floor)`.
    pub band: f64,
    pub verdict: Verdict,
    pub theta_p: ThetaPCheck,
    /// The order notation is checked in its probabilistic (Theta_P) reading.
    pub interpretation: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSlopes {
    pub stream_id: u64,
    pub capacity_slope: f64,
    pub power_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawVerification {
    pub capacity: LawReport,
    pub power: LawReport,
    pub replica_slopes: Vec<ReplicaSlopes>,
}

impl LawVerification {
    pub fn all_consistent(&self) -> bool {
        self.capacity.verdict == Verdict::Consistent && self.power.verdict == Verdict::Consistent
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Slope burn-in; `None` selects [`default_slope_burn_in`].
    pub burn_in: Option<usize>,
    pub tolerance_sigma: f64,
    pub h_exponent: f64,
    pub c_h: f64,
    pub estimator: EstimatorOptions,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            burn_in: None,
            tolerance_sigma: DEFAULT_TOLERANCE_SIGMA,
            h_exponent: DEFAULT_H_EXPONENT,
            c_h: DEFAULT_H_COEFFICIENT,
            estimator: EstimatorOptions::default(),
        }
    }
}

/// Simulates `n_replicas` trajectories of `n_steps` nodes and checks both laws.
pub fn verify_laws(
    config: &NetworkConfig,
    n_steps: usize,
    n_replicas: usize,
    options: &VerifyOptions,
) -> Result<LawVerification> {
    let mut config = config.clone();
    config.n_nodes = n_steps;
    config.validate()?;
    if n_replicas == 0 {
        return Err(Error::config("replicas", "need at least one replica"));
    }
    let burn_in = options
        .burn_in
        .unwrap_or_else(|| default_slope_burn_in(n_steps));
    let estimator = EstimatorOptions {
        i0: config.i0,
        ..options.estimator
    };
    let lambda = estimate_lambda(
        &config.model,
        &config.gains,
        n_steps,
        n_replicas,
        config.master_seed,
        EstimatorKind::GrowthRate,
        &estimator,
    )?;

    struct Replica {
        cap: SlopeFit,
        pow: SlopeFit,
        log_cap: Vec<f64>,
        log_pow: Vec<f64>,
    }
    let replicas: Vec<Replica> = (0..n_replicas as u64)
        .into_par_iter()
        .map(|r| {
            let t = run_trajectory(&config, r)?;
            let log_cap: Vec<f64> = t.log_snr.iter().map(|&x| log_capacity_nats(x)).collect();
            let cap = slope_estimate(&log_cap, burn_in)?;
            let pow = slope_estimate(&t.log_x_sq, burn_in)?;
            Ok(Replica {
                cap,
                pow,
                log_cap,
                log_pow: t.log_x_sq,
            })
        })
        .collect::<Result<_>>()?;

    let replica_slopes = replicas
        .iter()
        .enumerate()
        .map(|(r, rep)| ReplicaSlopes {
            stream_id: r as u64,
            capacity_slope: rep.cap.slope,
            power_slope: rep.pow.slope,
        })
        .collect();

    let report = |law: Law, fits: Vec<SlopeFit>, ensemble: Vec<Vec<f64>>| -> Result<LawReport> {
        let slopes: Vec<f64> = fits.iter().map(|f| f.slope).collect();
        let intercepts: Vec<f64> = fits.iter().map(|f| f.intercept).collect();
        let (slope, slope_se) = mean_and_std_err(&slopes);
        let (intercept, _) = mean_and_std_err(&intercepts);
        let measured = SlopeFit {
            slope,
            intercept,
            std_err: slope_se,
            n_points: fits[0].n_points,
            burn_in,
        };
        let predicted = law.predicted_exponent(lambda.lambda_hat);
        let combined = slope_se.hypot(2.0 * lambda.std_err);
        let floor = SLOPE_RESOLUTION * predicted.abs().max(1.0);
        let band = (options.tolerance_sigma * combined).max(floor);
        let verdict = if (slope - predicted).abs() <= band {
            Verdict::Consistent
        } else {
            Verdict::Inconsistent
        };
        let theta_p = check_theta_p(&ensemble, predicted, options.h_exponent, options.c_h)?;
        Ok(LawReport {
            law,
            predicted_exponent: predicted,
            measured,
            lambda_estimate: lambda,
            combined_std_err: combined,
            tolerance_sigma: options.tolerance_sigma,
            band,
            verdict,
            theta_p,
            interpretation: "theta_p".into(),
        })
    };

    let (cap_fits, cap_series): (Vec<_>, Vec<_>) =
        replicas.iter().map(|r| (r.cap, r.log_cap.clone())).unzip();
    let capacity = report(Law::Capacity, cap_fits, cap_series)?;
    let (pow_fits, pow_series): (Vec<_>, Vec<_>) =
        replicas.into_iter().map(|r| (r.pow, r.log_pow)).unzip();
    let power = report(Law::Power, pow_fits, pow_series)?;
    Ok(LawVerification {
        capacity,
        power,
        replica_slopes,
    })
}

pub fn verify_capacity_law(
    config: &NetworkConfig,
    n_steps: usize,
    n_replicas: usize,
) -> Result<LawReport> {
    verify_laws(config, n_steps, n_replicas, &VerifyOptions::default()).map(|v| v.capacity)
}

pub fn verify_power_law(
    config: &NetworkConfig,
    n_steps: usize,
    n_replicas: usize,
) -> Result<LawReport> {
    verify_laws(config, n_steps, n_replicas, &VerifyOptions::default()).map(|v| v.power)
}
