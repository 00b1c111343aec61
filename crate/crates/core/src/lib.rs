//! Continuous random Fibonacci sequences and the cooperative amplify-and-forward
//! relay networks they describe.
//!
//! The information magnitude at relay `n` follows
//! `I_n = eta_{n-1,n} I_{n-1} + eta_{n-2,n} I_{n-2}` with i.i.d. strictly
//! positive coefficients. This crate simulates that recursion and the
//! accompanying noise-power recursion in overflow-safe log form, estimates the
//! top Lyapunov exponent `lambda`, checks the capacity and transmit-power
//! scaling laws it governs, and calibrates the amplification gain to
//! `lambda = 0`.

pub mod calibration;
pub mod cli;
pub mod cocycle;
pub mod coeff;
pub mod config;
pub mod error;
pub mod lyapunov;
pub mod metrics;
pub mod output;
pub mod scaling;

pub use calibration::{
    bracket_expand, find_zero_lyapunov_gain, CalibrationOptions, CalibrationResult,
};
pub use cocycle::{run_trajectory, NetworkConfig, Trajectory};
pub use coeff::{expected_log_eta, sample_eta, CoefficientModel, GainPolicy, RngStream};
pub use error::{Error, Result};
pub use lyapunov::{
    estimate_lambda, estimate_noise_exponent, lambda_deterministic_closed_form, EstimatorKind,
    EstimatorOptions, LyapunovEstimate,
};
pub use scaling::{
    check_theta_p, slope_estimate, verify_laws, LawReport, LawVerification, SlopeFit,
};
