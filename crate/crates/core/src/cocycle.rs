//! Renormalized log-domain runs of the information and noise cocycles.
//!
//! The information magnitude obeys
//!
//! ```text
//! [I_{n-1}]   [   0          1      ] [I_{n-2}]
//! [I_n    ] = [eta_{n-2,n} eta_{n-1,n}] [I_{n-1}],   (I_0, I_1) = (I_0, eta_{0,1} I_0)
//! ```
//!
//! and the received noise power obeys the 3x3 product
//!
//! ```text
//! [N^2_{n-1}]   [    0            1         n0] [N^2_{n-2}]
//! [N^2_n    ] = [eta^2_{n-2,n} eta^2_{n-1,n} n0] [N^2_{n-1}],   started from (0, 0, 1).
//! [   1     ]   [    0            0          1] [   1     ]
//! ```
//!
//! Both states keep a vector with sup-norm 1 plus an accumulated `log_scale`,
//! so `log I_n = log_scale + log u_cur` stays exact while the raw values would
//! leave the double range within a few hundred nodes.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::coeff::{CoefficientModel, GainPolicy, RngStream};
use crate::error::{require_positive, Error, Result};
use crate::metrics::{capacity_nats, snr_log, transmit_power_log};

/// A cooperative amplify-and-forward chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub model: CoefficientModel,
    pub gains: GainPolicy,
    /// Noise power added per reception.
    pub n0: f64,
    /// Source symbol magnitude.
    pub i0: f64,
    pub n_nodes: usize,
    pub master_seed: u64,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.require_positive_class()?;
        require_positive("n0", self.n0)?;
        require_positive("i0", self.i0)?;
        if self.n_nodes < 2 {
            return Err(Error::config(
                "n_nodes",
                format!("need at least 2 nodes, got {}", self.n_nodes),
            ));
        }
        self.gains.validate(self.n_nodes)
    }
}

/// Divides `v` by its largest absolute component and adds the log of that
/// component to `log_scale`. A vector already at sup-norm 1 is left untouched.
pub fn renormalize(v: &mut [f64], log_scale: &mut f64) -> Result<()> {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 || !max.is_finite() {
        return Err(Error::Degenerate(format!("cannot renormalize {v:?}")));
    }
    if max != 1.0 {
        for x in v.iter_mut() {
            *x /= max;
        }
        *log_scale += max.ln();
    }
    Ok(())
}

/// Renormalized `(I_{n-1}, I_n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoCocycleState {
    pub u_prev: f64,
    pub u_cur: f64,
    pub log_scale: f64,
    /// Node index of `u_cur`.
    pub n: usize,
}

/// State for node 1: the vector `(I_0, eta_{0,1} I_0)`.
pub fn init_info(i0: f64, eta01: f64) -> Result<InfoCocycleState> {
    require_positive("i0", i0)?;
    require_positive("eta01", eta01)?;
    let mut state = InfoCocycleState {
        u_prev: i0,
        u_cur: eta01 * i0,
        log_scale: 0.0,
        n: 1,
    };
    state.renormalize()?;
    Ok(state)
}

/// One checked application of the information matrix, renormalized.
pub fn step_info(state: &InfoCocycleState, eta_2: f64, eta_1: f64) -> Result<InfoCocycleState> {
    require_positive("eta_2", eta_2)?;
    require_positive("eta_1", eta_1)?;
    let mut next = *state;
    next.step_raw(eta_2, eta_1);
    next.renormalize()?;
    Ok(next)
}

impl InfoCocycleState {
    /// Applies the matrix without renormalizing. Inputs are trusted.
    #[inline]
    pub fn step_raw(&mut self, eta_2: f64, eta_1: f64) {
        let next = eta_2 * self.u_prev + eta_1 * self.u_cur;
        self.u_prev = self.u_cur;
        self.u_cur = next;
        self.n += 1;
    }

    pub fn renormalize(&mut self) -> Result<()> {
        let mut v = [self.u_prev, self.u_cur];
        renormalize(&mut v, &mut self.log_scale)?;
        [self.u_prev, self.u_cur] = v;
        Ok(())
    }

    /// `log I_n`.
    #[inline]
    pub fn log_current(&self) -> f64 {
        self.log_scale + self.u_cur.ln()
    }

    /// `log I_{n-1}`.
    #[inline]
    pub fn log_previous(&self) -> f64 {
        self.log_scale + self.u_prev.ln()
    }
}

/// Renormalized image of `(N^2_{n-1}, N^2_n, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseCocycleState {
    pub w: [f64; 3],
    pub log_scale: f64,
    /// Number of matrix factors applied plus one.
    pub n: usize,
}

impl Default for NoiseCocycleState {
    fn default() -> Self {
        Self::new()
    }
}

impl NoiseCocycleState {
    /// The starting vector `(0, 0, 1)`.
    pub fn new() -> Self {
        Self {
            w: [0.0, 0.0, 1.0],
            log_scale: 0.0,
            n: 1,
        }
    }

    /// Applies the noise matrix without renormalizing. Inputs are trusted.
    #[inline]
    pub fn step_raw(&mut self, eta_2_sq: f64, eta_1_sq: f64, n0: f64) {
        let [a, b, c] = self.w;
        self.w = [b + n0 * c, eta_2_sq * a + eta_1_sq * b + n0 * c, c];
        self.n += 1;
    }

    pub fn renormalize(&mut self) -> Result<()> {
        renormalize(&mut self.w, &mut self.log_scale)
    }

    /// `log N^2_n`; `-inf` for the zero-noise trajectory.
    #[inline]
    pub fn log_current(&self) -> f64 {
        self.log_scale + self.w[1].ln()
    }

    /// `log N^2_{n-1}`.
    #[inline]
    pub fn log_previous(&self) -> f64 {
        self.log_scale + self.w[0].ln()
    }

    /// `log_scale + log w[2]`, identically zero in exact arithmetic while `w[2]`
    /// is representable; `-inf` once growth pushes it below the double range.
    pub fn constant_slot_residual(&self) -> f64 {
        self.log_scale + self.w[2].ln()
    }
}

/// One checked application of the noise matrix, renormalized. `n0 = 0` is
/// accepted and leaves the zero trajectory in place.
pub fn step_noise(
    state: &NoiseCocycleState,
    eta_2_sq: f64,
    eta_1_sq: f64,
    n0: f64,
) -> Result<NoiseCocycleState> {
    require_positive("eta_2_sq", eta_2_sq)?;
    require_positive("eta_1_sq", eta_1_sq)?;
    if !(n0 >= 0.0 && n0.is_finite()) {
        return Err(Error::Domain {
            name: "n0",
            requirement: "non-negative and finite",
            value: n0,
        });
    }
    let mut next = *state;
    next.step_raw(eta_2_sq, eta_1_sq, n0);
    next.renormalize()?;
    Ok(next)
}

/// How often the engine renormalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineOptions {
    /// Renormalize after every `renorm_period` steps. Periods up to a few dozen
    /// are safe for exponents of order one.
    pub renorm_period: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self { renorm_period: 1 }
    }
}

/// Per-node records for nodes `1..=n_nodes`; index `k` holds node `k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub config: NetworkConfig,
    pub stream_id: u64,
    pub log_i_sq: Vec<f64>,
    pub log_n_sq: Vec<f64>,
    pub log_snr: Vec<f64>,
    pub capacity_nats: Vec<f64>,
    pub log_x_sq: Vec<f64>,
}

pub const TRAJECTORY_CSV_HEADER: &str = "n,log_I_sq,log_N_sq,log_snr,capacity_nats,log_X_sq";

impl Trajectory {
    fn with_capacity(config: &NetworkConfig, stream_id: u64) -> Self {
        let n = config.n_nodes;
        Self {
            config: config.clone(),
            stream_id,
            log_i_sq: Vec::with_capacity(n),
            log_n_sq: Vec::with_capacity(n),
            log_snr: Vec::with_capacity(n),
            capacity_nats: Vec::with_capacity(n),
            log_x_sq: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, log_i: f64, log_n_sq: f64) {
        let log_i_sq = 2.0 * log_i;
        let log_snr = snr_log(log_i_sq, log_n_sq);
        self.log_i_sq.push(log_i_sq);
        self.log_n_sq.push(log_n_sq);
        self.log_snr.push(log_snr);
        self.capacity_nats.push(capacity_nats(log_snr));
        self.log_x_sq.push(transmit_power_log(log_i_sq, log_n_sq));
    }

    pub fn len(&self) -> usize {
        self.log_i_sq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_i_sq.is_empty()
    }

    /// Writes the CSV export, 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{TRAJECTORY_CSV_HEADER}")?;
        for k in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                k + 1,
                fmt_f64(self.log_i_sq[k]),
                fmt_f64(self.log_n_sq[k]),
                fmt_f64(self.log_snr[k]),
                fmt_f64(self.capacity_nats[k]),
                fmt_f64(self.log_x_sq[k]),
            )?;
        }
        Ok(())
    }
}

/// Scientific notation with 17 significant digits; `inf`, `-inf`, `NaN` verbatim.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Simulates one replica with the default engine options.
pub fn run_trajectory(config: &NetworkConfig, stream_id: u64) -> Result<Trajectory> {
    run_trajectory_with(config, stream_id, EngineOptions::default())
}

/// Simulates one replica. Draw order: `eta_{0,1}`, then for each node
/// `i = 2..=n_nodes` first `eta_{i-2,i}` and then `eta_{i-1,i}`. The same draws
/// feed both cocycles (squared for the noise system).
pub fn run_trajectory_with(
    config: &NetworkConfig,
    stream_id: u64,
    options: EngineOptions,
) -> Result<Trajectory> {
    config.validate()?;
    if options.renorm_period == 0 {
        return Err(Error::config("renorm_period", "must be at least 1"));
    }
    let model = config.model;
    let gains = &config.gains;
    let mut rng = RngStream::new(config.master_seed, stream_id).generator();
    let mut traj = Trajectory::with_capacity(config, stream_id);

    let eta01 = model.draw(&mut rng) * gains.at(1);
    let mut info = init_info(config.i0, eta01)?;
    let mut noise = NoiseCocycleState::new();

    for node in 2..=config.n_nodes {
        let g = gains.at(node);
        let eta_2 = model.draw(&mut rng) * g;
        let eta_1 = model.draw(&mut rng) * g;
        info.step_raw(eta_2, eta_1);
        noise.step_raw(eta_2 * eta_2, eta_1 * eta_1, config.n0);
        if node % options.renorm_period == 0 || node == config.n_nodes {
            info.renormalize()?;
            noise.renormalize()?;
        }
        if node == 2 {
            // Node 1's noise power is the first slot after the first factor.
            traj.push(info.log_previous(), noise.log_previous());
        }
        traj.push(info.log_current(), noise.log_current());
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{capacity_nats, snr_log, transmit_power_log};
    use proptest::prelude::*;

    fn det_config(c: f64, g: f64, n: usize) -> NetworkConfig {
        NetworkConfig {
            model: CoefficientModel::Deterministic { c },
            gains: GainPolicy::Constant(g),
            n0: 1.0,
            i0: 1.0,
            n_nodes: n,
            master_seed: 7,
        }
    }

    #[test]
    fn init_examples() {
        let s = init_info(1.0, 1.0).unwrap();
        assert_eq!((s.u_prev, s.u_cur, s.log_scale), (1.0, 1.0, 0.0));
        let s = init_info(1.0, 2.0).unwrap();
        assert_eq!((s.u_prev, s.u_cur), (0.5, 1.0));
        assert_eq!(s.log_scale, 2f64.ln());
        let s = init_info(2.0, 0.5).unwrap();
        assert_eq!((s.u_prev, s.u_cur), (1.0, 0.5));
        assert_eq!(s.log_scale, 2f64.ln());
        assert!(init_info(0.0, 1.0).is_err());
        assert!(init_info(1.0, -1.0).is_err());
    }

    #[test]
    fn fibonacci_numbers() {
        let mut s = init_info(1.0, 1.0).unwrap();
        for _ in 2..=4 {
            s = step_info(&s, 1.0, 1.0).unwrap();
        }
        assert_eq!(s.n, 4);
        assert!((s.log_current().exp() - 5.0).abs() < 1e-12);
        assert!((s.log_previous().exp() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn substitution_step() {
        let s = init_info(1.0, 1.0).unwrap();
        let s = step_info(&s, 0.2, 0.2).unwrap();
        assert!((s.log_current() - 0.4f64.ln()).abs() < 1e-15);
        assert!(step_info(&s, 0.0, 1.0).is_err());
    }

    #[test]
    fn noise_examples() {
        let s = NoiseCocycleState::new();
        let s = step_noise(&s, 0.3, 7.0, 1.0).unwrap();
        assert_eq!(s.w, [1.0, 1.0, 1.0]);
        assert_eq!(s.log_scale, 0.0);
        let s = step_noise(&s, 1.0, 1.0, 1.0).unwrap();
        // raw (2, 3, 1)
        assert!((s.log_previous() - 2f64.ln()).abs() < 1e-15);
        assert!((s.log_current() - 3f64.ln()).abs() < 1e-15);
        assert!(s.constant_slot_residual().abs() < 1e-15);

        let mut z = NoiseCocycleState::new();
        for _ in 0..50 {
            z = step_noise(&z, 2.0, 3.0, 0.0).unwrap();
        }
        assert_eq!(z.w, [0.0, 0.0, 1.0]);
        assert_eq!(z.log_current(), f64::NEG_INFINITY);
    }

    #[test]
    fn renormalize_examples() {
        let mut v = [2.0, 4.0];
        let mut s = 0.0;
        renormalize(&mut v, &mut s).unwrap();
        assert_eq!(v, [0.5, 1.0]);
        assert_eq!(s, 4f64.ln());

        let mut v = [1.0, 1.0];
        let mut s = 0.25;
        renormalize(&mut v, &mut s).unwrap();
        assert_eq!((v, s), ([1.0, 1.0], 0.25));

        let mut v = [0.0, 0.0, 1.0];
        let mut s = 0.0;
        renormalize(&mut v, &mut s).unwrap();
        assert_eq!((v, s), ([0.0, 0.0, 1.0], 0.0));

        let mut v = [0.0, 0.0];
        assert!(matches!(
            renormalize(&mut v, &mut s),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn hand_evaluated_three_node_chain() {
        let t = run_trajectory(&det_config(1.0, 1.0, 3), 0).unwrap();
        assert_eq!(t.len(), 3);
        assert!((t.log_i_sq[2] - 2.0 * 3f64.ln()).abs() < 1e-14);
        assert!((t.log_n_sq[2] - 3f64.ln()).abs() < 1e-14);
        assert!((t.capacity_nats[2] - 4f64.ln()).abs() < 1e-14);
        // node 1: I_1 = 1, N_1^2 = n0
        assert_eq!(t.log_i_sq[0], 0.0);
        assert_eq!(t.log_n_sq[0], 0.0);
    }

    #[test]
    fn config_errors() {
        assert!(run_trajectory(&det_config(1.0, 1.0, 1), 0).is_err());
        let mut c = det_config(1.0, 1.0, 5);
        c.n0 = 0.0;
        assert!(run_trajectory(&c, 0).is_err());
        let mut c = det_config(1.0, 1.0, 5);
        c.model = CoefficientModel::SignedBernoulli { p: 0.5 };
        assert!(matches!(run_trajectory(&c, 0), Err(Error::ValidationOnly)));
    }

    #[test]
    fn deterministic_replay() {
        let mut c = det_config(1.0, 1.0, 200);
        c.model = CoefficientModel::Rayleigh { mu: 1.0 };
        let a = run_trajectory(&c, 3).unwrap();
        let b = run_trajectory(&c, 3).unwrap();
        assert_eq!(a, b);
        let other = run_trajectory(&c, 4).unwrap();
        assert_ne!(a.log_i_sq, other.log_i_sq);
    }

    #[test]
    fn csv_layout() {
        let t = run_trajectory(&det_config(1.0, 1.0, 3), 0).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TRAJECTORY_CSV_HEADER);
        assert_eq!(lines.len(), 4);
        let fields: Vec<&str> = lines[3].split(',').collect();
        assert_eq!(fields.len(), 6);
        assert_eq!(fields[0], "3");
        assert!(fields[1].contains('e'));
        let log_i_sq: f64 = fields[1].parse().unwrap();
        assert!((log_i_sq - 2.0 * 3f64.ln()).abs() < 1e-14);
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
    }

    fn rayleigh_config(n: usize, n0: f64) -> NetworkConfig {
        NetworkConfig {
            model: CoefficientModel::Rayleigh { mu: 1.0 },
            gains: GainPolicy::Constant(0.6),
            n0,
            i0: 1.0,
            n_nodes: n,
            master_seed: 21,
        }
    }

    #[test]
    fn noise_never_drops_below_n0() {
        for n0 in [1e-3, 1.0, 50.0] {
            let t = run_trajectory(&rayleigh_config(5_000, n0), 2).unwrap();
            let floor = n0.ln() - 1e-12;
            assert!(t.log_n_sq.iter().all(|&x| x >= floor), "n0={n0}");
            assert_eq!(t.log_n_sq[0], n0.ln());
        }
    }

    #[test]
    fn renormalization_period_does_not_matter() {
        let c = rayleigh_config(20_000, 1.0);
        let a = run_trajectory_with(&c, 1, EngineOptions { renorm_period: 1 }).unwrap();
        let b = run_trajectory_with(&c, 1, EngineOptions { renorm_period: 32 }).unwrap();
        let tol = 1e-10 * c.n_nodes as f64;
        for k in (31..c.n_nodes).step_by(32) {
            assert!(
                (a.log_i_sq[k] - b.log_i_sq[k]).abs() < tol,
                "node {}",
                k + 1
            );
            assert!(
                (a.log_n_sq[k] - b.log_n_sq[k]).abs() < tol,
                "node {}",
                k + 1
            );
        }
        let last = c.n_nodes - 1;
        assert!((a.log_i_sq[last] - b.log_i_sq[last]).abs() < tol);
    }

    #[test]
    fn long_chains_stay_finite() {
        for g in [0.05, 20.0] {
            let mut c = rayleigh_config(100_000, 1.0);
            c.gains = GainPolicy::Constant(g);
            let t = run_trajectory(&c, 0).unwrap();
            assert!(
                t.log_i_sq
                    .iter()
                    .chain(&t.log_n_sq)
                    .chain(&t.log_x_sq)
                    .all(|x| x.is_finite()),
                "g={g}"
            );
            assert!(t.capacity_nats.iter().all(|c| c.is_finite() && *c >= 0.0));
            let last = *t.log_i_sq.last().unwrap();
            if g > 1.0 {
                assert!(last > 1e4);
            } else {
                assert!(last < -1e4);
            }
        }
    }

    #[test]
    fn constant_slot_stays_one() {
        let mut rng = RngStream::new(1, 0).generator();
        let model = CoefficientModel::Rayleigh { mu: 1.0 };
        let mut state = NoiseCocycleState::new();
        for _ in 0..10_000 {
            let e2 = model.draw(&mut rng) * 0.5;
            let e1 = model.draw(&mut rng) * 0.5;
            state = step_noise(&state, e2 * e2, e1 * e1, 0.5).unwrap();
        }
        assert!(
            state.constant_slot_residual().abs() < 1e-9,
            "{}",
            state.constant_slot_residual()
        );
    }

    #[test]
    fn stored_metrics_recompute_exactly() {
        let t = run_trajectory(&rayleigh_config(2_000, 0.3), 5).unwrap();
        for k in 0..t.len() {
            let lg = snr_log(t.log_i_sq[k], t.log_n_sq[k]);
            assert_eq!(t.log_snr[k].to_bits(), lg.to_bits());
            assert_eq!(t.capacity_nats[k].to_bits(), capacity_nats(lg).to_bits());
            assert_eq!(
                t.log_x_sq[k].to_bits(),
                transmit_power_log(t.log_i_sq[k], t.log_n_sq[k]).to_bits()
            );
        }
    }

    proptest! {
        #[test]
        fn noise_step_is_monotone_in_n0(
            e2 in 1e-3f64..10.0,
            e1 in 1e-3f64..10.0,
            n0 in 1e-3f64..10.0,
            steps in 1usize..40,
        ) {
            let mut lo = NoiseCocycleState::new();
            let mut hi = NoiseCocycleState::new();
            for _ in 0..steps {
                lo = step_noise(&lo, e2 * e2, e1 * e1, n0).unwrap();
                hi = step_noise(&hi, e2 * e2, e1 * e1, 2.0 * n0).unwrap();
                prop_assert!(lo.log_current() >= n0.ln() - 1e-12);
                prop_assert!(hi.log_current() >= lo.log_current());
            }
        }

        #[test]
        fn info_state_stays_normalized(
            e in proptest::collection::vec((1e-3f64..1e3, 1e-3f64..1e3), 1..60),
        ) {
            let mut s = init_info(1.0, 1.0).unwrap();
            for (a, b) in e {
                s = step_info(&s, a, b).unwrap();
                prop_assert_eq!(s.u_prev.abs().max(s.u_cur.abs()), 1.0);
                prop_assert!(s.log_current().is_finite());
            }
        }
    }
}
