//! SNR, capacity and transmit power in the log domain.
//!
//! Raw SNR values span hundreds of orders of magnitude along one trajectory, so
//! nothing here ever exponentiates `log gamma` unless the result is known to be
//! representable.

/// Crossover of the softplus branches.
const SOFTPLUS_CROSSOVER: f64 = 30.0;

/// `log gamma_n = log I_n^2 - log N_n^2`.
#[inline]
pub fn snr_log(log_i_sq: f64, log_n_sq: f64) -> f64 {
    log_i_sq - log_n_sq
}

/// Capacity `log(1 + gamma)` in nats per channel use, from `log gamma`.
#[inline]
pub fn capacity_nats(log_gamma: f64) -> f64 {
    if log_gamma > SOFTPLUS_CROSSOVER {
        log_gamma + (-log_gamma).exp()
    } else if log_gamma < -SOFTPLUS_CROSSOVER {
        log_gamma.exp()
    } else {
        log_gamma.exp().ln_1p()
    }
}

/// `log c_n = log log(1 + gamma)`, finite even when `c_n` itself underflows.
#[inline]
pub fn log_capacity_nats(log_gamma: f64) -> f64 {
    if log_gamma < -SOFTPLUS_CROSSOVER {
        // log(x - x^2/2 + ...) with x = e^{log gamma}
        log_gamma + (-0.5 * log_gamma.exp()).ln_1p()
    } else {
        capacity_nats(log_gamma).ln()
    }
}

/// `log X_n^2 = log(I_n^2 + N_n^2)` by two-term log-sum-exp.
#[inline]
pub fn transmit_power_log(log_i_sq: f64, log_n_sq: f64) -> f64 {
    let (hi, lo) = if log_i_sq >= log_n_sq {
        (log_i_sq, log_n_sq)
    } else {
        (log_n_sq, log_i_sq)
    };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Converts nats to bits.
#[inline]
pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn snr_examples() {
        assert_eq!(snr_log(0.0, 0.0), 0.0);
        assert_eq!(snr_log(2.0, 1.0), 1.0);
        assert_eq!(snr_log(-700.0, 0.0), -700.0);
    }

    #[test]
    fn capacity_examples() {
        assert_eq!(capacity_nats(f64::NEG_INFINITY), 0.0);
        let e_minus_one = std::f64::consts::E - 1.0;
        assert!((capacity_nats(e_minus_one.ln()) - 1.0).abs() < 1e-15);
        // log(1+x) = x - x^2/2 + ..., x = e^-50; the quadratic term is far below one ulp.
        let x = (-50.0f64).exp();
        let c = capacity_nats(-50.0);
        assert!(c > 0.0);
        assert!(((c - x) / x).abs() < 1e-15);
        assert!((c - 1.928_749_847_963_918e-22).abs() < 1e-35);
    }

    #[test]
    fn log_capacity_survives_underflow() {
        assert!((log_capacity_nats(-11_658.0) - -11_658.0).abs() < 1e-12);
        assert!((log_capacity_nats(-50.0) - -50.0).abs() < 1e-15);
        let mid = 3.0f64;
        assert!((log_capacity_nats(mid) - mid.exp().ln_1p().ln()).abs() < 1e-14);
        assert_eq!(log_capacity_nats(f64::NEG_INFINITY), f64::NEG_INFINITY);
    }

    #[test]
    fn power_examples() {
        assert!((transmit_power_log(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(transmit_power_log(3f64.ln(), f64::NEG_INFINITY), 3f64.ln());
        assert_eq!(transmit_power_log(1000.0, 0.0), 1000.0);
        assert_eq!(
            transmit_power_log(f64::NEG_INFINITY, f64::NEG_INFINITY),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn bits() {
        assert!((nats_to_bits(std::f64::consts::LN_2) - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn power_bounds(a in -800.0f64..800.0, b in -800.0f64..800.0) {
            let x = transmit_power_log(a, b);
            let hi = a.max(b);
            prop_assert!(x >= hi);
            prop_assert!(x <= hi + std::f64::consts::LN_2 + 1e-12);
        }

        #[test]
        fn capacity_monotone(a in -700.0f64..700.0, d in 1e-6f64..10.0) {
            prop_assert!(capacity_nats(a + d) > capacity_nats(a));
        }

        #[test]
        fn capacity_exact_on_moderate_values(lg in -20.0f64..20.0) {
            let direct = (1.0 + lg.exp()).ln();
            prop_assert!((capacity_nats(lg) - direct).abs() <= 1e-12);
        }
    }
}
