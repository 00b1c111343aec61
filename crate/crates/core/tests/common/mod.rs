//! Exact rational replay of the information and noise recursions.

#![allow(dead_code)]

use fibrelay::{CoefficientModel, GainPolicy, RngStream};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};

/// Natural log of a positive big integer, good to a few ulps.
fn ln_bigint(x: &BigInt) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        let v: f64 = x.to_string().parse().unwrap();
        return v.ln();
    }
    let shift = bits - 64;
    let top: BigInt = x >> shift;
    let v: f64 = top.to_string().parse().unwrap();
    v.ln() + shift as f64 * std::f64::consts::LN_2
}

pub fn ln_rational(x: &BigRational) -> f64 {
    assert!(x.is_positive(), "log of non-positive rational");
    ln_bigint(x.numer()) - ln_bigint(x.denom())
}

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite draw")
}

/// `(log I_n, log N_n^2)` for nodes `1..=n`, from the same draws the engine
/// uses for `stream_id`, with no renormalization and no rounding.
pub fn exact_logs(
    model: CoefficientModel,
    gains: &GainPolicy,
    n0: f64,
    i0: f64,
    n: usize,
    master_seed: u64,
    stream_id: u64,
) -> Vec<(f64, f64)> {
    let mut rng = RngStream::new(master_seed, stream_id).generator();
    let n0 = exact(n0);
    let eta01 = exact(model.draw(&mut rng) * gains.at(1));
    let mut i_prev = exact(i0);
    let mut i_cur = &eta01 * &i_prev;
    let mut w = [BigRational::zero(), BigRational::zero(), BigRational::one()];
    let mut out = Vec::with_capacity(n);
    for node in 2..=n {
        let g = gains.at(node);
        let e2 = exact(model.draw(&mut rng) * g);
        let e1 = exact(model.draw(&mut rng) * g);
        let next = &e2 * &i_prev + &e1 * &i_cur;
        let [a, b, c] = w;
        w = [&b + &n0 * &c, &e2 * &e2 * &a + &e1 * &e1 * &b + &n0 * &c, c];
        if node == 2 {
            out.push((ln_rational(&i_cur), ln_rational(&w[0])));
        }
        i_prev = std::mem::replace(&mut i_cur, next);
        out.push((ln_rational(&i_cur), ln_rational(&w[1])));
    }
    out
}

/// Largest absolute deviation between the engine and the exact replay.
pub fn max_engine_deviation(master_seed: u64, stream_id: u64, n: usize) -> f64 {
    let model = CoefficientModel::Rayleigh { mu: 1.0 };
    let gains = GainPolicy::Constant(1.0);
    let config = fibrelay::NetworkConfig {
        model,
        gains: gains.clone(),
        n0: 1.0,
        i0: 1.0,
        n_nodes: n,
        master_seed,
    };
    let t = fibrelay::run_trajectory(&config, stream_id).unwrap();
    let oracle = exact_logs(model, &gains, 1.0, 1.0, n, master_seed, stream_id);
    assert_eq!(oracle.len(), t.len());
    oracle
        .iter()
        .enumerate()
        .map(|(k, &(log_i, log_n_sq))| {
            let di = (0.5 * t.log_i_sq[k] - log_i).abs();
            let dn = (t.log_n_sq[k] - log_n_sq).abs();
            di.max(dn)
        })
        .fold(0.0, f64::max)
}
