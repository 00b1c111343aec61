//! Zero-Lyapunov gain calibration.
//!
//! Every evaluation of `lambda_hat(g)` reuses the streams of one master seed,
//! so for a fixed seed `g -> lambda_hat(g)` is a deterministic, continuous and
//! strictly increasing function (each hop magnitude scales with `g` and the
//! recursion is monotone in its coefficients). Plain bisection on that function
//! then needs no stochastic-approximation machinery.

use serde::{Deserialize, Serialize};

use crate::coeff::{CoefficientModel, GainPolicy};
use crate::error::{require_positive, Error, Result};
use crate::lyapunov::{estimate_lambda, EstimatorKind, EstimatorOptions, LyapunovEstimate};

/// Doublings allowed on each side before giving up.
pub const MAX_DOUBLINGS: u32 = 60;

/// A value counts as signed only if it clears zero by two standard errors plus
/// this floor, which absorbs rounding in the zero-variance deterministic case.
pub const SIGN_FLOOR: f64 = 1e-12;

/// XOR mask deriving the re-validation seed from the calibration seed.
pub const REVALIDATION_SEED_MASK: u64 = 0x9E37_79B9_7F4A_7C15;

const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub n_steps: usize,
    pub n_replicas: usize,
    /// Upper bound for adaptive growth of `n_steps`.
    pub max_steps: usize,
    pub g_init: f64,
    pub estimator: EstimatorOptions,
}

impl CalibrationOptions {
    pub fn new(n_steps: usize, n_replicas: usize) -> Self {
        Self {
            n_steps,
            n_replicas,
            max_steps: n_steps.saturating_mul(8),
            g_init: 1.0,
            estimator: EstimatorOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub g_star: f64,
    pub lambda_at_g_star: LyapunovEstimate,
    /// Every bracket `(g_lo, g_hi)` visited, outermost first.
    pub bracket_history: Vec<(f64, f64)>,
    pub evaluations: usize,
    pub converged: bool,
    pub tolerance: f64,
    /// Independent estimate at `g_star` on the seed `master_seed ^ REVALIDATION_SEED_MASK`.
    pub revalidation: LyapunovEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Negative,
    Positive,
    Unresolved,
}

fn side(est: &LyapunovEstimate) -> Side {
    let margin = 2.0 * est.std_err + SIGN_FLOOR;
    if est.lambda_hat + margin < 0.0 {
        Side::Negative
    } else if est.lambda_hat - margin > 0.0 {
        Side::Positive
    } else {
        Side::Unresolved
    }
}

struct Evaluator<'a> {
    model: &'a CoefficientModel,
    master_seed: u64,
    n_steps: usize,
    n_replicas: usize,
    options: EstimatorOptions,
    evaluations: usize,
}

impl Evaluator<'_> {
    fn lambda(&mut self, g: f64) -> Result<LyapunovEstimate> {
        self.evaluations += 1;
        estimate_lambda(
            self.model,
            &GainPolicy::Constant(g),
            self.n_steps,
            self.n_replicas,
            self.master_seed,
            EstimatorKind::GrowthRate,
            &self.options,
        )
    }
}

/// Bracket with its endpoint estimates.
struct Bracket {
    lo: f64,
    hi: f64,
    at_lo: LyapunovEstimate,
    at_hi: LyapunovEstimate,
}

fn expand(eval: &mut Evaluator<'_>, g_init: f64) -> Result<Bracket> {
    let unbracketable = || Error::Unbracketable {
        g_init,
        doublings: MAX_DOUBLINGS,
    };
    let at_init = eval.lambda(g_init)?;
    let (mut lo, mut at_lo, mut hi, mut at_hi) = match side(&at_init) {
        Side::Negative => {
            let hi = 2.0 * g_init;
            (g_init, at_init, hi, eval.lambda(hi)?)
        }
        Side::Positive => {
            let lo = 0.5 * g_init;
            (lo, eval.lambda(lo)?, g_init, at_init)
        }
        Side::Unresolved => {
            let (lo, hi) = (0.5 * g_init, 2.0 * g_init);
            (lo, eval.lambda(lo)?, hi, eval.lambda(hi)?)
        }
    };
    let mut doublings = 0;
    while side(&at_lo) != Side::Negative {
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(unbracketable());
        }
        if side(&at_lo) == Side::Positive {
            hi = lo;
            at_hi = at_lo;
        }
        lo *= 0.5;
        at_lo = eval.lambda(lo)?;
    }
    let mut doublings = 0;
    while side(&at_hi) != Side::Positive {
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(unbracketable());
        }
        if side(&at_hi) == Side::Negative {
            lo = hi;
            at_lo = at_hi;
        }
        hi *= 2.0;
        at_hi = eval.lambda(hi)?;
    }
    Ok(Bracket {
        lo,
        hi,
        at_lo,
        at_hi,
    })
}

/// Geometric search from `g_init` for gains with clearly negative and clearly
/// positive exponent under common random numbers.
pub fn bracket_expand(
    model: &CoefficientModel,
    g_init: f64,
    master_seed: u64,
    n_steps: usize,
    n_replicas: usize,
    options: &EstimatorOptions,
) -> Result<(f64, f64)> {
    model.require_positive_class()?;
    require_positive("g_init", g_init)?;
    let mut eval = Evaluator {
        model,
        master_seed,
        n_steps,
        n_replicas,
        options: *options,
        evaluations: 0,
    };
    let b = expand(&mut eval, g_init)?;
    Ok((b.lo, b.hi))
}

/// Finds the constant gain `g*` with `lambda(g*) = 0`.
///
/// Bisection runs until `|lambda_hat| <= tol`, `0` lies in the 95% interval and
/// the bracket is narrower than `tol` relative to its midpoint; the returned
/// gain is the linear-interpolation root inside the final bracket. When the
/// Monte Carlo half-width at the midpoint exceeds `tol`, `n_steps` doubles (up
/// to `max_steps`) and the bracket is re-checked at the new length. A half-width
/// still above `tol` at `max_steps` yields `converged = false` with the best
/// iterate.
pub fn find_zero_lyapunov_gain(
    model: &CoefficientModel,
    tol: f64,
    master_seed: u64,
    options: &CalibrationOptions,
) -> Result<CalibrationResult> {
    model.require_positive_class()?;
    require_positive("tol", tol)?;
    require_positive("g_init", options.g_init)?;
    let mut eval = Evaluator {
        model,
        master_seed,
        n_steps: options.n_steps,
        n_replicas: options.n_replicas,
        options: options.estimator,
        evaluations: 0,
    };
    let mut bracket = expand(&mut eval, options.g_init)?;
    let mut history = vec![(bracket.lo, bracket.hi)];
    let mut best: Option<(f64, LyapunovEstimate)> = None;

    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (bracket.lo + bracket.hi);
        let at_mid = eval.lambda(mid)?;

        if Z_HALF_WIDTH * at_mid.std_err > tol && eval.n_steps < options.max_steps {
            eval.n_steps = (eval.n_steps * 2).min(options.max_steps);
            log::info!(
                "calibration: Monte Carlo resolution above tolerance, n_steps -> {}",
                eval.n_steps
            );
            bracket = revalidate_bracket(&mut eval, bracket)?;
            // Earlier brackets were judged at the shorter run length.
            history = vec![(bracket.lo, bracket.hi)];
            best = None;
            continue;
        }
        improve(mid, at_mid, &mut best);

        let narrow = (bracket.hi - bracket.lo) / mid <= tol;
        if narrow && at_mid.lambda_hat.abs() <= tol && at_mid.ci_contains(0.0) {
            break;
        }
        if at_mid.lambda_hat == 0.0 {
            break;
        }
        if at_mid.lambda_hat < 0.0 {
            bracket.lo = mid;
            bracket.at_lo = at_mid;
        } else {
            bracket.hi = mid;
            bracket.at_hi = at_mid;
        }
        history.push((bracket.lo, bracket.hi));
        if bracket.hi - bracket.lo <= 4.0 * f64::EPSILON * bracket.hi {
            break;
        }
    }

    // Secant root inside the final bracket.
    let (flo, fhi) = (bracket.at_lo.lambda_hat, bracket.at_hi.lambda_hat);
    if flo < 0.0 && fhi > 0.0 {
        let g = bracket.lo + (bracket.hi - bracket.lo) * (-flo) / (fhi - flo);
        let est = eval.lambda(g)?;
        improve(g, est, &mut best);
    }
    let (g_star, lambda_at_g_star) = best.expect("at least one midpoint evaluated");
    let converged = lambda_at_g_star.lambda_hat.abs() <= tol
        && lambda_at_g_star.ci_contains(0.0)
        && Z_HALF_WIDTH * lambda_at_g_star.std_err <= tol;

    let revalidation = estimate_lambda(
        model,
        &GainPolicy::Constant(g_star),
        eval.n_steps,
        eval.n_replicas,
        master_seed ^ REVALIDATION_SEED_MASK,
        EstimatorKind::GrowthRate,
        &eval.options,
    )?;
    Ok(CalibrationResult {
        g_star,
        lambda_at_g_star,
        bracket_history: history,
        evaluations: eval.evaluations,
        converged,
        tolerance: tol,
        revalidation,
    })
}

const Z_HALF_WIDTH: f64 = crate::lyapunov::Z95;

fn improve(g: f64, est: LyapunovEstimate, best: &mut Option<(f64, LyapunovEstimate)>) {
    if best.is_none_or(|(_, b)| est.lambda_hat.abs() < b.lambda_hat.abs()) {
        *best = Some((g, est));
    }
}

/// Re-evaluates a bracket after the run length changed, widening it if an
/// endpoint lost its sign.
fn revalidate_bracket(eval: &mut Evaluator<'_>, b: Bracket) -> Result<Bracket> {
    let at_lo = eval.lambda(b.lo)?;
    let at_hi = eval.lambda(b.hi)?;
    if side(&at_lo) == Side::Negative && side(&at_hi) == Side::Positive {
        Ok(Bracket {
            lo: b.lo,
            hi: b.hi,
            at_lo,
            at_hi,
        })
    } else {
        expand(eval, (b.lo * b.hi).sqrt())
    }
}
