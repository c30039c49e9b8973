//! Exact binomial tail probabilities and Clopper–Pearson bounds.

use statrs::function::gamma::ln_gamma;

use super::EstimationError;

const CF_EPS: f64 = 1e-15;
const CF_MAX_ITER: usize = 200_000;
const TINY: f64 = 1e-300;

/// Regularized incomplete beta `I_x(a, b)`.
///
/// Continued fraction with modified Lentz. The iteration cap is far above
/// what statrs allows, because binomial tails at `n ~ 10^6` need a few
/// hundred terms near the mean.
pub fn regularized_beta(a: f64, b: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && b > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (-x).ln_1p();
    if x < (a + 1.0) / (a + b + 2.0) {
        (ln_front.exp() * beta_cf(a, b, x) / a).clamp(0.0, 1.0)
    } else {
        (1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b).clamp(0.0, 1.0)
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// `P[Bin(n, p) ≤ k]`.
pub fn cdf(k: u64, n: u64, p: f64) -> f64 {
    if k >= n {
        return 1.0;
    }
    if p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return 0.0;
    }
    regularized_beta((n - k) as f64, (k + 1) as f64, 1.0 - p)
}

/// `P[Bin(n, p) ≥ k]`, computed directly rather than as `1 - cdf`.
pub fn survival(k: u64, n: u64, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    regularized_beta(k as f64, (n - k + 1) as f64, p)
}

fn check(k: u64, n: u64, conf_fail: f64) -> Result<(), EstimationError> {
    if n == 0 {
        return Err(EstimationError::EmptySample("binomial trials"));
    }
    if k > n {
        return Err(EstimationError::CountExceedsTrials { hits: k, trials: n });
    }
    if !(conf_fail > 0.0 && conf_fail < 1.0) {
        return Err(EstimationError::ProbabilityOutOfRange {
            name: "conf_fail",
            value: conf_fail,
        });
    }
    Ok(())
}

/// Bisection on a monotone predicate over `[0, 1]`; returns the bracket.
fn bisect(mut lo: f64, mut hi: f64, mut upper_ok: impl FnMut(f64) -> bool) -> (f64, f64) {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if upper_ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo, hi)
}

/// Clopper–Pearson upper bound: the smallest `p` with
/// `P[Bin(n, p) ≤ k] ≤ conf_fail`.
pub fn binomial_upper(k: u64, n: u64, conf_fail: f64) -> Result<f64, EstimationError> {
    check(k, n, conf_fail)?;
    if k == n {
        return Ok(1.0);
    }
    let (_, hi) = bisect(0.0, 1.0, |p| cdf(k, n, p) <= conf_fail);
    Ok(hi)
}

/// Clopper–Pearson lower bound: the largest `p` with
/// `P[Bin(n, p) ≥ k] ≤ conf_fail`.
pub fn binomial_lower(k: u64, n: u64, conf_fail: f64) -> Result<f64, EstimationError> {
    check(k, n, conf_fail)?;
    if k == 0 {
        return Ok(0.0);
    }
    let (lo, _) = bisect(0.0, 1.0, |p| survival(k, n, p) > conf_fail);
    Ok(lo)
}

/// Smallest `m` with `P[Bin(n, p) > m] ≤ tail`.
pub fn upper_quantile(n: u64, p: f64, tail: f64) -> u64 {
    if p <= 0.0 {
        return 0;
    }
    let (mut lo, mut hi) = (0u64, n);
    if survival(1, n, p) <= tail {
        return 0;
    }
    // invariant: P[X > lo] > tail, P[X > hi] ≤ tail
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if survival(mid + 1, n, p) <= tail {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Largest `t` with `P[Bin(n, p) < t] ≤ tail`.
pub fn lower_quantile(n: u64, p: f64, tail: f64) -> u64 {
    if p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    if cdf(n - 1, n, p) <= tail {
        return n;
    }
    // invariant: P[X < lo] ≤ tail, P[X < hi] > tail
    let (mut lo, mut hi) = (0u64, n);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if cdf(mid - 1, n, p) <= tail {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}
