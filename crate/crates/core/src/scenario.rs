//! Guarantee arithmetic for sampled programs: the regularized incomplete beta
//! function, its inverse, and the binomial tail
//! `phi(eps, k, N) = sum_{j<=k} C(N,j) eps^j (1-eps)^(N-j)`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const CF_MAX_ITER: usize = 500;
const CF_EPS: f64 = 1e-16;
const LENTZ_TINY: f64 = 1e-300;

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

fn check_shape(a: f64, b: f64) -> Result<()> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::Parameter(format!("beta shape parameters must be positive, got a={a}, b={b}")));
    }
    Ok(())
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    check_shape(a, b)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Parameter(format!("x must lie in [0, 1], got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b);
    if x > (a + 1.0) / (a + b + 2.0) {
        let cf = beta_cf(b, a, 1.0 - x)?;
        Ok(1.0 - ln_front.exp() * cf / b)
    } else {
        let cf = beta_cf(a, b, x)?;
        Ok(ln_front.exp() * cf / a)
    }
}

// Continued fraction for I_x(a,b), modified Lentz.
fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let guard = |v: f64| if v.abs() < LENTZ_TINY { LENTZ_TINY } else { v };

    let mut c = 1.0;
    let mut d = 1.0 / guard(1.0 - qab * x / qap);
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 / guard(1.0 + aa * d);
        c = guard(1.0 + aa / c);
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 / guard(1.0 + aa * d);
        c = guard(1.0 + aa / c);
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() <= CF_EPS {
            return Ok(h);
        }
    }
    Err(Error::Numeric(format!(
        "incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})"
    )))
}

/// Inverse of `x -> I_x(a, b)`: bracketing bisection, then safeguarded Newton.
pub fn inv_reg_inc_beta(p: f64, a: f64, b: f64) -> Result<f64> {
    check_shape(a, b)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Parameter(format!("probability must lie in [0, 1], got {p}")));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if reg_inc_beta(mid, a, b)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let ln_b = ln_beta(a, b);
    let mut x = 0.5 * (lo + hi);
    for _ in 0..100 {
        let f = reg_inc_beta(x, a, b)? - p;
        if f == 0.0 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let dens = ((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_b).exp();
        let mut next = x - f / dens;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.max(f64::MIN_POSITIVE) || hi - lo <= f64::EPSILON * hi {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Binomial tail `sum_{j=0}^{k} C(N,j) eps^j (1-eps)^(N-j)`, the bound on the
/// probability that a sampled solution with at most `k+1` essential
/// constraints violates more than a fraction `eps` of the constraint space.
pub fn phi(eps: f64, k: u64, n: u64) -> Result<f64> {
    if k > n {
        return Err(Error::Parameter(format!("k = {k} exceeds N = {n}")));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::Parameter(format!("eps must lie in [0, 1], got {eps}")));
    }
    if eps == 0.0 || k == n {
        return Ok(1.0);
    }
    if eps == 1.0 {
        return Ok(0.0);
    }
    // Sum whichever tail is smaller; the other side comes from 1 - tail.
    let lower = (k as f64) < n as f64 * eps;
    let range = if lower { 0..=k } else { k + 1..=n };
    let tail = binomial_mass(eps, n, range);
    let value = if lower { tail.min(1.0) } else { (1.0 - tail).max(0.0) };
    debug_assert!(
        (value - (1.0 - reg_inc_beta(eps, (k + 1) as f64, (n - k) as f64).unwrap_or(f64::NAN))).abs() < 1e-9,
        "binomial tail disagrees with the beta identity at eps={eps}, k={k}, N={n}"
    );
    Ok(value)
}

/// `sum_{j in range} C(N,j) eps^j (1-eps)^(N-j)` via log-sum-exp.
fn binomial_mass(eps: f64, n: u64, range: std::ops::RangeInclusive<u64>) -> f64 {
    let ln_eps = eps.ln();
    let ln_comp = (-eps).ln_1p();
    let nf = n as f64;
    let ln_choose = |j: u64| ln_gamma(nf + 1.0) - ln_gamma(j as f64 + 1.0) - ln_gamma((n - j) as f64 + 1.0);
    let logs: Vec<f64> = range
        .map(|j| {
            let jf = j as f64;
            ln_choose(j) + jf * ln_eps + (nf - jf) * ln_comp
        })
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return 0.0;
    }
    top.exp() * logs.iter().map(|l| (l - top).exp()).sum::<f64>()
}

/// Confidence level, essential-set bound and sample count for an epsilon query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceQuery {
    pub beta: f64,
    pub k: u64,
    pub n: u64,
}

impl ConfidenceQuery {
    pub fn new(beta: f64, k: u64, n: u64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::Parameter(format!("confidence beta must lie in (0, 1), got {beta}")));
        }
        if n < k + 1 {
            return Err(Error::Parameter(format!("need N >= k + 1, got k = {k}, N = {n}")));
        }
        Ok(Self { beta, k, n })
    }
}

/// The `eps` at which `phi(eps, k, N)` equals `beta`. `phi` is strictly
/// decreasing on `(0, 1)`, so plain bisection applies.
pub fn epsilon_for_confidence(q: ConfidenceQuery) -> Result<f64> {
    let q = ConfidenceQuery::new(q.beta, q.k, q.n)?;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if phi(mid, q.k, q.n)? > q.beta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
