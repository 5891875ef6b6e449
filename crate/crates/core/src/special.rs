//! Small numerical helpers: Bessel J₁ and bracketed scalar minimization.

use crate::error::{Error, Result};

/// Above this argument J₁ switches from Miller recurrence to the Hankel
/// asymptotic expansion.
const ASYMPTOTIC_FROM: f64 = 25.0;

/// Bessel function of the first kind, order one.
pub fn bessel_j1(x: f64) -> f64 {
    if x < 0.0 {
        return -bessel_j1(-x);
    }
    if x == 0.0 {
        return 0.0;
    }
    if x < ASYMPTOTIC_FROM {
        j1_miller(x)
    } else {
        j1_hankel(x)
    }
}

/// Backward recurrence normalized with `J₀ + 2 Σ J_{2k} = 1`.
fn j1_miller(x: f64) -> f64 {
    let start = (x + 40.0 + 10.0 * x.sqrt()) as usize;
    // Invariant after the step at `k`: `j = J_{k-1}`, `jp1 = J_k` (unnormalized).
    let (mut jp1, mut j) = (0.0f64, 1e-300f64);
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let jm1 = 2.0 * k as f64 / x * j - jp1;
        jp1 = j;
        j = jm1;
        if k >= 3 && (k - 1) % 2 == 0 {
            norm += 2.0 * j;
        }
        if j.abs() > 1e250 {
            j *= 1e-250;
            jp1 *= 1e-250;
            norm *= 1e-250;
        }
    }
    jp1 / (norm + j)
}

fn j1_hankel(x: f64) -> f64 {
    let mu = 4.0;
    let z = 8.0 * x;
    let (mut p, mut q) = (1.0, 0.0);
    let mut term = 1.0;
    let mut k = 1usize;
    let mut prev = f64::INFINITY;
    loop {
        let odd = (2 * k - 1) as f64;
        term *= (mu - odd * odd) / (k as f64 * z);
        if term.abs() >= prev || term.abs() < 1e-17 {
            break;
        }
        prev = term.abs();
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        k += 1;
    }
    let chi = x - 0.75 * std::f64::consts::PI;
    (2.0 / (std::f64::consts::PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Result of [`minimize_bracketed`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Minimizes `f` on `[lo, hi]` to an `x` tolerance of `tol`.
///
/// A coarse scan of `scan` points locates the best sub-bracket, which is then
/// refined by golden-section search. Endpoints are admissible minimizers.
pub fn minimize_bracketed<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, scan: usize, tol: f64) -> Result<Minimum> {
    if !(hi > lo) || !(tol > 0.0) {
        return Err(Error::Optimizer(format!("bad bracket [{lo}, {hi}] or tolerance {tol}")));
    }
    let scan = scan.max(3);
    let step = (hi - lo) / (scan - 1) as f64;
    let mut evaluations = 0;
    let mut best = (0usize, f64::INFINITY);
    for i in 0..scan {
        let v = f(lo + step * i as f64);
        evaluations += 1;
        if v.is_nan() {
            return Err(Error::Optimizer(format!("objective is NaN at {}", lo + step * i as f64)));
        }
        if v < best.1 {
            best = (i, v);
        }
    }
    if !best.1.is_finite() {
        return Err(Error::Optimizer("objective is not finite anywhere on the bracket".into()));
    }
    let mut a = lo + step * best.0.saturating_sub(1) as f64;
    let mut b = (lo + step * (best.0 + 1) as f64).min(hi);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    evaluations += 2;
    let mut iter = 0;
    while (b - a) > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        evaluations += 1;
        iter += 1;
        if iter > 200 || fc.is_nan() || fd.is_nan() {
            return Err(Error::Optimizer(format!("golden section stalled on [{a}, {b}]")));
        }
    }
    let mid = 0.5 * (a + b);
    let fm = f(mid);
    evaluations += 1;
    let (x, value) = [(mid, fm), (lo + step * best.0 as f64, best.1)]
        .into_iter()
        .fold((mid, f64::INFINITY), |acc, p| if p.1 < acc.1 { p } else { acc });
    Ok(Minimum { x, value, evaluations })
}
