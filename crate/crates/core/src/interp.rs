//! Monotone interpolation and isotonic regression.

use crate::error::{invalid, Error, Result};

/// Piecewise-cubic Hermite interpolant with Fritsch-Carlson slopes.
///
/// On monotone data the interpolant is monotone and never leaves the range
/// of the two bracketing knots. Outside the knot range it is clamped to the
/// end values.
#[derive(Clone, Debug, PartialEq)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(invalid("knots", format!("need >= 2 matching knots, got {} and {}", n, y.len())));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) || y.iter().any(|v| !v.is_finite()) {
            return Err(invalid("knots", "abscissae must be strictly increasing and values finite"));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
        } else {
            for k in 1..n - 1 {
                if delta[k - 1] * delta[k] > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
                }
            }
            d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            d,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    fn segment(&self, t: f64) -> usize {
        self.x.partition_point(|&v| v <= t).clamp(1, self.x.len() - 1) - 1
    }

    pub fn eval(&self, t: f64) -> f64 {
        let (lo, hi) = self.domain();
        if t <= lo {
            return self.y[0];
        }
        if t >= hi {
            return *self.y.last().unwrap();
        }
        let k = self.segment(t);
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let (s2, s3) = (s * s, s * s * s);
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.y[k] + (s3 - 2.0 * s2 + s) * h * self.d[k] + (-2.0 * s3 + 3.0 * s2) * self.y[k + 1] + (s3 - s2) * h * self.d[k + 1]
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let (lo, hi) = self.domain();
        if t < lo || t > hi {
            return 0.0;
        }
        let k = self.segment(t);
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let s2 = s * s;
        ((6.0 * s2 - 6.0 * s) * self.y[k] + (6.0 * s - 6.0 * s2) * self.y[k + 1]) / h + (3.0 * s2 - 4.0 * s + 1.0) * self.d[k] + (3.0 * s2 - 2.0 * s) * self.d[k + 1]
    }

    /// Solves `eval(t) = v` for an interpolant through strictly increasing
    /// values. Returns `None` when `v` lies outside the value range.
    pub fn invert_increasing(&self, v: f64) -> Option<f64> {
        let (y0, y1) = (self.y[0], *self.y.last().unwrap());
        if !(v >= y0 && v <= y1) {
            return None;
        }
        let k = self.y.partition_point(|&w| w <= v).clamp(1, self.y.len() - 1) - 1;
        let (mut a, mut b) = (self.x[k], self.x[k + 1]);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if self.eval(m) < v {
                a = m;
            } else {
                b = m;
            }
            if b - a <= 1e-15 * (1.0 + m.abs()) {
                break;
            }
        }
        Some(0.5 * (a + b))
    }
}

// Three-point end slope, limited so that monotonicity is preserved.
fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

/// One pooled block of an isotonic fit.
#[derive(Clone, Debug, PartialEq)]
pub struct IsotonicBlock {
    pub start: usize,
    pub end: usize,
    pub value: f64,
    pub weight: f64,
}

/// Weighted non-decreasing least-squares fit (pool adjacent violators).
pub fn isotonic_increasing(y: &[f64], w: &[f64]) -> Result<Vec<IsotonicBlock>> {
    if y.len() != w.len() {
        return Err(Error::BasisMismatch(format!("{} values, {} weights", y.len(), w.len())));
    }
    if w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(invalid("weights", "must be finite and positive"));
    }
    let mut blocks: Vec<IsotonicBlock> = Vec::with_capacity(y.len());
    for (i, (&v, &wt)) in y.iter().zip(w).enumerate() {
        blocks.push(IsotonicBlock {
            start: i,
            end: i + 1,
            value: v,
            weight: wt,
        });
        while blocks.len() > 1 && blocks[blocks.len() - 2].value >= blocks[blocks.len() - 1].value {
            let b = blocks.pop().unwrap();
            let a = blocks.last_mut().unwrap();
            let wsum = a.weight + b.weight;
            a.value = (a.value * a.weight + b.value * b.weight) / wsum;
            a.weight = wsum;
            a.end = b.end;
        }
    }
    Ok(blocks)
}

/// Expands isotonic blocks back to one fitted value per input point.
pub fn expand_blocks(blocks: &[IsotonicBlock]) -> Vec<f64> {
    blocks.iter().flat_map(|b| std::iter::repeat_n(b.value, b.end - b.start)).collect()
}
