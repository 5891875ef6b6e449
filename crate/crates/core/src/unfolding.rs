//! Polynomial unfolding of spectra and density-of-states histograms.
//!
//! The staircase `I(E) = #{n : E_n <= E}` is fitted by a smooth polynomial
//! `Ĩ(E)` and each level is mapped to `Ẽ_n = Ĩ(E_n)`. The fit samples the
//! staircase at the midpoint of each jump (`n - 1/2` at `E_n`, 1-based) and is
//! carried out in a Chebyshev basis on energies rescaled to `[-1, 1]`.

use std::io::Write;

use faer::linalg::solvers::SolveLstsq;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::spectra::Spectrum;

/// Default polynomial degree.
pub const DEFAULT_DEGREE: usize = 12;

/// Fits whose design matrix has a larger 2-norm condition number are refused.
pub const MAX_CONDITION: f64 = 1e10;

/// Number of eigenvalues `<= energy` (so `Θ(0) = 1`).
pub fn staircase(spec: &Spectrum, energy: f64) -> usize {
    spec.values().partition_point(|&e| e <= energy)
}

/// Chebyshev series on an affinely mapped interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevFit {
    pub coeffs: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl ChebyshevFit {
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    fn to_unit(&self, e: f64) -> f64 {
        if self.hi > self.lo {
            2.0 * (e - self.lo) / (self.hi - self.lo) - 1.0
        } else {
            0.0
        }
    }

    /// Value of the fitted staircase at energy `e`.
    pub fn eval(&self, e: f64) -> f64 {
        clenshaw(&self.coeffs, self.to_unit(e))
    }

    /// `dĨ/dE` at energy `e`.
    pub fn derivative(&self, e: f64) -> f64 {
        let scale = if self.hi > self.lo { 2.0 / (self.hi - self.lo) } else { 0.0 };
        clenshaw(&chebyshev_derivative(&self.coeffs), self.to_unit(e)) * scale
    }
}

fn clenshaw(c: &[f64], x: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let b0 = ck + 2.0 * x * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    c.first().copied().unwrap_or(0.0) + x * b1 - b2
}

/// Coefficients of the derivative series (with respect to the unit variable).
fn chebyshev_derivative(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    if n <= 1 {
        return vec![0.0];
    }
    let mut d = vec![0.0; n + 1];
    for k in (1..n).rev() {
        d[k - 1] = d[k + 1] + 2.0 * k as f64 * c[k];
    }
    d[0] *= 0.5;
    d.truncate(n - 1);
    d
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnfoldedSpectrum {
    values: Vec<f64>,
    pub fit: ChebyshevFit,
    /// RMS deviation between the fit and the staircase targets.
    pub residual: f64,
    /// 2-norm condition number of the Chebyshev design matrix.
    pub condition: f64,
    pub source: Spectrum,
}

impl UnfoldedSpectrum {
    /// Wraps already-unfolded levels (e.g. synthetic data with unit density).
    pub fn from_levels(mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("levels", "non-finite level"));
        }
        values.sort_by(f64::total_cmp);
        let source = Spectrum::new(values.clone(), "synthetic")?;
        Ok(Self {
            fit: ChebyshevFit {
                coeffs: Vec::new(),
                lo: 0.0,
                hi: 0.0,
            },
            values,
            residual: 0.0,
            condition: 1.0,
            source,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(Ẽ_N - Ẽ_1) / (N - 1)`.
    pub fn mean_spacing(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return f64::NAN;
        }
        (self.values[n - 1] - self.values[0]) / (n - 1) as f64
    }

    /// CSV: fit metadata as `#` comments, then `energy,unfolded`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# params: {}", self.source.provenance.params)?;
        for t in &self.source.provenance.trims {
            writeln!(
                out,
                "# trim: drop_low_frac={} drop_high_frac={} removed_low={} removed_high={} len_before={}",
                t.drop_low_frac, t.drop_high_frac, t.removed_low, t.removed_high, t.len_before
            )?;
        }
        writeln!(
            out,
            "# fit: basis=chebyshev degree={} lo={:.16e} hi={:.16e} residual={:.6e} condition={:.6e}",
            self.fit.degree(),
            self.fit.lo,
            self.fit.hi,
            self.residual,
            self.condition
        )?;
        let coeffs: Vec<String> = self.fit.coeffs.iter().map(|c| format!("{c:.16e}")).collect();
        writeln!(out, "# coeffs: {}", coeffs.join(" "))?;
        writeln!(out, "energy,unfolded")?;
        for (e, u) in self.source.values().iter().zip(&self.values) {
            writeln!(out, "{e:.16e},{u:.16e}")?;
        }
        Ok(())
    }
}

/// Unfolds `spec` with a degree-`degree` polynomial staircase fit.
///
/// Errors when `N <= degree + 1`, when the design matrix is too
/// ill-conditioned, or when `Ĩ'(E) < 0` anywhere on a `10 N`-point grid over
/// `[E_min, E_max]`.
pub fn unfold(spec: &Spectrum, degree: usize) -> Result<UnfoldedSpectrum> {
    let e = spec.values();
    let n = e.len();
    if n <= degree + 1 {
        return Err(Error::TooFewLevels {
            needed: degree + 2,
            got: n,
        });
    }
    let (lo, hi) = (e[0], e[n - 1]);
    if !(hi > lo) {
        return Err(Error::IllConditioned("spectrum has zero width".into()));
    }
    let fit_shell = ChebyshevFit {
        coeffs: Vec::new(),
        lo,
        hi,
    };
    let cols = degree + 1;
    let mut design = Mat::<f64>::zeros(n, cols);
    for (i, &ei) in e.iter().enumerate() {
        let x = fit_shell.to_unit(ei);
        let (mut t0, mut t1) = (1.0, x);
        design[(i, 0)] = t0;
        if cols > 1 {
            design[(i, 1)] = t1;
        }
        for k in 2..cols {
            let t2 = 2.0 * x * t1 - t0;
            design[(i, k)] = t2;
            t0 = t1;
            t1 = t2;
        }
    }
    let sv = design
        .singular_values()
        .map_err(|err| Error::IllConditioned(format!("SVD failed: {err:?}")))?;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned(format!("condition number {condition:.3e}")));
    }
    let targets = Mat::<f64>::from_fn(n, 1, |i, _| i as f64 + 0.5);
    let sol = design.qr().solve_lstsq(&targets);
    let coeffs: Vec<f64> = (0..cols).map(|k| sol[(k, 0)]).collect();
    let fit = ChebyshevFit { coeffs, lo, hi };

    let grid = 10 * n;
    for j in 0..=grid {
        let x = lo + (hi - lo) * j as f64 / grid as f64;
        if fit.derivative(x) < 0.0 {
            return Err(Error::NonMonotoneUnfolding { at: x });
        }
    }

    let values: Vec<f64> = e.iter().map(|&ei| fit.eval(ei)).collect();
    let residual = (values
        .iter()
        .enumerate()
        .map(|(i, v)| (v - (i as f64 + 0.5)).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    Ok(UnfoldedSpectrum {
        values,
        fit,
        residual,
        condition,
        source: spec.clone(),
    })
}

/// Uniform-bin histogram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn zeros(bins: usize) -> Self {
        Self {
            edges: (0..=bins).map(|i| i as f64).collect(),
            counts: vec![0; bins],
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// CSV with columns `bin_left,bin_right,count`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "bin_left,bin_right,count")?;
        for (k, c) in self.counts.iter().enumerate() {
            writeln!(out, "{:.16e},{:.16e},{}", self.edges[k], self.edges[k + 1], c)?;
        }
        Ok(())
    }
}

/// Counts per uniform bin over `[min, max]`; bins are left-closed except
/// the last, which is closed on both sides. Errors on empty input.
pub fn dos_histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(invalid("bins", "must be at least 1"));
    }
    if values.is_empty() {
        return Err(Error::TooFewLevels { needed: 1, got: 0 });
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let k = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    let edges = (0..=bins).map(|i| if i == bins { hi } else { lo + i as f64 * width }).collect();
    Ok(Histogram { edges, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn staircase_examples() {
        let s = Spectrum::new(vec![1.0, 2.0, 3.0], "").unwrap();
        assert_eq!(staircase(&s, 2.5), 2);
        assert_eq!(staircase(&s, 0.0), 0);
        assert_eq!(staircase(&s, 2.0), 2);
        assert_eq!(staircase(&s, 3.0), 3);
    }

    #[test]
    fn chebyshev_derivative_matches_finite_difference() {
        let fit = ChebyshevFit {
            coeffs: vec![0.3, -1.2, 0.7, 0.25, -0.1, 0.05],
            lo: -2.0,
            hi: 5.0,
        };
        for k in 0..20 {
            let e = -1.9 + 0.34 * k as f64;
            let h = 1e-6;
            let fd = (fit.eval(e + h) - fit.eval(e - h)) / (2.0 * h);
            assert!((fd - fit.derivative(e)).abs() < 1e-7, "{fd} vs {}", fit.derivative(e));
        }
    }

    #[test]
    fn linear_staircase_unfolds_to_unit_spacing() {
        let s = Spectrum::new((1..=200).map(|n| 2.0 * n as f64).collect(), "").unwrap();
        let u = unfold(&s, 1).unwrap();
        for w in u.values().windows(2) {
            assert!((w[1] - w[0] - 1.0).abs() < 1e-8);
        }
        assert!((u.mean_spacing() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn semicircle_spectrum_flattens() {
        // Inverse-CDF samples of the Wigner semicircle on [-1, 1].
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cdf = |x: f64| 0.5 + (x * (1.0 - x * x).sqrt() + x.asin()) / std::f64::consts::PI;
        let sample = |u: f64| {
            let (mut a, mut b) = (-1.0, 1.0);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if cdf(m) < u {
                    a = m
                } else {
                    b = m
                }
            }
            0.5 * (a + b)
        };
        let vals: Vec<f64> = (0..4400).map(|_| sample(rng.random::<f64>())).collect();
        let s = crate::spectra::trim_spectrum(&Spectrum::new(vals, "").unwrap(), 0.05, 0.05).unwrap();
        let u = unfold(&s, DEFAULT_DEGREE).unwrap();
        assert!((u.mean_spacing() - 1.0).abs() < 0.02);
        let n = u.len();
        let middle = &u.values()[n / 10..n - n / 10];
        let h = dos_histogram(middle, 10).unwrap();
        let mean = h.total() as f64 / 10.0;
        for &c in &h.counts {
            assert!(((c as f64) - mean).abs() < 0.1 * mean, "{:?}", h.counts);
        }
    }

    #[test]
    fn too_few_levels() {
        let s = Spectrum::new((0..13).map(f64::from).collect(), "").unwrap();
        assert!(matches!(unfold(&s, 12), Err(Error::TooFewLevels { .. })));
        assert!(unfold(&Spectrum::new(vec![1.0; 40], "").unwrap(), 3).is_err());
    }

    #[test]
    fn histogram_examples() {
        let h = dos_histogram(&[0.0, 0.5, 1.0], 2).unwrap();
        assert_eq!(h.counts, vec![1, 2]);
        assert_eq!(h.edges, vec![0.0, 0.5, 1.0]);
        let h = dos_histogram(&[0.0, 0.4, 1.0], 2).unwrap();
        assert_eq!(h.counts, vec![2, 1]);
        assert!(dos_histogram(&[], 3).is_err());
        assert_eq!(Histogram::zeros(4).total(), 0);
    }

    #[test]
    fn poisson_levels_have_flat_histogram() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut e = 0.0;
        let vals: Vec<f64> = (0..1000)
            .map(|_| {
                e += -(1.0 - rng.random::<f64>()).ln();
                e
            })
            .collect();
        let u = unfold(&Spectrum::new(vals, "").unwrap(), 1).unwrap();
        let h = dos_histogram(u.values(), 20).unwrap();
        assert_eq!(h.total(), 1000);
        let band = 5.0 * 50f64.sqrt();
        assert!(h.counts.iter().all(|&c| (c as f64 - 50.0).abs() <= band), "{:?}", h.counts);
    }
}
