//! Nearest-neighbour spacing statistics, Brody fits, adjacent-gap ratios and
//! the Poisson/GOE reference distributions.

use std::f64::consts::PI;
use std::io::Write;

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::spectra::{Spectrum, TrimRecord};
use crate::special::minimize_bracketed;
use crate::unfolding::UnfoldedSpectrum;

/// Upper end of the Brody parameter bracket.
pub const BRODY_MAX: f64 = 1.2;
/// Tolerance on `b` for the Brody optimizer.
pub const BRODY_TOL: f64 = 1e-6;
/// Fewer spacings than this make a fit unreliable (flagged, not rejected).
pub const MIN_FIT_SPACINGS: usize = 200;
/// Both neighbouring gaps below this fraction of the spectral width skip a ratio.
pub const DEGENERATE_GAP_FRAC: f64 = 1e-14;

/// `2 ln 2 - 1`.
pub fn mean_r_poisson() -> f64 {
    2.0 * 2f64.ln() - 1.0
}

/// `4 - 2√3`.
pub fn mean_r_goe() -> f64 {
    4.0 - 2.0 * 3f64.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    Poisson,
    Goe,
}

/// Unfolded nearest-neighbour spacings `Ẽ_{n+1} - Ẽ_n`.
pub fn spacings(unfolded: &UnfoldedSpectrum) -> Vec<f64> {
    unfolded.values().windows(2).map(|w| w[1] - w[0]).collect()
}

pub fn reference_spacing_pdf(kind: Reference, s: f64) -> f64 {
    if s < 0.0 {
        return 0.0;
    }
    match kind {
        Reference::Poisson => (-s).exp(),
        Reference::Goe => 0.5 * PI * s * (-0.25 * PI * s * s).exp(),
    }
}

/// `Γ((b+2)/(b+1))^{b+1}`.
pub fn brody_eta(b: f64) -> f64 {
    gamma((b + 2.0) / (b + 1.0)).powf(b + 1.0)
}

pub fn brody_pdf(b: f64, s: f64) -> f64 {
    if s < 0.0 {
        return 0.0;
    }
    let eta = brody_eta(b);
    if s == 0.0 {
        return if b == 0.0 { 1.0 } else { 0.0 };
    }
    (b + 1.0) * eta * s.powf(b) * (-eta * s.powf(b + 1.0)).exp()
}

/// `1 - exp(-η s^{b+1})`.
pub fn brody_cdf(b: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    -(-brody_eta(b) * s.powf(b + 1.0)).exp_m1()
}

/// Inverse-CDF draws from the Brody distribution.
pub fn sample_brody<R: Rng>(b: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let eta = brody_eta(b);
    (0..n)
        .map(|_| {
            let u: f64 = 1.0 - rng.random::<f64>();
            (-u.ln() / eta).powf(1.0 / (b + 1.0))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    Mle,
    Lsq,
}

impl std::str::FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mle" => Ok(Self::Mle),
            "lsq" | "histogram-lsq" => Ok(Self::Lsq),
            other => Err(invalid("fit_method", format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrodyFit {
    pub b: f64,
    pub eta: f64,
    /// Negative mean log-likelihood (MLE) or histogram sum of squares (LSQ).
    pub objective: f64,
    pub method: FitMethod,
    /// Standard error of `b` (observed Fisher information for MLE, local
    /// curvature of the residual for LSQ).
    pub std_err: f64,
    pub n_spacings: usize,
    /// Zero spacings are excluded from the likelihood.
    pub n_excluded: usize,
    /// Set when there were fewer than [`MIN_FIT_SPACINGS`] spacings.
    pub low_sample: bool,
    /// Set when the optimum sits on the upper bracket end.
    pub at_upper_bound: bool,
}

fn neg_loglik(b: f64, log_s: &[f64]) -> f64 {
    let eta = brody_eta(b);
    let acc: f64 = log_s.iter().map(|&l| b * l - eta * ((b + 1.0) * l).exp()).sum();
    -((b + 1.0).ln() + eta.ln() + acc / log_s.len() as f64)
}

/// Fits the Brody parameter on `[0, 1.2]`.
pub fn fit_brody(spacings: &[f64], method: FitMethod) -> Result<BrodyFit> {
    if spacings.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(invalid("spacings", "must be finite and non-negative"));
    }
    let positive: Vec<f64> = spacings.iter().copied().filter(|&s| s > 0.0).collect();
    if positive.len() < 2 {
        return Err(Error::TooFewLevels {
            needed: 2,
            got: positive.len(),
        });
    }
    let n_excluded = spacings.len() - positive.len();
    let (b, objective, std_err) = match method {
        FitMethod::Mle => {
            let logs: Vec<f64> = positive.iter().map(|s| s.ln()).collect();
            let f = |b: f64| neg_loglik(b, &logs);
            let m = minimize_bracketed(f, 0.0, BRODY_MAX, 25, BRODY_TOL)?;
            let curv = second_derivative(&f, m.x, 1e-4, BRODY_MAX);
            let info = curv * positive.len() as f64;
            let se = if info > 0.0 { 1.0 / info.sqrt() } else { f64::INFINITY };
            (m.x, m.value, se)
        }
        FitMethod::Lsq => {
            let h = spacing_histogram(spacings, DEFAULT_SPACING_BINS, DEFAULT_SPACING_MAX, None)?;
            let centers: Vec<f64> = h.centers();
            let f = |b: f64| {
                centers
                    .iter()
                    .zip(&h.densities)
                    .map(|(&c, &p)| (p - brody_pdf(b, c)).powi(2))
                    .sum::<f64>()
            };
            let m = minimize_bracketed(f, 0.0, BRODY_MAX, 25, BRODY_TOL)?;
            let curv = second_derivative(&f, m.x, 1e-4, BRODY_MAX);
            let dof = (centers.len().saturating_sub(1)).max(1) as f64;
            let se = if curv > 0.0 { (2.0 * m.value / dof / curv).sqrt() } else { f64::INFINITY };
            (m.x, m.value, se)
        }
    };
    if !objective.is_finite() {
        return Err(Error::Optimizer(format!("non-finite objective at b = {b}")));
    }
    Ok(BrodyFit {
        b,
        eta: brody_eta(b),
        objective,
        method,
        std_err,
        n_spacings: spacings.len(),
        n_excluded,
        low_sample: spacings.len() < MIN_FIT_SPACINGS,
        at_upper_bound: BRODY_MAX - b < 10.0 * BRODY_TOL,
    })
}

/// Central (or one-sided at the bracket ends) second difference.
fn second_derivative<F: Fn(f64) -> f64>(f: &F, x: f64, h: f64, hi: f64) -> f64 {
    let x0 = x.clamp(h, hi - h);
    (f(x0 + h) - 2.0 * f(x0) + f(x0 - h)) / (h * h)
}

pub const DEFAULT_SPACING_BINS: usize = 50;
pub const DEFAULT_SPACING_MAX: f64 = 4.0;
pub const DEFAULT_RATIO_BINS: usize = 25;

/// Normalized histogram of samples inside `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityHistogram {
    pub edges: Vec<f64>,
    pub densities: Vec<f64>,
    /// Samples that fell inside the range (the normalization count).
    pub samples: usize,
    /// Samples outside the range, excluded from the normalization.
    pub outside: usize,
    pub trims: Vec<TrimRecord>,
}

pub type SpacingHistogram = DensityHistogram;

impl DensityHistogram {
    fn build(values: &[f64], bins: usize, lo: f64, hi: f64, trims: Vec<TrimRecord>) -> Result<Self> {
        if bins == 0 || !(hi > lo) {
            return Err(invalid("histogram", format!("need bins >= 1 and hi > lo, got {bins} on [{lo}, {hi}]")));
        }
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        let mut outside = 0;
        for &v in values {
            if !(lo..=hi).contains(&v) {
                outside += 1;
                continue;
            }
            let k = (((v - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        let samples = values.len() - outside;
        if samples == 0 {
            return Err(Error::TooFewLevels { needed: 1, got: 0 });
        }
        let edges = (0..=bins).map(|i| if i == bins { hi } else { lo + width * i as f64 }).collect();
        let densities = counts.iter().map(|&c| c as f64 / (samples as f64 * width)).collect();
        Ok(Self {
            edges,
            densities,
            samples,
            outside,
            trims,
        })
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// `Σ density · width`.
    pub fn mass(&self) -> f64 {
        self.edges
            .windows(2)
            .zip(&self.densities)
            .map(|(w, d)| d * (w[1] - w[0]))
            .sum()
    }

    /// CSV with columns `bin_left,bin_right,density`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "bin_left,bin_right,density")?;
        for (k, d) in self.densities.iter().enumerate() {
            writeln!(out, "{:.16e},{:.16e},{:.16e}", self.edges[k], self.edges[k + 1], d)?;
        }
        Ok(())
    }
}

pub fn spacing_histogram(spacings: &[f64], bins: usize, s_max: f64, trims: Option<&[TrimRecord]>) -> Result<SpacingHistogram> {
    DensityHistogram::build(spacings, bins, 0.0, s_max, trims.map(<[_]>::to_vec).unwrap_or_default())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRatioStats {
    pub r_values: Vec<f64>,
    pub mean_r: f64,
    /// Standard error of `mean_r` (sample std / √n).
    pub std_err: f64,
    /// Ratios skipped because both gaps were numerically degenerate.
    pub skipped: usize,
    pub histogram: DensityHistogram,
}

/// Adjacent-gap ratios `min(δ_n, δ_{n+1}) / max(δ_n, δ_{n+1})` of a raw spectrum.
pub fn gap_ratios(spec: &Spectrum) -> Result<GapRatioStats> {
    let e = spec.values();
    if e.len() < 3 {
        return Err(Error::TooFewLevels { needed: 3, got: e.len() });
    }
    let width = e[e.len() - 1] - e[0];
    let floor = DEGENERATE_GAP_FRAC * width;
    let mut r_values = Vec::with_capacity(e.len() - 2);
    let mut skipped = 0;
    for w in e.windows(3) {
        let (d0, d1) = (w[1] - w[0], w[2] - w[1]);
        if d0 < floor && d1 < floor || d0.max(d1) == 0.0 {
            skipped += 1;
            continue;
        }
        r_values.push(d0.min(d1) / d0.max(d1));
    }
    if r_values.is_empty() {
        return Err(Error::TooFewLevels { needed: 1, got: 0 });
    }
    let n = r_values.len() as f64;
    let mean_r = r_values.iter().sum::<f64>() / n;
    let var = if r_values.len() > 1 {
        r_values.iter().map(|r| (r - mean_r).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let histogram = DensityHistogram::build(&r_values, DEFAULT_RATIO_BINS, 0.0, 1.0, spec.provenance.trims.clone())?;
    Ok(GapRatioStats {
        std_err: (var / n).sqrt(),
        r_values,
        mean_r,
        skipped,
        histogram,
    })
}

/// Reference `P(r)` on `[0, 1]` (zero outside).
pub fn reference_ratio_pdf(kind: Reference, r: f64) -> f64 {
    if !(0.0..=1.0).contains(&r) {
        return 0.0;
    }
    match kind {
        Reference::Poisson => 2.0 / (1.0 + r).powi(2),
        Reference::Goe => 2.0 * 27.0 / 8.0 * (r + r * r) / (1.0 + r + r * r).powf(2.5),
    }
}

/// Eigenvalues of a `dim × dim` real symmetric Gaussian matrix with
/// off-diagonal variance 1 and diagonal variance 2.
pub fn goe_sample_spectrum(dim: usize, seed: u64) -> Result<Spectrum> {
    if dim < 2 {
        return Err(invalid("dim", "GOE samples need dim >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let diag = Normal::new(0.0, 2f64.sqrt()).expect("valid normal");
    let mut a = Mat::<f64>::zeros(dim, dim);
    for j in 0..dim {
        a[(j, j)] = diag.sample(&mut rng);
        for i in j + 1..dim {
            a[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    let values = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::NonConvergence(format!("{e:?}")))?;
    Spectrum::new(values, format!("goe dim={dim} seed={seed}"))
}

/// Summary of the spacing and ratio statistics of one spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub params: String,
    pub n_levels_used: usize,
    pub b: f64,
    pub b_std_err: f64,
    pub b_method: FitMethod,
    pub mean_r: f64,
    pub mean_r_std_err: f64,
    pub histograms: StatsHistograms,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsHistograms {
    pub spacing: DensityHistogram,
    pub ratio: DensityHistogram,
}

/// Brody fit on the unfolded levels and gap ratios on the raw levels they
/// were unfolded from.
pub fn stats_report(unfolded: &UnfoldedSpectrum, method: FitMethod) -> Result<StatsReport> {
    let s = spacings(unfolded);
    let fit = fit_brody(&s, method)?;
    let trims = &unfolded.source.provenance.trims;
    let spacing = spacing_histogram(&s, DEFAULT_SPACING_BINS, DEFAULT_SPACING_MAX, Some(trims))?;
    let ratios = gap_ratios(&unfolded.source)?;
    Ok(StatsReport {
        params: unfolded.source.provenance.params.clone(),
        n_levels_used: unfolded.len(),
        b: fit.b,
        b_std_err: fit.std_err,
        b_method: fit.method,
        mean_r: ratios.mean_r,
        mean_r_std_err: ratios.std_err,
        histograms: StatsHistograms {
            spacing,
            ratio: ratios.histogram,
        },
    })
}
