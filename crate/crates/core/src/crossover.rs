//! Parameter sweeps across the integrability-to-chaos crossover, dynamic
//! scaling collapse, and the lattice-to-impurity parameter map.
//!
//! A sweep runs the full pipeline (assemble, diagonalize, trim, unfold,
//! Brody fit, gap ratios) at each control value. The map `μ(J/λ)` is
//! obtained by matching a diagnostic between the two models: both curves are
//! made monotone on their rising branch (isotonic regression), interpolated
//! with monotone cubics, and composed as `f_imp⁻¹ ∘ f_lat`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::basis::{build_impurity_basis, build_sector_basis, ImpurityParams, LatticeParams, Parity, SectorBasis};
use crate::error::{invalid, Error, Result};
use crate::hamiltonian::{assemble_impurity_hamiltonian_with, assemble_lattice_hamiltonian_with};
use crate::interp::{isotonic_increasing, Pchip};
use crate::par;
use crate::spectra::{diagonalize, trim_spectrum};
use crate::stats::{fit_brody, gap_ratios, spacings, FitMethod, BRODY_MAX};
use crate::unfolding::{unfold, DEFAULT_DEGREE};

/// Sanity band for `⟨r⟩`; points outside it are flagged, not dropped.
pub const R_BAND: (f64, f64) = (0.3, 0.6);
/// Points used by [`collapse_score`] on the common grid.
pub const COLLAPSE_GRID: usize = 200;
/// Points on the output grid of [`extract_map`].
pub const MAP_GRID: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lattice,
    Impurity,
}

impl ModelKind {
    /// Dynamic-scaling exponent of the control parameter in `S`.
    pub fn scaling_exponent(self) -> f64 {
        match self {
            ModelKind::Lattice => 0.25,
            ModelKind::Impurity => 0.75,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Lattice => "lattice",
            ModelKind::Impurity => "impurity",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Diagnostic {
    /// Brody parameter.
    #[serde(rename = "b")]
    Brody,
    /// Mean adjacent-gap ratio.
    #[serde(rename = "r")]
    GapRatio,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Diagnostic::Brody => "b",
            Diagnostic::GapRatio => "r",
        })
    }
}

impl FromStr for Diagnostic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "b" | "brody" => Ok(Diagnostic::Brody),
            "r" | "mean_r" | "ratio" => Ok(Diagnostic::GapRatio),
            other => Err(invalid("diagnostic", format!("unknown diagnostic `{other}`"))),
        }
    }
}

/// What a sweep varies: `J` on the lattice (at fixed `λ`) or `μ` on the
/// impurity. Control values are `J/λ` and `μ` respectively.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum SweepModel {
    Lattice { params: LatticeParams, n_ex: u32, parity: Parity },
    Impurity { params: ImpurityParams },
}

impl SweepModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            SweepModel::Lattice { .. } => ModelKind::Lattice,
            SweepModel::Impurity { .. } => ModelKind::Impurity,
        }
    }

    pub fn spins(&self) -> usize {
        match self {
            SweepModel::Lattice { params, .. } => params.spins,
            SweepModel::Impurity { params } => params.spins,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub drop_low_frac: f64,
    pub drop_high_frac: f64,
    pub degree: usize,
    pub method: FitMethod,
}

impl PipelineOptions {
    /// Impurity defaults: discard the upper half (cutoff convergence) and the
    /// lowest tenth (mixed low-energy statistics).
    pub fn impurity() -> Self {
        Self {
            drop_low_frac: 0.1,
            drop_high_frac: 0.5,
            degree: DEFAULT_DEGREE,
            method: FitMethod::Mle,
        }
    }

    /// Lattice defaults: the spectrum is statistically uniform, so only the
    /// sparse band edges (where the unfolding fit is weakest) are dropped.
    pub fn lattice() -> Self {
        Self {
            drop_low_frac: 0.1,
            drop_high_frac: 0.1,
            degree: DEFAULT_DEGREE,
            method: FitMethod::Mle,
        }
    }

    pub fn for_model(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Lattice => Self::lattice(),
            ModelKind::Impurity => Self::impurity(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub control: f64,
    pub b: f64,
    pub b_err: f64,
    pub mean_r: f64,
    pub r_err: f64,
    pub n_levels: usize,
    /// Human-readable warnings (sanity band, low sample, μ = 0).
    pub flags: Vec<String>,
}

impl CurvePoint {
    pub fn value(&self, d: Diagnostic) -> f64 {
        match d {
            Diagnostic::Brody => self.b,
            Diagnostic::GapRatio => self.mean_r,
        }
    }

    pub fn error(&self, d: Diagnostic) -> f64 {
        match d {
            Diagnostic::Brody => self.b_err,
            Diagnostic::GapRatio => self.r_err,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedPoint {
    pub control: f64,
    pub error: String,
}

/// Diagnostics versus a control parameter for one model and spin size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticCurve {
    pub model: ModelKind,
    pub spins: usize,
    /// Exponent used for `scaled_control = control · S^exponent`.
    pub exponent: f64,
    pub points: Vec<CurvePoint>,
    pub failed: Vec<FailedPoint>,
}

impl DiagnosticCurve {
    /// Builds a curve from externally computed points; controls must be
    /// strictly increasing.
    pub fn new(model: ModelKind, spins: usize, points: Vec<CurvePoint>) -> Result<Self> {
        if points.windows(2).any(|w| !(w[1].control > w[0].control)) {
            return Err(invalid("controls", "must be strictly increasing"));
        }
        Ok(Self {
            model,
            spins,
            exponent: model.scaling_exponent(),
            points,
            failed: Vec::new(),
        })
    }

    pub fn controls(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.control).collect()
    }

    pub fn scale(&self, exponent: f64) -> f64 {
        (self.spins as f64).powf(exponent)
    }

    pub fn scaled_controls(&self) -> Vec<f64> {
        let s = self.scale(self.exponent);
        self.points.iter().map(|p| p.control * s).collect()
    }

    pub fn values(&self, d: Diagnostic) -> Vec<f64> {
        self.points.iter().map(|p| p.value(d)).collect()
    }

    pub fn errors(&self, d: Diagnostic) -> Vec<f64> {
        self.points.iter().map(|p| p.error(d)).collect()
    }

    /// CSV: `control,scaled_control,b,b_err,mean_r,r_err`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# model={} spins={} exponent={}", self.model, self.spins, self.exponent)?;
        for f in &self.failed {
            writeln!(out, "# failed control={:.17e} error={}", f.control, f.error)?;
        }
        writeln!(out, "control,scaled_control,b,b_err,mean_r,r_err")?;
        for (p, x) in self.points.iter().zip(self.scaled_controls()) {
            writeln!(out, "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}", p.control, x, p.b, p.b_err, p.mean_r, p.r_err)?;
        }
        Ok(())
    }

    /// Reads a curve written by [`DiagnosticCurve::write_csv`].
    pub fn read_csv<R: std::io::BufRead>(input: R) -> Result<Self> {
        let mut model = None;
        let mut spins = None;
        let mut exponent = None;
        let mut points = Vec::new();
        let mut failed = Vec::new();
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if let Some(meta) = line.strip_prefix("# failed ") {
                let (c, e) = meta.split_once(" error=").ok_or_else(|| Error::Parse(format!("bad failure line `{line}`")))?;
                let c = c.trim_start_matches("control=");
                failed.push(FailedPoint {
                    control: c.parse().map_err(|_| Error::Parse(format!("bad control `{c}`")))?,
                    error: e.to_string(),
                });
            } else if let Some(meta) = line.strip_prefix('#') {
                for kv in meta.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("model", v)) => model = Some(if v == "lattice" { ModelKind::Lattice } else { ModelKind::Impurity }),
                        Some(("spins", v)) => spins = v.parse().ok(),
                        Some(("exponent", v)) => exponent = v.parse().ok(),
                        _ => {}
                    }
                }
            } else if line.is_empty() || line.starts_with("control") {
                continue;
            } else {
                let f: Vec<f64> = line
                    .split(',')
                    .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{v}`"))))
                    .collect::<Result<_>>()?;
                if f.len() != 6 {
                    return Err(Error::Parse(format!("expected 6 columns, got {}", f.len())));
                }
                points.push(CurvePoint {
                    control: f[0],
                    b: f[2],
                    b_err: f[3],
                    mean_r: f[4],
                    r_err: f[5],
                    n_levels: 0,
                    flags: Vec::new(),
                });
            }
        }
        let model = model.ok_or_else(|| Error::Parse("missing model header".into()))?;
        let spins = spins.ok_or_else(|| Error::Parse("missing spins header".into()))?;
        let mut curve = Self::new(model, spins, points)?;
        curve.exponent = exponent.unwrap_or(model.scaling_exponent());
        curve.failed = failed;
        Ok(curve)
    }
}

fn run_point(model: &SweepModel, basis: &SectorBasis, control: f64, opts: &PipelineOptions) -> Result<CurvePoint> {
    let mut flags = Vec::new();
    let matrix = match model {
        SweepModel::Lattice { params, .. } => {
            let p = LatticeParams {
                hopping: control * params.lambda.abs(),
                ..*params
            };
            assemble_lattice_hamiltonian_with(basis, &p)?
        }
        SweepModel::Impurity { params } => {
            if control == 0.0 {
                flags.push("mu = 0 restores the U(1) symmetry; statistics mix independent blocks".to_string());
            }
            assemble_impurity_hamiltonian_with(basis, &ImpurityParams { mu: control, ..*params })?
        }
    };
    let spec = trim_spectrum(&diagonalize(&matrix)?, opts.drop_low_frac, opts.drop_high_frac)?;
    let unfolded = unfold(&spec, opts.degree)?;
    let fit = fit_brody(&spacings(&unfolded), opts.method)?;
    let ratios = gap_ratios(&spec)?;
    if fit.low_sample {
        flags.push(format!("only {} spacings in the Brody fit", fit.n_spacings));
    }
    if fit.at_upper_bound {
        flags.push(format!("Brody fit at the upper bound {BRODY_MAX}"));
    }
    if !(ratios.mean_r >= R_BAND.0 && ratios.mean_r <= R_BAND.1) {
        flags.push(format!("<r> = {:.4} outside the sanity band", ratios.mean_r));
    }
    Ok(CurvePoint {
        control,
        b: fit.b,
        b_err: fit.std_err,
        mean_r: ratios.mean_r,
        r_err: ratios.std_err,
        n_levels: spec.len(),
        flags,
    })
}

/// Runs the pipeline at each control value (`J/λ` or `μ`). The basis is
/// enumerated once. Points whose pipeline fails are recorded in
/// [`DiagnosticCurve::failed`] and left out of the curve.
pub fn sweep(model: &SweepModel, grid: &[f64], opts: &PipelineOptions) -> Result<DiagnosticCurve> {
    if grid.is_empty() {
        return Err(invalid("grid", "empty control grid"));
    }
    if grid.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(invalid("grid", "controls must be finite and >= 0"));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let basis = match model {
        SweepModel::Lattice { params, n_ex, parity } => build_sector_basis(params, *n_ex, *parity)?,
        SweepModel::Impurity { params } => build_impurity_basis(params)?,
    };
    let results = par::map(&grid, |&c| run_point(model, &basis, c, opts));
    let mut points = Vec::new();
    let mut failed = Vec::new();
    for (c, r) in grid.iter().zip(results) {
        match r {
            Ok(p) => points.push(p),
            Err(e) => failed.push(FailedPoint {
                control: *c,
                error: e.to_string(),
            }),
        }
    }
    let mut curve = DiagnosticCurve::new(model.kind(), model.spins(), points)?;
    curve.failed = failed;
    Ok(curve)
}

/// Mean pairwise RMS distance between curves after rescaling each control by
/// `S^exponent`, on a common grid spanning the overlap of the rescaled
/// ranges. Curves are interpolated with monotone cubics in `log(control)`
/// when all controls are positive, in `control` otherwise.
pub fn collapse_score(curves: &[DiagnosticCurve], diagnostic: Diagnostic, exponent: f64) -> Result<f64> {
    if curves.len() < 2 {
        return Err(invalid("curves", format!("need at least 2 curves, got {}", curves.len())));
    }
    let log_axis = curves.iter().all(|c| c.points.iter().all(|p| p.control > 0.0));
    let axis = |x: f64| if log_axis { x.ln() } else { x };
    let mut interps = Vec::with_capacity(curves.len());
    for c in curves {
        let s = c.scale(exponent);
        let x: Vec<f64> = c.points.iter().map(|p| axis(p.control * s)).collect();
        interps.push(Pchip::new(&x, &c.values(diagnostic))?);
    }
    let lo = interps.iter().map(|p| p.domain().0).fold(f64::NEG_INFINITY, f64::max);
    let hi = interps.iter().map(|p| p.domain().1).fold(f64::INFINITY, f64::min);
    if !(hi > lo) {
        return Err(Error::NoOverlap);
    }
    let grid: Vec<f64> = (0..COLLAPSE_GRID).map(|k| lo + (hi - lo) * k as f64 / (COLLAPSE_GRID - 1) as f64).collect();
    let sampled: Vec<Vec<f64>> = interps.iter().map(|p| grid.iter().map(|&x| p.eval(x)).collect()).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..sampled.len() {
        for j in i + 1..sampled.len() {
            let ms = sampled[i].iter().zip(&sampled[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / grid.len() as f64;
            total += ms.sqrt();
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Monotone model of one curve's rising branch.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneBranch {
    interp: Pchip,
    /// Pooled knots `(control, value, standard error)`.
    pub knots: Vec<(f64, f64, f64)>,
    /// Last control value of the branch (the curve's maximum).
    pub branch_end: f64,
    /// Input points that isotonic pooling merged with a neighbour.
    pub pooled: usize,
}

impl MonotoneBranch {
    /// Leading increasing branch of `curve`: points up to the global
    /// maximum of the diagnostic, made non-decreasing by weighted isotonic
    /// regression, with tied blocks collapsed to one knot at their mean
    /// control.
    pub fn fit(curve: &DiagnosticCurve, diagnostic: Diagnostic) -> Result<Self> {
        let vals = curve.values(diagnostic);
        let errs = curve.errors(diagnostic);
        let controls = curve.controls();
        let Some(top) = vals.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i) else {
            return Err(Error::NotInvertible("empty curve".into()));
        };
        let n = top + 1;
        let floor = errs[..n].iter().copied().filter(|e| *e > 0.0 && e.is_finite()).fold(f64::INFINITY, f64::min);
        let floor = if floor.is_finite() { floor } else { 1.0 };
        let sig: Vec<f64> = errs[..n].iter().map(|&e| if e > 0.0 && e.is_finite() { e } else { floor }).collect();
        let w: Vec<f64> = sig.iter().map(|s| 1.0 / (s * s)).collect();
        let blocks = isotonic_increasing(&vals[..n], &w)?;
        if blocks.len() < 2 {
            return Err(Error::NotInvertible(format!(
                "{} curve (S={}) has no increasing branch in {diagnostic}",
                curve.model, curve.spins
            )));
        }
        let knots: Vec<(f64, f64, f64)> = blocks
            .iter()
            .map(|b| {
                let wsum: f64 = w[b.start..b.end].iter().sum();
                let x = controls[b.start..b.end].iter().zip(&w[b.start..b.end]).map(|(c, wi)| c * wi).sum::<f64>() / wsum;
                (x, b.value, 1.0 / wsum.sqrt())
            })
            .collect();
        let xs: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let ys: Vec<f64> = knots.iter().map(|k| k.1).collect();
        Ok(Self {
            interp: Pchip::new(&xs, &ys)?,
            pooled: n - blocks.len(),
            knots,
            branch_end: controls[top],
        })
    }

    pub fn eval(&self, control: f64) -> f64 {
        self.interp.eval(control)
    }

    pub fn slope(&self, control: f64) -> f64 {
        self.interp.derivative(control)
    }

    pub fn invert(&self, value: f64) -> Option<f64> {
        self.interp.invert_increasing(value)
    }

    pub fn value_range(&self) -> (f64, f64) {
        (self.knots[0].1, self.knots.last().unwrap().1)
    }

    pub fn control_range(&self) -> (f64, f64) {
        self.interp.domain()
    }

    /// Standard error at `control`, linearly interpolated between knots.
    pub fn std_err(&self, control: f64) -> f64 {
        let k = self.knots.partition_point(|k| k.0 <= control);
        if k == 0 {
            return self.knots[0].2;
        }
        if k == self.knots.len() {
            return self.knots[k - 1].2;
        }
        let (a, b) = (self.knots[k - 1], self.knots[k]);
        a.2 + (b.2 - a.2) * (control - a.0) / (b.0 - a.0)
    }
}

/// Map `μ(J/λ)` obtained by matching one diagnostic between the models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossoverMap {
    pub diagnostic: Diagnostic,
    pub j_over_lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub band_low: Vec<f64>,
    pub band_high: Vec<f64>,
    /// Matched diagnostic value at each grid point.
    pub value: Vec<f64>,
    /// `J/λ` interval on which both branches are invertible.
    pub window: (f64, f64),
    /// Shared diagnostic range.
    pub value_window: (f64, f64),
    pub lattice_spins: usize,
    pub impurity_spins: usize,
    pub interpolation: String,
}

impl CrossoverMap {
    /// Linear interpolation of `(μ, band_low, band_high)` at `j` inside the
    /// window.
    pub fn at(&self, j: f64) -> Option<(f64, f64, f64)> {
        if !(j >= self.window.0 && j <= self.window.1) || self.j_over_lambda.is_empty() {
            return None;
        }
        let k = self.j_over_lambda.partition_point(|&x| x <= j).clamp(1, self.j_over_lambda.len().max(2) - 1);
        if self.j_over_lambda.len() == 1 {
            return Some((self.mu[0], self.band_low[0], self.band_high[0]));
        }
        let (x0, x1) = (self.j_over_lambda[k - 1], self.j_over_lambda[k]);
        let t = if x1 > x0 { ((j - x0) / (x1 - x0)).clamp(0.0, 1.0) } else { 0.0 };
        let lerp = |v: &[f64]| v[k - 1] + t * (v[k] - v[k - 1]);
        Some((lerp(&self.mu), lerp(&self.band_low), lerp(&self.band_high)))
    }

    /// CSV: `j_over_lambda,mu,band_low,band_high,diagnostic`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# diagnostic={} window={:.17e}:{:.17e} value_window={:.17e}:{:.17e} lattice_spins={} impurity_spins={} interpolation={}",
            self.diagnostic, self.window.0, self.window.1, self.value_window.0, self.value_window.1, self.lattice_spins, self.impurity_spins, self.interpolation
        )?;
        writeln!(out, "j_over_lambda,mu,band_low,band_high,diagnostic")?;
        for k in 0..self.mu.len() {
            writeln!(
                out,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                self.j_over_lambda[k], self.mu[k], self.band_low[k], self.band_high[k], self.value[k]
            )?;
        }
        Ok(())
    }
}

/// Extracts `μ = f_imp⁻¹(f_lat(J/λ))` on the window where both rising
/// branches are invertible. Error bands propagate the per-point standard
/// errors of both curves to first order:
/// `σ_μ² = (σ_lat(J)² + σ_imp(μ)²) / f_imp'(μ)²`.
pub fn extract_map(lattice: &DiagnosticCurve, impurity: &DiagnosticCurve, diagnostic: Diagnostic) -> Result<CrossoverMap> {
    let f1 = MonotoneBranch::fit(lattice, diagnostic)?;
    let f2 = MonotoneBranch::fit(impurity, diagnostic)?;
    let (a1, b1) = f1.value_range();
    let (a2, b2) = f2.value_range();
    let (lo, hi) = (a1.max(a2), b1.min(b2));
    if !(hi > lo) {
        return Err(Error::NotInvertible(format!(
            "diagnostic ranges [{a1:.4}, {b1:.4}] and [{a2:.4}, {b2:.4}] do not overlap"
        )));
    }
    let j_lo = f1.invert(lo).ok_or_else(|| Error::NotInvertible("lower window edge".into()))?;
    let j_hi = f1.invert(hi).ok_or_else(|| Error::NotInvertible("upper window edge".into()))?;
    let log_axis = j_lo > 0.0;
    let grid: Vec<f64> = (0..MAP_GRID)
        .map(|k| {
            let t = k as f64 / (MAP_GRID - 1) as f64;
            if log_axis {
                (j_lo.ln() + t * (j_hi.ln() - j_lo.ln())).exp()
            } else {
                j_lo + t * (j_hi - j_lo)
            }
        })
        .collect();
    let (mu_min, mu_max) = f2.control_range();
    let mut out = CrossoverMap {
        diagnostic,
        j_over_lambda: Vec::with_capacity(MAP_GRID),
        mu: Vec::with_capacity(MAP_GRID),
        band_low: Vec::with_capacity(MAP_GRID),
        band_high: Vec::with_capacity(MAP_GRID),
        value: Vec::with_capacity(MAP_GRID),
        window: (j_lo, j_hi),
        value_window: (lo, hi),
        lattice_spins: lattice.spins,
        impurity_spins: impurity.spins,
        interpolation: "isotonic+pchip".to_string(),
    };
    for &j in &grid {
        let v = f1.eval(j).clamp(lo, hi);
        let Some(mu) = f2.invert(v) else { continue };
        let slope = f2.slope(mu);
        let sigma = (f1.std_err(j).powi(2) + f2.std_err(mu).powi(2)).sqrt();
        let dmu = if slope > 0.0 { sigma / slope } else { f64::INFINITY };
        out.j_over_lambda.push(j);
        out.mu.push(mu);
        out.band_low.push((mu - dmu).max(mu_min));
        out.band_high.push((mu + dmu).min(mu_max));
        out.value.push(v);
    }
    if out.mu.is_empty() {
        return Err(Error::NotInvertible("no grid point could be inverted".into()));
    }
    Ok(out)
}

/// Fraction of the shared `J/λ` window on which the error bands of two maps
/// intersect, sampled on [`MAP_GRID`] log-spaced points.
pub fn band_overlap_fraction(a: &CrossoverMap, b: &CrossoverMap) -> Result<f64> {
    let lo = a.window.0.max(b.window.0);
    let hi = a.window.1.min(b.window.1);
    if !(hi > lo) {
        return Err(Error::NoOverlap);
    }
    let log_axis = lo > 0.0;
    let mut hits = 0usize;
    for k in 0..MAP_GRID {
        let t = k as f64 / (MAP_GRID - 1) as f64;
        let j = if log_axis { (lo.ln() + t * (hi.ln() - lo.ln())).exp() } else { lo + t * (hi - lo) };
        let j = j.clamp(lo, hi);
        let (Some((_, al, ah)), Some((_, bl, bh))) = (a.at(j), b.at(j)) else { continue };
        if al <= bh && bl <= ah {
            hits += 1;
        }
    }
    Ok(hits as f64 / MAP_GRID as f64)
}
