//! Classical large-S limit of the driven impurity.
//!
//! Coordinates are rescaled by `√S` and energies by `S`, giving
//!
//! ```text
//! H = ½(p_c² + ω_c² x_c²) + ½(p_s² + ω_s² x_s²)
//!   + λ (√(ω_c ω_s) x_c x_s + p_c p_s / √(ω_c ω_s)) η̃ − √(2ω_c) μ x_c
//! η̃ = √(1 − (p_s² + ω_s² x_s²) / 2ω_s)
//! ```
//!
//! on the disk `0 <= η̃ <= 1`. Trajectories are integrated with an adaptive
//! Dormand–Prince 8(5,3) scheme in spin-vector coordinates (regular at the
//! disk boundary) and sampled on the section `p_s = 0`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::ImpurityParams;
use crate::error::{invalid, Error, Result};
use crate::ode::{dop853_step, step_factor};
use crate::par;
use crate::special::minimize_bracketed;

/// Stage states with `η̃` below this are rejected.
pub const ETA_FLOOR: f64 = 1e-8;
/// Initial states must have at least this much `η̃`.
pub const ETA_START: f64 = 1e-6;
/// Bisection target for `|p_s|` at a section crossing.
pub const CROSSING_TOL: f64 = 1e-10;
/// Energy-shell samples must satisfy `|H - E|` below this.
pub const SHELL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassicalState {
    pub x_c: f64,
    pub p_c: f64,
    pub x_s: f64,
    pub p_s: f64,
}

impl ClassicalState {
    pub const fn new(x_c: f64, p_c: f64, x_s: f64, p_s: f64) -> Self {
        Self { x_c, p_c, x_s, p_s }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x_c, self.p_c, self.x_s, self.p_s]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// The parameters the classical flow depends on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalParams {
    pub lambda: f64,
    pub mu: f64,
    pub omega_c: f64,
    pub omega_s: f64,
}

impl ClassicalParams {
    pub fn resonant(lambda: f64, mu: f64) -> Self {
        Self {
            lambda,
            mu,
            omega_c: 1.0,
            omega_s: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("omega_c", self.omega_c), ("omega_s", self.omega_s)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        for (name, v) in [("lambda", self.lambda), ("mu", self.mu)] {
            if !v.is_finite() {
                return Err(invalid(name, format!("must be finite, got {v}")));
            }
        }
        Ok(())
    }
}

impl From<&ImpurityParams> for ClassicalParams {
    fn from(p: &ImpurityParams) -> Self {
        Self {
            lambda: p.lambda,
            mu: p.mu,
            omega_c: p.omega_c,
            omega_s: p.omega_s,
        }
    }
}

/// `η̃²`; may be negative outside the domain.
fn eta_sq(p: &ClassicalParams, x_s: f64, p_s: f64) -> f64 {
    1.0 - (p_s * p_s + p.omega_s * p.omega_s * x_s * x_s) / (2.0 * p.omega_s)
}

/// `η̃(x_s, p_s)`, or an error outside `0 <= η̃ <= 1`.
pub fn eta(params: &ClassicalParams, x_s: f64, p_s: f64) -> Result<f64> {
    let e2 = eta_sq(params, x_s, p_s);
    if e2 < 0.0 || !e2.is_finite() {
        return Err(Error::DomainViolation { eta: e2 });
    }
    Ok(e2.sqrt())
}

pub fn classical_energy(state: &ClassicalState, params: &ClassicalParams) -> Result<f64> {
    let p = params;
    let ClassicalState { x_c, p_c, x_s, p_s } = *state;
    let et = eta(p, x_s, p_s)?;
    let g = (p.omega_c * p.omega_s).sqrt();
    Ok(0.5 * (p_c * p_c + p.omega_c * p.omega_c * x_c * x_c)
        + 0.5 * (p_s * p_s + p.omega_s * p.omega_s * x_s * x_s)
        + p.lambda * (g * x_c * x_s + p_c * p_s / g) * et
        - (2.0 * p.omega_c).sqrt() * p.mu * x_c)
}

/// Hamilton's equations `(ẋ_c, ṗ_c, ẋ_s, ṗ_s)`.
pub fn eom_rhs(state: &ClassicalState, params: &ClassicalParams) -> Result<ClassicalState> {
    rhs(&state.to_array(), params).map(ClassicalState::from_array)
}

fn rhs(y: &[f64; 4], p: &ClassicalParams) -> Result<[f64; 4]> {
    let [x_c, p_c, x_s, p_s] = *y;
    let e2 = eta_sq(p, x_s, p_s);
    if !(e2 >= ETA_FLOOR * ETA_FLOOR) {
        return Err(Error::DomainViolation { eta: e2.max(0.0).sqrt() });
    }
    let et = e2.sqrt();
    let (wc, ws, l) = (p.omega_c, p.omega_s, p.lambda);
    let g = (wc * ws).sqrt();
    let q = wc * ws * x_c * x_s + p_c * p_s;
    Ok([
        p_c + l / g * et * p_s,
        -wc * wc * x_c - l * g * et * x_s + (2.0 * wc).sqrt() * p.mu,
        p_s + l / g * (et * p_c - q * p_s / (2.0 * ws * et)),
        -ws * ws * x_s - l * g * (et * x_c - q * x_s / (2.0 * wc * et)),
    ])
}

/// `n_cl = (p_c² + ω_c² x_c²)/2ω_c + (p_s² + ω_s² x_s²)/2ω_s`, conserved at `μ = 0`.
pub fn excitation_number(state: &ClassicalState, params: &ClassicalParams) -> f64 {
    let (wc, ws) = (params.omega_c, params.omega_s);
    (state.p_c.powi(2) + wc * wc * state.x_c.powi(2)) / (2.0 * wc) + (state.p_s.powi(2) + ws * ws * state.x_s.powi(2)) / (2.0 * ws)
}

// Integration chart. The disk coordinates are singular on the circle
// `η̃ = 0`, which is a single point (the inverted spin) of the Bloch sphere;
// chaotic trajectories pass close to it routinely. Trajectories are
// therefore integrated in the regular variables `z = (x_c, p_c, s_x, s_y, s_z)`
// with `s_x - i s_y = 2 β η̃`, `s_z = 2|β|² - 1`, `β = (ω_s x_s + i p_s)/√(2ω_s)`,
// for which `H = ½(p_c² + ω_c² x_c²) + ω_s (1 + s_z)/2
//   + λ (√(ω_c/2) x_c s_x - p_c s_y / √(2ω_c)) - √(2ω_c) μ x_c`
// and `ṡ = 2 ∇_s H × s`.

type Bloch = [f64; 5];

fn to_bloch(y: &[f64; 4], p: &ClassicalParams) -> Bloch {
    let [x_c, p_c, x_s, p_s] = *y;
    let et = eta_sq(p, x_s, p_s).max(0.0).sqrt();
    let ws = p.omega_s;
    [
        x_c,
        p_c,
        (2.0 * ws).sqrt() * et * x_s,
        -(2.0 / ws).sqrt() * et * p_s,
        (p_s * p_s + ws * ws * x_s * x_s) / ws - 1.0,
    ]
}

fn from_bloch(z: &Bloch, p: &ClassicalParams) -> [f64; 4] {
    let [x_c, p_c, s_x, s_y, s_z] = *z;
    let ws = p.omega_s;
    let b_abs = (0.5 * (1.0 + s_z)).clamp(0.0, 1.0).sqrt();
    let t = s_x.hypot(s_y);
    let (re, im) = if t > 0.0 { (b_abs * s_x / t, -b_abs * s_y / t) } else { (b_abs, 0.0) };
    [x_c, p_c, (2.0 / ws).sqrt() * re, (2.0 * ws).sqrt() * im]
}

fn bloch_energy(z: &Bloch, p: &ClassicalParams) -> f64 {
    let [x_c, p_c, s_x, s_y, s_z] = *z;
    let wc = p.omega_c;
    0.5 * (p_c * p_c + wc * wc * x_c * x_c) + 0.5 * p.omega_s * (1.0 + s_z) + p.lambda * ((0.5 * wc).sqrt() * x_c * s_x - p_c * s_y / (2.0 * wc).sqrt())
        - (2.0 * wc).sqrt() * p.mu * x_c
}

fn bloch_rhs(z: &Bloch, p: &ClassicalParams) -> Bloch {
    let [x_c, p_c, s_x, s_y, s_z] = *z;
    let (wc, l) = (p.omega_c, p.lambda);
    let g = [l * (0.5 * wc).sqrt() * x_c, -l * p_c / (2.0 * wc).sqrt(), 0.5 * p.omega_s];
    [
        p_c - l * s_y / (2.0 * wc).sqrt(),
        -wc * wc * x_c - l * (0.5 * wc).sqrt() * s_x + (2.0 * wc).sqrt() * p.mu,
        2.0 * (g[1] * s_z - g[2] * s_y),
        2.0 * (g[2] * s_x - g[0] * s_z),
        2.0 * (g[0] * s_y - g[1] * s_x),
    ]
}

fn normalize_spin(z: &mut Bloch) {
    let n = (z[2] * z[2] + z[3] * z[3] + z[4] * z[4]).sqrt();
    if n > 0.0 {
        z[2] /= n;
        z[3] /= n;
        z[4] /= n;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub min_step: f64,
    pub max_step: f64,
}

/// Energy drift allowed per unit time, as a fraction of the step tolerance.
const DRIFT_BUDGET: f64 = 0.1;

/// Adaptive driver shared by [`integrate`] and the section sampler.
///
/// A step is accepted only when its local error estimate passes and its
/// energy change satisfies `|ΔH| <= DRIFT_BUDGET · tol · max(|H|, 1) · h`
/// (floored at the rounding level of `H`), so the accumulated relative drift
/// over a time `T` stays near `DRIFT_BUDGET · tol · T`.
struct Stepper<'a> {
    params: &'a ClassicalParams,
    tol: f64,
    h: f64,
    energy: f64,
    energy_scale: f64,
    stats: StepStats,
}

impl<'a> Stepper<'a> {
    fn new(params: &'a ClassicalParams, tol: f64, z0: &Bloch) -> Self {
        let energy = bloch_energy(z0, params);
        Self {
            params,
            tol,
            h: 1e-3,
            energy,
            energy_scale: energy.abs().max(1.0),
            stats: StepStats {
                min_step: f64::INFINITY,
                ..StepStats::default()
            },
        }
    }

    fn step(&self, z: &Bloch, h: f64) -> Result<(Bloch, f64)> {
        dop853_step(&|z: &Bloch| Ok(bloch_rhs(z, self.params)), z, h, self.tol)
    }

    /// Advances `z` by one accepted step no longer than `h_max`.
    fn advance(&mut self, t: f64, z: &mut Bloch, h_max: f64) -> Result<f64> {
        let mut h = self.h.min(h_max);
        loop {
            if h < 1e-14 * (1.0 + t.abs()) {
                return Err(Error::StepUnderflow { t, h });
            }
            let (mut z_new, err) = self.step(z, h)?;
            normalize_spin(&mut z_new);
            let e_new = bloch_energy(&z_new, self.params);
            let budget = (DRIFT_BUDGET * self.tol * h).max(64.0 * f64::EPSILON) * self.energy_scale;
            let err = err.max((e_new - self.energy).abs() / budget);
            if err <= 1.0 {
                *z = z_new;
                self.energy = e_new;
                self.stats.accepted += 1;
                self.stats.min_step = self.stats.min_step.min(h);
                self.stats.max_step = self.stats.max_step.max(h);
                self.h = h * step_factor(err);
                return Ok(h);
            }
            if !err.is_finite() {
                return Err(Error::NonConvergence(format!("non-finite step at t = {t}")));
            }
            self.stats.rejected += 1;
            h *= step_factor(err).min(0.9);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ClassicalState>,
    pub stats: StepStats,
    /// `max |H(t) - H(0)| / max(|H(0)|, 1)` over accepted steps.
    pub energy_drift: f64,
}

impl Trajectory {
    pub fn last(&self) -> ClassicalState {
        *self.states.last().expect("trajectory holds the initial state")
    }
}

/// Integrates from `state0` to `t_max` (negative `t_max` runs backward in
/// time) with local error tolerance `tol`.
pub fn integrate(state0: &ClassicalState, params: &ClassicalParams, t_max: f64, tol: f64) -> Result<Trajectory> {
    params.validate()?;
    if !(tol > 0.0) || !t_max.is_finite() {
        return Err(invalid("integrate", format!("need tol > 0 and finite t_max, got {tol}, {t_max}")));
    }
    let et = eta(params, state0.x_s, state0.p_s)?;
    if et < ETA_START {
        return Err(Error::DomainViolation { eta: et });
    }
    // Backward integration is the forward flow of the time-reversed state
    // (p_c, p_s) -> -(p_c, p_s), i.e. (p_c, s_y) -> -(p_c, s_y).
    let backward = t_max < 0.0;
    let flip = |z: &mut Bloch| {
        if backward {
            z[1] = -z[1];
            z[3] = -z[3];
        }
    };
    let mut z = to_bloch(&state0.to_array(), params);
    flip(&mut z);
    let e0 = bloch_energy(&z, params);
    let scale = e0.abs().max(1.0);
    let mut stepper = Stepper::new(params, tol, &z);
    let mut t = 0.0;
    let span = t_max.abs();
    let mut times = vec![0.0];
    let mut states = vec![*state0];
    let mut drift = 0.0f64;
    while t < span {
        let h = stepper.advance(t, &mut z, span - t)?;
        t = if span - t - h <= 1e-12 * span { span } else { t + h };
        drift = drift.max((bloch_energy(&z, params) - e0).abs() / scale);
        let mut out = z;
        flip(&mut out);
        times.push(if backward { -t } else { t });
        states.push(ClassicalState::from_array(from_bloch(&out, params)));
    }
    Ok(Trajectory {
        times,
        states,
        stats: stepper.stats,
        energy_drift: drift,
    })
}

/// Lowest attainable energy and the state reaching it.
///
/// For fixed `(x_s, p_s)` the energy is a positive quadratic in
/// `(x_c, p_c)`, which is minimized in closed form; the remaining 2-D
/// minimization over the spin disk is a polar grid search refined by
/// alternating golden-section sweeps.
pub fn ground_state(params: &ClassicalParams) -> Result<(ClassicalState, f64)> {
    params.validate()?;
    let p = *params;
    let reduced = move |rho: f64, phi: f64| -> (f64, ClassicalState) {
        let x_s = (2.0 / p.omega_s).sqrt() * rho * phi.cos();
        let p_s = (2.0 * p.omega_s).sqrt() * rho * phi.sin();
        let et = eta_sq(&p, x_s, p_s).max(0.0).sqrt();
        let g = (p.omega_c * p.omega_s).sqrt();
        let b = p.lambda * et * p_s / g;
        let a = p.lambda * g * et * x_s - (2.0 * p.omega_c).sqrt() * p.mu;
        let x_c = -a / (p.omega_c * p.omega_c);
        let p_c = -b;
        let s = ClassicalState::new(x_c, p_c, x_s, p_s);
        let e = 0.5 * (p_s * p_s + p.omega_s * p.omega_s * x_s * x_s) - 0.5 * b * b - a * a / (2.0 * p.omega_c * p.omega_c);
        (e, s)
    };
    let (nr, np) = (120, 240);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..=nr {
        let rho = i as f64 / nr as f64;
        for j in 0..np {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / np as f64;
            let e = reduced(rho, phi).0;
            if e < best.0 {
                best = (e, rho, phi);
            }
        }
    }
    let (_, mut rho, mut phi) = best;
    let (dr, dp) = (1.0 / nr as f64, 2.0 * std::f64::consts::PI / np as f64);
    for _ in 0..6 {
        rho = minimize_bracketed(|r| reduced(r, phi).0, (rho - dr).max(0.0), (rho + dr).min(1.0), 5, 1e-12)?.x;
        phi = minimize_bracketed(|f| reduced(rho, f).0, phi - dp, phi + dp, 5, 1e-12)?.x;
    }
    let (e, s) = reduced(rho, phi);
    Ok((s, e))
}

/// Half-width of an `x_c` interval containing every state with `H <= energy`.
fn x_c_bracket(params: &ClassicalParams, energy: f64) -> f64 {
    let p = params;
    let k = (2.0 * p.omega_c).sqrt() * (p.lambda.abs() + p.mu.abs());
    let slack = (energy + p.lambda * p.lambda / p.omega_c).max(0.0);
    (k + (k * k + 2.0 * p.omega_c * p.omega_c * slack).sqrt()) / (p.omega_c * p.omega_c)
}

const SHELL_MAX_TRIES: usize = 2_000_000;

/// Rejection-samples a state on the energy shell `H = energy`.
///
/// `(x_s, p_s)` is drawn uniformly in the spin disk (keeping `η̃ >= 1e-3`),
/// `x_c` uniformly in a bracket that contains the whole shell, and `p_c`
/// from the quadratic `H = energy` with a random root.
pub fn sample_energy_shell<R: Rng>(params: &ClassicalParams, energy: f64, rng: &mut R) -> Result<ClassicalState> {
    params.validate()?;
    let (ground, e_min) = ground_state(params)?;
    let slack = energy - e_min;
    if slack < -1e-9 * e_min.abs().max(1.0) {
        return Err(Error::UnattainableEnergy {
            energy,
            reason: format!("below the classical minimum {e_min}"),
        });
    }
    if slack <= 1e-9 * e_min.abs().max(1.0) {
        return Ok(ground);
    }
    let p = params;
    let g = (p.omega_c * p.omega_s).sqrt();
    let half = x_c_bracket(p, energy);
    for _ in 0..SHELL_MAX_TRIES {
        let rho = 0.999 * rng.random::<f64>().sqrt();
        let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
        let x_s = (2.0 / p.omega_s).sqrt() * rho * phi.cos();
        let p_s = (2.0 * p.omega_s).sqrt() * rho * phi.sin();
        let x_c = -half + 2.0 * half * rng.random::<f64>();
        let et = eta_sq(p, x_s, p_s).sqrt();
        let b = p.lambda * et * p_s / g;
        let rest = 0.5 * p.omega_c * p.omega_c * x_c * x_c
            + 0.5 * (p_s * p_s + p.omega_s * p.omega_s * x_s * x_s)
            + p.lambda * g * x_c * x_s * et
            - (2.0 * p.omega_c).sqrt() * p.mu * x_c;
        // ½ p_c² + b p_c + rest = energy
        let disc = b * b - 2.0 * (rest - energy);
        if disc < 0.0 {
            continue;
        }
        let root = disc.sqrt();
        let p_c = if rng.random::<bool>() { -b + root } else { -b - root };
        let s = ClassicalState::new(x_c, p_c, x_s, p_s);
        if (classical_energy(&s, p)? - energy).abs() <= SHELL_TOL * energy.abs().max(1.0) {
            return Ok(s);
        }
    }
    Err(Error::UnattainableEnergy {
        energy,
        reason: format!("no shell state found in {SHELL_MAX_TRIES} draws"),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionOptions {
    pub tol: f64,
    /// Trajectories stop after this much time even if short of crossings.
    pub max_time: f64,
}

impl Default for SectionOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_time: 5_000.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionPoint {
    pub x_c: f64,
    pub p_c: f64,
    pub t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionTrajectory {
    pub initial: ClassicalState,
    pub points: Vec<SectionPoint>,
    /// Set when integration stopped early (step-size underflow).
    pub truncated: bool,
    pub stats: StepStats,
    pub max_energy_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoincareSection {
    pub params: ClassicalParams,
    pub energy: f64,
    /// Always `"p_s=0, dp_s/dt<0"`.
    pub direction: String,
    pub seed: u64,
    pub options: SectionOptions,
    pub trajectories: Vec<SectionTrajectory>,
}

impl PoincareSection {
    /// Median per-trajectory dimension estimate over trajectories with at
    /// least 32 points.
    pub fn dimension_proxy(&self) -> Option<f64> {
        let mut d: Vec<f64> = self
            .trajectories
            .iter()
            .filter(|t| t.points.len() >= 32)
            .filter_map(|t| point_set_dimension(&t.points.iter().map(|p| (p.x_c, p.p_c)).collect::<Vec<_>>()))
            .collect();
        if d.is_empty() {
            return None;
        }
        d.sort_by(f64::total_cmp);
        let n = d.len();
        Some(if n % 2 == 1 { d[n / 2] } else { 0.5 * (d[n / 2 - 1] + d[n / 2]) })
    }

    /// CSV: `trajectory_id,crossing_index,x_c,p_c,t_cross`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "trajectory_id,crossing_index,x_c,p_c,t_cross")?;
        for (i, tr) in self.trajectories.iter().enumerate() {
            for (k, pt) in tr.points.iter().enumerate() {
                writeln!(out, "{i},{k},{:.16e},{:.16e},{:.16e}", pt.x_c, pt.p_c, pt.t)?;
            }
        }
        Ok(())
    }
}

/// Nearest-neighbour scaling dimension of a planar point set.
///
/// The median nearest-neighbour distance of the first `m` points scales as
/// `m^{-1/d}`; `d` is the least-squares slope over `m = n/8, n/4, n/2, n`.
/// Curves give `d ≈ 1`, area-filling sets `d ≈ 2`.
pub fn point_set_dimension(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len();
    if n < 32 {
        return None;
    }
    let median_nn = |pts: &[(f64, f64)]| -> f64 {
        let mut d: Vec<f64> = pts
            .iter()
            .enumerate()
            .map(|(i, a)| {
                pts.iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, b)| (a.0 - b.0).hypot(a.1 - b.1))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        d.sort_by(f64::total_cmp);
        d[d.len() / 2]
    };
    let mut xy = Vec::with_capacity(4);
    for k in [8, 4, 2, 1] {
        let r = median_nn(&points[..n / k]);
        if !(r > 0.0) {
            return None;
        }
        xy.push((((n / k) as f64).ln(), r.ln()));
    }
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / 4.0;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / 4.0;
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope < 0.0).then(|| -1.0 / slope)
}

fn section_trajectory(params: &ClassicalParams, energy: f64, start: ClassicalState, n_crossings: usize, opts: &SectionOptions) -> Result<SectionTrajectory> {
    let mut z = to_bloch(&start.to_array(), params);
    let mut stepper = Stepper::new(params, opts.tol, &z);
    let mut t = 0.0;
    let mut points = Vec::with_capacity(n_crossings);
    let mut truncated = false;
    let mut max_err = 0.0f64;
    let scale = energy.abs().max(1.0);
    while points.len() < n_crossings && t < opts.max_time {
        let prev = z;
        let h = match stepper.advance(t, &mut z, opts.max_time - t) {
            Ok(h) => h,
            Err(Error::StepUnderflow { .. } | Error::NonConvergence(_)) => {
                truncated = true;
                break;
            }
            Err(e) => return Err(e),
        };
        // p_s has the sign of -s_y, so a downward p_s crossing is an upward s_y one.
        if prev[3] < 0.0 && z[3] >= 0.0 {
            let (mut lo, mut hi) = (0.0, h);
            let mut hit = from_bloch(&z, params);
            let mut tau = h;
            for _ in 0..200 {
                if hit[3].abs() < CROSSING_TOL {
                    break;
                }
                tau = 0.5 * (lo + hi);
                let zt = stepper.step(&prev, tau)?.0;
                hit = from_bloch(&zt, params);
                if zt[3] < 0.0 {
                    lo = tau;
                } else {
                    hi = tau;
                }
            }
            // Crossings through the spin pole itself have no direction.
            let downward = rhs(&hit, params).map(|d| d[3] < 0.0).unwrap_or(false);
            if hit[3].abs() < CROSSING_TOL && downward {
                let s = ClassicalState::from_array(hit);
                max_err = max_err.max((classical_energy(&s, params)? - energy).abs() / scale);
                points.push(SectionPoint {
                    x_c: hit[0],
                    p_c: hit[1],
                    t: t + tau,
                });
            }
        }
        t += h;
    }
    Ok(SectionTrajectory {
        initial: start,
        points,
        truncated,
        stats: stepper.stats,
        max_energy_error: max_err,
    })
}

/// Poincaré section `p_s = 0` (crossing downward) on the shell `H = energy`.
/// Trajectory `i` seeds from the ChaCha stream `i` of `seed`.
pub fn poincare_section(params: &ClassicalParams, energy: f64, n_seeds: usize, n_crossings: usize, seed: u64) -> Result<PoincareSection> {
    poincare_section_with(params, energy, n_seeds, n_crossings, seed, &SectionOptions::default())
}

pub fn poincare_section_with(
    params: &ClassicalParams,
    energy: f64,
    n_seeds: usize,
    n_crossings: usize,
    seed: u64,
    opts: &SectionOptions,
) -> Result<PoincareSection> {
    params.validate()?;
    if n_seeds == 0 || n_crossings == 0 {
        return Err(invalid("poincare", "need at least one seed and one crossing"));
    }
    // Fail fast on unattainable energies before spawning work.
    ground_state(params).and_then(|(_, e_min)| {
        if energy < e_min - 1e-9 * e_min.abs().max(1.0) {
            Err(Error::UnattainableEnergy {
                energy,
                reason: format!("below the classical minimum {e_min}"),
            })
        } else {
            Ok(())
        }
    })?;
    let results = par::map_range(n_seeds, |i| -> Result<SectionTrajectory> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let start = sample_energy_shell(params, energy, &mut rng)?;
        section_trajectory(params, energy, start, n_crossings, opts)
    });
    let trajectories = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(PoincareSection {
        params: *params,
        energy,
        direction: "p_s=0, dp_s/dt<0".into(),
        seed,
        options: *opts,
        trajectories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn p(lambda: f64, mu: f64) -> ClassicalParams {
        ClassicalParams::resonant(lambda, mu)
    }

    #[test]
    fn energy_examples() {
        let z = ClassicalState::default();
        assert_eq!(classical_energy(&z, &p(0.7, 1.3)).unwrap(), 0.0);
        let s = ClassicalState::new(0.3, -0.4, 0.5, 0.2);
        let e = classical_energy(&s, &p(0.0, 0.0)).unwrap();
        assert!((e - 0.5 * (0.09 + 0.16) - 0.5 * (0.25 + 0.04)).abs() < 1e-15);
        let e = classical_energy(&ClassicalState::new(1.0, 0.0, 0.0, 0.0), &p(1.0, 0.0)).unwrap();
        assert!((e - 0.5).abs() < 1e-15);
        assert!(matches!(
            classical_energy(&ClassicalState::new(0.0, 0.0, 2.0, 0.0), &p(1.0, 0.0)),
            Err(Error::DomainViolation { .. })
        ));
    }

    #[test]
    fn rhs_examples() {
        let d = eom_rhs(&ClassicalState::default(), &p(1.0, 0.6)).unwrap();
        assert_eq!(d, ClassicalState::new(0.0, 2f64.sqrt() * 0.6, 0.0, 0.0));
        let s = ClassicalState::new(0.3, -0.4, 0.5, 0.2);
        let d = eom_rhs(&s, &p(0.0, 0.5)).unwrap();
        assert_eq!(d, ClassicalState::new(-0.4, -0.3 + 2f64.sqrt() * 0.5, 0.2, -0.5));
        assert!(eom_rhs(&ClassicalState::new(0.0, 0.0, 2f64.sqrt(), 0.0), &p(1.0, 0.0)).is_err());
    }

    #[test]
    fn rhs_is_symplectic_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for params in [p(1.0, 0.0), p(1.0, 1.8), p(0.3, 10.0), ClassicalParams { lambda: 0.8, mu: 0.4, omega_c: 1.3, omega_s: 0.7 }] {
            for _ in 0..100 {
                let rho = 0.95 * rng.random::<f64>().sqrt();
                let phi = TAU * rng.random::<f64>();
                let s = ClassicalState::new(
                    4.0 * rng.random::<f64>() - 2.0,
                    4.0 * rng.random::<f64>() - 2.0,
                    (2.0 / params.omega_s).sqrt() * rho * phi.cos(),
                    (2.0 * params.omega_s).sqrt() * rho * phi.sin(),
                );
                let h = 1e-6;
                let grad = |i: usize| {
                    let mut a = s.to_array();
                    let mut b = s.to_array();
                    a[i] += h;
                    b[i] -= h;
                    (classical_energy(&ClassicalState::from_array(a), &params).unwrap()
                        - classical_energy(&ClassicalState::from_array(b), &params).unwrap())
                        / (2.0 * h)
                };
                let fd = [grad(1), -grad(0), grad(3), -grad(2)];
                let d = eom_rhs(&s, &params).unwrap().to_array();
                for i in 0..4 {
                    assert!((fd[i] - d[i]).abs() <= 1e-6 * d[i].abs().max(1.0), "{i}: {} vs {}", fd[i], d[i]);
                }
            }
        }
    }

    #[test]
    fn decoupled_motion_is_harmonic() {
        let s0 = ClassicalState::new(0.7, -0.2, 0.3, 0.5);
        let tr = integrate(&s0, &p(0.0, 0.0), 100.0, 1e-10).unwrap();
        let t = *tr.times.last().unwrap();
        assert_eq!(t, 100.0);
        let e = tr.last();
        let (c, s) = (t.cos(), t.sin());
        assert!((e.x_c - (0.7 * c - 0.2 * s)).abs() < 1e-6);
        assert!((e.p_c - (-0.2 * c - 0.7 * s)).abs() < 1e-6);
        assert!((e.x_s - (0.3 * c + 0.5 * s)).abs() < 1e-6);
        assert!((e.p_s - (0.5 * c - 0.3 * s)).abs() < 1e-6);
    }

    #[test]
    fn excitation_number_conserved_without_drive() {
        let s0 = ClassicalState::new(0.9, 0.1, -0.4, 0.6);
        let params = p(1.0, 0.0);
        let n0 = excitation_number(&s0, &params);
        let tr = integrate(&s0, &params, 1000.0, 1e-10).unwrap();
        let worst = tr.states.iter().map(|s| (excitation_number(s, &params) - n0).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-8 * n0.max(1.0), "{worst}");
    }

    #[test]
    fn energy_drift_is_small() {
        let params = p(1.0, 1.8);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s0 = sample_energy_shell(&params, -1.0, &mut rng).unwrap();
        let tr = integrate(&s0, &params, 1000.0, 1e-10).unwrap();
        assert!(tr.energy_drift <= 1e-8, "{}", tr.energy_drift);
        assert!(tr.states.iter().all(|s| eta_sq(&params, s.x_s, s.p_s) >= -1e-12));
    }

    #[test]
    fn time_reversal() {
        let params = p(1.0, 0.0);
        let s0 = ClassicalState::new(0.4, -0.3, 0.2, 0.9);
        let fwd = integrate(&s0, &params, 50.0, 1e-10).unwrap().last();
        let back = integrate(&fwd, &params, -50.0, 1e-10).unwrap().last();
        assert!((back.to_array().iter().zip(s0.to_array()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)) < 1e-6);
    }

    #[test]
    fn shell_sampler() {
        let params = p(1.0, 1.8);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &e in &[-2.0, 0.0, 3.0] {
            let s = sample_energy_shell(&params, e, &mut rng).unwrap();
            assert!((classical_energy(&s, &params).unwrap() - e).abs() <= 1e-10 * e.abs().max(1.0));
        }
        let z = sample_energy_shell(&p(0.0, 0.0), 0.0, &mut rng).unwrap();
        assert!(z.norm() <= 1e-5, "{z:?}");
        let a = sample_energy_shell(&params, 1.0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = sample_energy_shell(&params, 1.0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert!(matches!(sample_energy_shell(&p(0.0, 0.0), -1.0, &mut rng), Err(Error::UnattainableEnergy { .. })));
    }

    #[test]
    fn ground_state_is_a_minimum() {
        let params = p(1.0, 1.8);
        let (g, e) = ground_state(&params).unwrap();
        assert!((classical_energy(&g, &params).unwrap() - e).abs() < 1e-12);
        let d = eom_rhs(&g, &params).unwrap();
        assert!(d.norm() < 1e-5, "{d:?}");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..2000 {
            let rho = rng.random::<f64>().sqrt();
            let phi = TAU * rng.random::<f64>();
            let s = ClassicalState::new(6.0 * rng.random::<f64>() - 1.0, 4.0 * rng.random::<f64>() - 2.0, 2f64.sqrt() * rho * phi.cos(), 2f64.sqrt() * rho * phi.sin());
            assert!(classical_energy(&s, &params).unwrap() >= e - 1e-12);
        }
    }

    #[test]
    fn decoupled_sections_are_circles() {
        let params = p(0.0, 0.0);
        let sec = poincare_section(&params, 1.0, 3, 20, 11).unwrap();
        for tr in &sec.trajectories {
            assert_eq!(tr.points.len(), 20);
            let r: Vec<f64> = tr.points.iter().map(|q| q.p_c * q.p_c + q.x_c * q.x_c).collect();
            let spread = r.iter().copied().fold(f64::NEG_INFINITY, f64::max) - r.iter().copied().fold(f64::INFINITY, f64::min);
            assert!(spread < 1e-6, "{spread}");
            assert!(tr.max_energy_error <= 1e-6);
        }
    }

    #[test]
    fn dimension_proxy_on_synthetic_sets() {
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        let circle: Vec<(f64, f64)> = (0..400).map(|k| {
            let a = TAU * (k as f64 * golden).fract();
            (a.cos(), a.sin())
        }).collect();
        let d1 = point_set_dimension(&circle).unwrap();
        assert!((d1 - 1.0).abs() < 0.2, "{d1}");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let square: Vec<(f64, f64)> = (0..400).map(|_| (rng.random(), rng.random())).collect();
        let d2 = point_set_dimension(&square).unwrap();
        assert!((d2 - 2.0).abs() < 0.3, "{d2}");
    }

    #[test]
    fn section_errors() {
        assert!(poincare_section(&p(1.0, 0.0), 1.0, 0, 10, 1).is_err());
        assert!(matches!(poincare_section(&p(0.0, 0.0), -5.0, 2, 10, 1), Err(Error::UnattainableEnergy { .. })));
    }

    #[test]
    fn spin_chart_round_trip_and_flow() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for params in [p(1.0, 0.0), p(0.7, 1.8), ClassicalParams { lambda: 1.3, mu: 0.4, omega_c: 0.8, omega_s: 1.5 }] {
            for _ in 0..100 {
                let rho = 0.05 + 0.9 * rng.random::<f64>().sqrt();
                let phi = TAU * rng.random::<f64>();
                let ws = params.omega_s;
                let y = [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, (2.0 / ws).sqrt() * rho * phi.cos(), (2.0 * ws).sqrt() * rho * phi.sin()];
                let z = to_bloch(&y, &params);
                assert!(((z[2] * z[2] + z[3] * z[3] + z[4] * z[4]) - 1.0).abs() < 1e-12);
                let back = from_bloch(&z, &params);
                assert!(y.iter().zip(back).all(|(a, b)| (a - b).abs() < 1e-12));
                let s = ClassicalState::from_array(y);
                assert!((bloch_energy(&z, &params) - classical_energy(&s, &params).unwrap()).abs() < 1e-12);
                // Chain rule: dz/dt from the disk flow must match the spin flow.
                let dy = rhs(&y, &params).unwrap();
                let eps = 1e-6;
                let mut yp = y;
                let mut ym = y;
                for k in 0..4 {
                    yp[k] += eps * dy[k];
                    ym[k] -= eps * dy[k];
                }
                let (zp, zm) = (to_bloch(&yp, &params), to_bloch(&ym, &params));
                let dz = bloch_rhs(&z, &params);
                for k in 0..5 {
                    let fd = (zp[k] - zm[k]) / (2.0 * eps);
                    assert!((fd - dz[k]).abs() < 1e-6 * (1.0 + dz[k].abs()), "{k}: {fd} vs {}", dz[k]);
                }
            }
        }
    }

    #[test]
    fn regular_and_chaotic_sections() {
        let weak = p(1.0, 0.1);
        let e_weak = ground_state(&weak).unwrap().1 + 0.2;
        let d_weak = poincare_section(&weak, e_weak, 8, 300, 1).unwrap().dimension_proxy().unwrap();
        assert!(d_weak < 1.5, "{d_weak}");
        let strong = p(1.0, 1.8);
        for de in [2.0, 3.0, 4.0] {
            let e = ground_state(&strong).unwrap().1 + de;
            let sec = poincare_section(&strong, e, 8, 300, 1).unwrap();
            for tr in &sec.trajectories {
                assert!(tr.max_energy_error <= 1e-6);
                assert!(!tr.truncated);
            }
            let d = sec.dimension_proxy().unwrap();
            assert!(d > 1.5, "E = {e}: {d}");
        }
    }
}
