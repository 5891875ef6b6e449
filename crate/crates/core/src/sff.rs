//! Block-averaged spectral form factor `K(t) = <|Σ_n e^{i E_n t}|²>` of
//! unfolded spectra, with the large-N GOE and Poisson reference curves.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::par;
use crate::special::bessel_j1;
use crate::unfolding::UnfoldedSpectrum;

pub const DEFAULT_BLOCK_SIZE: usize = 100;
pub const DEFAULT_T_MIN: f64 = 1e-2;
pub const DEFAULT_T_MAX: f64 = 1e2;
pub const DEFAULT_TIME_POINTS: usize = 400;

/// `points` log-spaced times on `[t_min, t_max]`.
pub fn log_time_grid(t_min: f64, t_max: f64, points: usize) -> Result<Vec<f64>> {
    if !(t_min > 0.0) || !(t_max > t_min) || points < 2 {
        return Err(invalid("times", format!("need 0 < t_min < t_max and >= 2 points, got [{t_min}, {t_max}] x {points}")));
    }
    let (a, b) = (t_min.ln(), t_max.ln());
    Ok((0..points)
        .map(|k| {
            if k == 0 {
                t_min
            } else if k + 1 == points {
                t_max
            } else {
                (a + (b - a) * k as f64 / (points - 1) as f64).exp()
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SffCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Standard error of the block average at each time.
    pub std_err: Vec<f64>,
    pub block_size: usize,
    pub n_blocks: usize,
    pub goe: Vec<f64>,
    pub poisson: Vec<f64>,
}

impl SffCurve {
    /// CSV: `t,K_measured,K_goe,K_poisson,n_blocks,block_size,K_stderr`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,K_measured,K_goe,K_poisson,n_blocks,block_size,K_stderr")?;
        for k in 0..self.times.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{},{},{:.16e}",
                self.times[k], self.values[k], self.goe[k], self.poisson[k], self.n_blocks, self.block_size, self.std_err[k]
            )?;
        }
        Ok(())
    }

    /// Mean of the measured curve over grid points in `[t0, t1]`.
    pub fn window_mean(&self, t0: f64, t1: f64) -> Option<f64> {
        let sel: Vec<f64> = self
            .times
            .iter()
            .zip(&self.values)
            .filter(|(t, _)| (t0..=t1).contains(*t))
            .map(|(_, v)| *v)
            .collect();
        (!sel.is_empty()).then(|| sel.iter().sum::<f64>() / sel.len() as f64)
    }
}

/// `|Σ_n e^{i E_n t}|²` for one block.
pub fn block_form_factor(levels: &[f64], t: f64) -> f64 {
    let (mut c, mut s) = (0.0, 0.0);
    for &e in levels {
        let (sin, cos) = (e * t).sin_cos();
        c += cos;
        s += sin;
    }
    c * c + s * s
}

/// Splits the unfolded levels into `⌊M / block_size⌋` disjoint consecutive
/// blocks (leftovers dropped) and averages the block form factors.
pub fn sff(unfolded: &UnfoldedSpectrum, block_size: usize, times: &[f64]) -> Result<SffCurve> {
    if block_size == 0 {
        return Err(invalid("block_size", "must be at least 1"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
        return Err(invalid("times", "must be finite and strictly increasing"));
    }
    let n_blocks = unfolded.len() / block_size;
    if n_blocks < 2 {
        return Err(Error::TooFewLevels {
            needed: 2 * block_size,
            got: unfolded.len(),
        });
    }
    let blocks: Vec<&[f64]> = unfolded.values().chunks_exact(block_size).collect();
    let per_time = par::map(times, |&t| {
        let k: Vec<f64> = blocks.iter().map(|b| block_form_factor(b, t)).collect();
        let m = k.len() as f64;
        let mean = k.iter().sum::<f64>() / m;
        let var = k.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
        (mean, (var / m).sqrt())
    });
    Ok(SffCurve {
        times: times.to_vec(),
        values: per_time.iter().map(|p| p.0).collect(),
        std_err: per_time.iter().map(|p| p.1).collect(),
        block_size,
        n_blocks,
        goe: times.iter().map(|&t| sff_goe_reference(block_size, t)).collect(),
        poisson: times.iter().map(|&t| sff_poisson_reference(block_size, t)).collect(),
    })
}

/// `[(π/t) J₁(2Nt/π)]² + N·b(t)` with the ramp `t/π - (t/2π) ln(1 + t/π)`
/// below `t = 2π` and the plateau branch `2 - (t/2π) ln((t+π)/(t-π))` above.
pub fn sff_goe_reference(n: usize, t: f64) -> f64 {
    let nf = n as f64;
    let disconnected = (PI / t * bessel_j1(2.0 * nf * t / PI)).powi(2);
    disconnected + nf * goe_connected_branch(t)
}

fn goe_connected_branch(t: f64) -> f64 {
    if t <= 2.0 * PI {
        t / PI - t / (2.0 * PI) * (1.0 + t / PI).ln()
    } else {
        2.0 - t / (2.0 * PI) * ((t + PI) / (t - PI)).ln()
    }
}

/// `N + 2/t² - [(1+it)^{1-N} + (1-it)^{1-N}]/t²`.
///
/// The bracket equals `2 ρ^{1-N} cos((N-1)θ)` with `1 + it = ρ e^{iθ}`; for
/// `N t < 1` a binomial series avoids the cancellation against `2/t²`.
pub fn sff_poisson_reference(n: usize, t: f64) -> f64 {
    let nf = n as f64;
    if n <= 1 {
        return nf;
    }
    let m = nf - 1.0;
    if nf * t < 1.0 {
        // 2(1 - Re(1+it)^{-m})/t² = -2 Σ_{j>=1} (-1)^j C(m+2j-1, 2j) t^{2j-2}
        let mut c = m * (m + 1.0) / 2.0;
        let mut sum = 0.0;
        let mut sign = 1.0;
        let mut tp = 1.0;
        for j in 1..200 {
            let term = sign * c * tp;
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
            let jf = j as f64;
            c *= (m + 2.0 * jf) * (m + 2.0 * jf + 1.0) / ((2.0 * jf + 1.0) * (2.0 * jf + 2.0));
            tp *= t * t;
            sign = -sign;
        }
        return nf + 2.0 * sum;
    }
    let rho = (1.0 + t * t).sqrt();
    let theta = t.atan();
    let bracket = 2.0 * rho.powf(-m) * (m * theta).cos();
    nf + (2.0 - bracket) / (t * t)
}
