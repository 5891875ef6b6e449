//! Full dense diagonalization and spectrum trimming.

use std::io::{BufRead, Write};

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hamiltonian::SymmetricSparseMatrix;

/// Largest dimension the dense path will allocate by default (~3.2 GB).
pub const DEFAULT_MAX_DENSE_DIM: usize = 20_000;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrimRecord {
    pub drop_low_frac: f64,
    pub drop_high_frac: f64,
    pub removed_low: usize,
    pub removed_high: usize,
    pub len_before: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub params: String,
    pub trims: Vec<TrimRecord>,
}

/// Ascending eigenvalues with a parameter snapshot and trim history.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    values: Vec<f64>,
    pub provenance: Provenance,
}

impl Spectrum {
    /// Sorts `values` ascending. Errors on non-finite input.
    pub fn new(mut values: Vec<f64>, params: impl Into<String>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(invalid("spectrum", format!("non-finite eigenvalue {bad}")));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self {
            values,
            provenance: Provenance {
                params: params.into(),
                trims: Vec::new(),
            },
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

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# params: {}", self.provenance.params)?;
        for t in &self.provenance.trims {
            writeln!(
                out,
                "# trim: drop_low_frac={} drop_high_frac={} removed_low={} removed_high={} len_before={}",
                t.drop_low_frac, t.drop_high_frac, t.removed_low, t.removed_high, t.len_before
            )?;
        }
        writeln!(out, "energy")?;
        for v in &self.values {
            writeln!(out, "{v:.16e}")?;
        }
        Ok(())
    }

    /// Reads the format written by [`Spectrum::write_csv`]. Also accepts a
    /// bare column of numbers; extra CSV columns after the first are ignored.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut values = Vec::new();
        let mut provenance = Provenance::default();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(p) = rest.strip_prefix("params:") {
                    provenance.params = p.trim().to_string();
                } else if let Some(t) = rest.strip_prefix("trim:") {
                    provenance.trims.push(parse_trim(t)?);
                }
                continue;
            }
            let first = line.split(',').next().unwrap_or("").trim();
            match first.parse::<f64>() {
                Ok(v) => values.push(v),
                Err(_) if values.is_empty() => continue, // column header
                Err(e) => return Err(Error::Parse(format!("line {}: `{first}`: {e}", lineno + 1))),
            }
        }
        let mut s = Spectrum::new(values, provenance.params.clone())?;
        s.provenance = provenance;
        Ok(s)
    }
}

fn parse_trim(text: &str) -> Result<TrimRecord> {
    let mut t = TrimRecord::default();
    for kv in text.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad trim field `{kv}`")))?;
        let bad = |e: &dyn std::fmt::Display| Error::Parse(format!("trim field `{kv}`: {e}"));
        match k {
            "drop_low_frac" => t.drop_low_frac = v.parse().map_err(|e| bad(&e))?,
            "drop_high_frac" => t.drop_high_frac = v.parse().map_err(|e| bad(&e))?,
            "removed_low" => t.removed_low = v.parse().map_err(|e| bad(&e))?,
            "removed_high" => t.removed_high = v.parse().map_err(|e| bad(&e))?,
            "len_before" => t.len_before = v.parse().map_err(|e| bad(&e))?,
            _ => return Err(Error::Parse(format!("unknown trim field `{k}`"))),
        }
    }
    Ok(t)
}

fn dense_lower(matrix: &SymmetricSparseMatrix) -> Mat<f64> {
    let n = matrix.dim();
    let mut a = Mat::<f64>::zeros(n, n);
    for (r, c, v) in matrix.entries() {
        // Stored upper entry (r <= c) goes to the lower triangle at (c, r).
        a[(c, r)] = v;
    }
    a
}

fn check_dim(matrix: &SymmetricSparseMatrix, max_dim: usize) -> Result<()> {
    if matrix.dim() == 0 {
        return Err(Error::EmptyBasis);
    }
    if matrix.dim() > max_dim {
        return Err(Error::Capacity {
            dim: matrix.dim(),
            budget: max_dim,
        });
    }
    Ok(())
}

fn trace_check(matrix: &SymmetricSparseMatrix, values: &[f64]) -> Result<()> {
    let tr = matrix.trace();
    let sum: f64 = values.iter().sum();
    let scale = tr.abs().max(matrix.frobenius_norm()).max(f64::MIN_POSITIVE);
    if (sum - tr).abs() > 1e-10 * scale * (matrix.dim() as f64).sqrt().max(1.0) {
        return Err(Error::NonConvergence(format!(
            "eigenvalue sum {sum} disagrees with trace {tr}"
        )));
    }
    Ok(())
}

/// All eigenvalues, ascending, via dense symmetric tridiagonalization.
pub fn diagonalize(matrix: &SymmetricSparseMatrix) -> Result<Spectrum> {
    diagonalize_with_budget(matrix, DEFAULT_MAX_DENSE_DIM)
}

pub fn diagonalize_with_budget(matrix: &SymmetricSparseMatrix, max_dim: usize) -> Result<Spectrum> {
    check_dim(matrix, max_dim)?;
    let a = dense_lower(matrix);
    let values = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::NonConvergence(format!("{e:?}")))?;
    trace_check(matrix, &values)?;
    Spectrum::new(values, matrix.meta().params.clone())
}

/// Like [`diagonalize`] but also computes eigenvectors and verifies
/// `||H v - E v|| <= 1e-10 ||H||` on `samples` evenly spaced eigenpairs.
/// Returns the spectrum and the worst relative residual seen.
pub fn diagonalize_checked(matrix: &SymmetricSparseMatrix, samples: usize) -> Result<(Spectrum, f64)> {
    check_dim(matrix, DEFAULT_MAX_DENSE_DIM)?;
    let a = dense_lower(matrix);
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::NonConvergence(format!("{e:?}")))?;
    let n = matrix.dim();
    let s = evd.S();
    let u = evd.U();
    let values: Vec<f64> = (0..n).map(|k| s[k]).collect();
    trace_check(matrix, &values)?;
    let norm = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let picks = samples.min(n).max(1);
    let mut worst = 0.0f64;
    for j in 0..picks {
        let k = if picks == 1 { 0 } else { j * (n - 1) / (picks - 1) };
        let v: Vec<f64> = (0..n).map(|i| u[(i, k)]).collect();
        let hv = matrix.mul_vec(&v);
        let res = hv
            .iter()
            .zip(&v)
            .map(|(h, x)| (h - values[k] * x).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(res / norm);
    }
    if worst > 1e-10 {
        return Err(Error::Residual {
            residual: worst,
            tolerance: 1e-10,
        });
    }
    Ok((Spectrum::new(values, matrix.meta().params.clone())?, worst))
}

/// Removes `floor(drop_low_frac N)` levels from the bottom and
/// `floor(drop_high_frac N)` from the top, both fractions of the input
/// length `N`, and records the trim.
pub fn trim_spectrum(spec: &Spectrum, drop_low_frac: f64, drop_high_frac: f64) -> Result<Spectrum> {
    if !(drop_low_frac >= 0.0) || !(drop_high_frac >= 0.0) || !(drop_low_frac + drop_high_frac < 1.0) {
        return Err(invalid(
            "trim",
            format!("need 0 <= fractions and low + high < 1, got {drop_low_frac} + {drop_high_frac}"),
        ));
    }
    let n = spec.len();
    let low = (drop_low_frac * n as f64).floor() as usize;
    let high = (drop_high_frac * n as f64).floor() as usize;
    if low + high >= n {
        return Err(Error::EmptyTrim {
            len: n,
            low: drop_low_frac,
            high: drop_high_frac,
        });
    }
    let mut provenance = spec.provenance.clone();
    provenance.trims.push(TrimRecord {
        drop_low_frac,
        drop_high_frac,
        removed_low: low,
        removed_high: high,
        len_before: n,
    });
    Ok(Spectrum {
        values: spec.values[low..n - high].to_vec(),
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::AssemblyMeta;

    fn sym(dim: usize, t: &[(usize, usize, f64)]) -> SymmetricSparseMatrix {
        SymmetricSparseMatrix::from_triplets(dim, t.iter().copied(), AssemblyMeta::default()).unwrap()
    }

    #[test]
    fn small_examples() {
        let s = diagonalize(&sym(2, &[(0, 1, 1.0)])).unwrap();
        assert!((s.values()[0] + 1.0).abs() < 1e-14 && (s.values()[1] - 1.0).abs() < 1e-14);
        let s = diagonalize(&sym(3, &[(0, 0, 3.0), (1, 1, 1.0), (2, 2, 2.0)])).unwrap();
        assert_eq!(s.values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn residual_check_passes_on_random_matrix() {
        let mut t = Vec::new();
        let mut x = 12345u64;
        for i in 0..60 {
            for j in i..60 {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                if (x >> 60) < 5 {
                    t.push((i, j, ((x >> 11) as f64 / (1u64 << 53) as f64) - 0.5));
                }
            }
        }
        let m = sym(60, &t);
        let (s, worst) = diagonalize_checked(&m, 7).unwrap();
        assert!(worst < 1e-12);
        let plain = diagonalize(&m).unwrap();
        for (a, b) in s.values().iter().zip(plain.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn trim_examples() {
        let s = Spectrum::new((0..100).map(f64::from).collect(), "x").unwrap();
        let t = trim_spectrum(&s, 0.1, 0.5).unwrap();
        assert_eq!(t.len(), 40);
        assert_eq!(t.values()[0], 10.0);
        assert_eq!(*t.values().last().unwrap(), 49.0);
        assert_eq!(t.provenance.trims[0].removed_low, 10);
        assert_eq!(trim_spectrum(&s, 0.0, 0.0).unwrap().values(), s.values());
        let ten = Spectrum::new((0..10).map(f64::from).collect(), "").unwrap();
        assert_eq!(trim_spectrum(&ten, 0.05, 0.0).unwrap().len(), 10);
        assert!(trim_spectrum(&ten, 0.5, 0.6).is_err());
        let two = Spectrum::new(vec![0.0, 1.0], "").unwrap();
        assert_eq!(trim_spectrum(&two, 0.5, 0.49).unwrap().len(), 1);
        assert!(trim_spectrum(&two, 0.5, 0.5).is_err());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let vals = vec![-1.0 / 3.0, 0.1 + 0.2, 1e-300, 2.5e17, std::f64::consts::PI];
        let mut s = Spectrum::new(vals, "model=test a=1").unwrap();
        s = trim_spectrum(&s, 0.2, 0.2).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = Spectrum::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, s);
        for (a, b) in back.values().iter().zip(s.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn capacity_overflow() {
        let m = sym(5, &[(0, 0, 1.0)]);
        assert!(matches!(diagonalize_with_budget(&m, 4), Err(Error::Capacity { .. })));
    }
}
