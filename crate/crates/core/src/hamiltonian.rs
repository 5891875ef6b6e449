//! Real symmetric sparse assembly of the lattice and impurity Hamiltonians.
//!
//! Lattice, per site `i` plus nearest-neighbour hopping (open chain):
//!
//! ```text
//! h_i    = w_c a_i^† a_i + w_s S_i^z + (lambda / sqrt S) (a_i^† S_i^- + a_i S_i^+)
//! h_ij   = -(J / 2) (a_i^† a_j + a_j^† a_i)
//! ```
//!
//! Impurity: a single `h` plus the coherent drive `-mu sqrt(S) (a + a^†)`,
//! with the boson ladder hard-truncated at `n_cutoff - 1`.

use std::io::Write;

use crate::basis::{BasisKind, ImpurityParams, LatticeParams, LocalState, Parity, SectorBasis};
use crate::error::{Error, Result};
use crate::par;

/// Upper-triangle coordinate storage of a real symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymmetricSparseMatrix {
    dim: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
    meta: AssemblyMeta,
}

/// Snapshot of what a matrix was assembled from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AssemblyMeta {
    /// Human-readable parameter snapshot, `key=value` pairs.
    pub params: String,
    pub basis_checksum: u64,
}

impl SymmetricSparseMatrix {
    /// Builds from upper-triangle triplets. Duplicates are summed, lower
    /// triangle entries are reflected, exact zeros dropped.
    pub fn from_triplets(
        dim: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
        meta: AssemblyMeta,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triplets
            .into_iter()
            .map(|(r, c, v)| if r <= c { (r, c, v) } else { (c, r, v) })
            .collect();
        for &(r, c, v) in &entries {
            if r >= dim || c >= dim {
                return Err(Error::BasisMismatch(format!("entry ({r}, {c}) outside dimension {dim}")));
            }
            if !v.is_finite() {
                return Err(Error::BasisMismatch(format!("non-finite entry at ({r}, {c})")));
            }
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut m = Self {
            dim,
            rows: Vec::with_capacity(entries.len()),
            cols: Vec::with_capacity(entries.len()),
            values: Vec::with_capacity(entries.len()),
            meta,
        };
        for (r, c, v) in entries {
            if m.rows.last() == Some(&r) && m.cols.last() == Some(&c) {
                *m.values.last_mut().unwrap() += v;
            } else {
                m.rows.push(r);
                m.cols.push(c);
                m.values.push(v);
            }
        }
        m.drop_zeros();
        Ok(m)
    }

    fn drop_zeros(&mut self) {
        let keep: Vec<bool> = self.values.iter().map(|&v| v != 0.0).collect();
        let mut k = 0;
        self.rows.retain(|_| {
            k += 1;
            keep[k - 1]
        });
        k = 0;
        self.cols.retain(|_| {
            k += 1;
            keep[k - 1]
        });
        self.values.retain(|&v| v != 0.0);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored upper-triangle entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn meta(&self) -> &AssemblyMeta {
        &self.meta
    }

    /// Stored `(row, col, value)` with `row <= col`, sorted.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .zip(&self.cols)
            .zip(&self.values)
            .map(|((&r, &c), &v)| (r, c, v))
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let (r, c) = if row <= col { (row, col) } else { (col, row) };
        let lo = self.rows.partition_point(|&x| x < r);
        let hi = self.rows.partition_point(|&x| x <= r);
        match self.cols[lo..hi].binary_search(&c) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn trace(&self) -> f64 {
        self.entries().filter(|(r, c, _)| r == c).map(|(_, _, v)| v).sum()
    }

    /// Frobenius norm of the full (both triangles) matrix.
    pub fn frobenius_norm(&self) -> f64 {
        self.entries()
            .map(|(r, c, v)| if r == c { v * v } else { 2.0 * v * v })
            .sum::<f64>()
            .sqrt()
    }

    /// `y = A x` using both triangles.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        let mut y = vec![0.0; self.dim];
        for (r, c, v) in self.entries() {
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
        y
    }

    /// Dense copy with both triangles filled, row-major.
    pub fn to_dense_rows(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.dim]; self.dim];
        for (r, c, v) in self.entries() {
            a[r][c] = v;
            a[c][r] = v;
        }
        a
    }

    /// Largest `|A_ij (d_j - d_i)|`, i.e. the max-norm of `[A, diag(d)]`.
    pub fn commutator_with_diagonal(&self, diag: &[f64]) -> f64 {
        self.entries()
            .map(|(r, c, v)| (v * (diag[c] - diag[r])).abs())
            .fold(0.0, f64::max)
    }

    /// Writes `row col value` lines (0-based) after a `#` header carrying the
    /// parameter snapshot.
    pub fn write_coo<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# {}", self.meta.params)?;
        writeln!(out, "# dim={} nnz={} basis_checksum={:016x}", self.dim, self.nnz(), self.meta.basis_checksum)?;
        for (r, c, v) in self.entries() {
            writeln!(out, "{r} {c} {v:.16e}")?;
        }
        Ok(())
    }
}

/// Matrix element of `S^+` (raise) or `S^-` (lower) from spin index `m`:
/// `sqrt(s(s+1) - m_z(m_z ± 1))` with `s = S/2`, `m_z = m - S/2`. Zero when the
/// target index leaves `0..=S`.
pub fn spin_ladder_amplitude(spins: usize, m: u32, raise: bool) -> f64 {
    let m = m as i64;
    let top = spins as i64;
    let target = if raise { m + 1 } else { m - 1 };
    if m < 0 || m > top || target < 0 || target > top {
        return 0.0;
    }
    // s(s+1) - mz(mz ± 1) = (s ∓ mz)(s ± mz + 1); with 2s = S and
    // 2mz = 2m - S this is an integer-valued expression in halves.
    let two_s = top;
    let two_mz = 2 * m - top;
    let val = if raise {
        (two_s - two_mz) * (two_s + two_mz + 2)
    } else {
        (two_s + two_mz) * (two_s - two_mz + 2)
    };
    (val as f64 / 4.0).sqrt()
}

/// Local single-site terms shared by both models.
#[derive(Clone, Copy)]
struct SiteTerms {
    spins: usize,
    omega_c: f64,
    omega_s: f64,
    coupling: f64,
}

impl SiteTerms {
    fn diagonal(&self, s: LocalState) -> f64 {
        self.omega_c * s.n as f64 + self.omega_s * (s.m as f64 - self.spins as f64 / 2.0)
    }

    /// Off-diagonal `(lambda/sqrt S)(a^† S^- + a S^+)` moves from `s`:
    /// `(target, amplitude)`.
    fn exchange(&self, s: LocalState, n_limit: Option<u32>, mut f: impl FnMut(LocalState, f64)) {
        if self.coupling == 0.0 {
            return;
        }
        let g = self.coupling / (self.spins as f64).sqrt();
        if s.m > 0 && n_limit.is_none_or(|lim| s.n + 1 < lim) {
            let amp = g * ((s.n + 1) as f64).sqrt() * spin_ladder_amplitude(self.spins, s.m, false);
            f(LocalState::new(s.n + 1, s.m - 1), amp);
        }
        if s.n > 0 && (s.m as usize) < self.spins {
            let amp = g * (s.n as f64).sqrt() * spin_ladder_amplitude(self.spins, s.m, true);
            f(LocalState::new(s.n - 1, s.m + 1), amp);
        }
    }
}

fn lattice_terms(p: &LatticeParams) -> SiteTerms {
    SiteTerms {
        spins: p.spins,
        omega_c: p.omega_c,
        omega_s: p.omega_s,
        coupling: p.lambda,
    }
}

fn impurity_terms(p: &ImpurityParams) -> SiteTerms {
    SiteTerms {
        spins: p.spins,
        omega_c: p.omega_c,
        omega_s: p.omega_s,
        coupling: p.lambda,
    }
}

/// Amplitude normalization of a sector state, `|c>_± = N_c (|c> ± |Rc>)`.
fn sector_norm(basis: &SectorBasis, k: usize) -> f64 {
    match basis.parity() {
        Parity::Full => 1.0,
        _ if basis.weight(k) == 1.0 => 0.5,
        _ => std::f64::consts::FRAC_1_SQRT_2,
    }
}

/// Assembles the matrix column by column: `act(config, emit)` must emit the
/// action of `H` on the bare configuration as `(config', amplitude)` pairs.
/// In a reflection sector the element between representatives `d` and `c` is
/// `sum_{c' in orbit(d)} sign(c') <c'|H|c> N_c / N_d`.
fn assemble<F>(basis: &SectorBasis, meta: AssemblyMeta, act: F) -> Result<SymmetricSparseMatrix>
where
    F: Fn(&[LocalState], &mut dyn FnMut(&[LocalState], f64)) + Sync + Send,
{
    if basis.is_empty() {
        return Err(Error::EmptyBasis);
    }
    let columns = par::map_range(basis.dim(), |col| {
        let mut out: Vec<(usize, f64)> = Vec::new();
        let norm_c = sector_norm(basis, col);
        act(basis.state(col), &mut |target, amp| {
            if let Some((row, sign)) = basis.locate(target) {
                if row <= col {
                    out.push((row, sign * amp * norm_c / sector_norm(basis, row)));
                }
            }
        });
        out.sort_unstable_by_key(|e| e.0);
        out
    });
    let triplets = columns
        .into_iter()
        .enumerate()
        .flat_map(|(col, entries)| entries.into_iter().map(move |(row, v)| (row, col, v)));
    SymmetricSparseMatrix::from_triplets(basis.dim(), triplets, meta)
}

/// Lattice Hamiltonian over a lattice sector basis, using the parameters the
/// basis was built with.
pub fn assemble_lattice_hamiltonian(basis: &SectorBasis) -> Result<SymmetricSparseMatrix> {
    match basis.kind() {
        BasisKind::Lattice { params, .. } => assemble_lattice_hamiltonian_with(basis, params),
        BasisKind::Impurity { .. } => Err(Error::BasisMismatch("impurity basis passed to the lattice assembler".into())),
    }
}

/// Lattice Hamiltonian with couplings taken from `params`; the basis only
/// fixes the sector. Lets sweeps reuse one enumeration across `J` and
/// `lambda`. Errors if `params` disagree with the basis shape.
pub fn assemble_lattice_hamiltonian_with(basis: &SectorBasis, params: &LatticeParams) -> Result<SymmetricSparseMatrix> {
    params.validate()?;
    let BasisKind::Lattice { params: built, n_ex, parity } = basis.kind() else {
        return Err(Error::BasisMismatch("impurity basis passed to the lattice assembler".into()));
    };
    if built.sites != params.sites || built.spins != params.spins {
        return Err(Error::BasisMismatch(format!(
            "basis has L={}, S={} but parameters have L={}, S={}",
            built.sites, built.spins, params.sites, params.spins
        )));
    }
    let terms = lattice_terms(params);
    let half_j = params.hopping / 2.0;
    let meta = AssemblyMeta {
        params: format!(
            "model=lattice sites={} spins={} lambda={} hopping={} omega_c={} omega_s={} n_ex={} parity={}",
            params.sites, params.spins, params.lambda, params.hopping, params.omega_c, params.omega_s, n_ex, parity
        ),
        basis_checksum: basis.checksum(),
    };
    assemble(basis, meta, move |config, emit| {
        let diag: f64 = config.iter().map(|&s| terms.diagonal(s)).sum();
        emit(config, diag);
        let mut scratch = config.to_vec();
        for (i, &site) in config.iter().enumerate() {
            terms.exchange(site, None, |target, amp| {
                scratch[i] = target;
                emit(&scratch, amp);
                scratch[i] = site;
            });
        }
        if half_j != 0.0 {
            for i in 0..config.len().saturating_sub(1) {
                for (to, from) in [(i, i + 1), (i + 1, i)] {
                    let (a, b) = (config[to], config[from]);
                    if b.n == 0 {
                        continue;
                    }
                    let amp = -half_j * (b.n as f64).sqrt() * ((a.n + 1) as f64).sqrt();
                    scratch[to].n += 1;
                    scratch[from].n -= 1;
                    emit(&scratch, amp);
                    scratch[to] = a;
                    scratch[from] = b;
                }
            }
        }
    })
}

/// Driven impurity Hamiltonian over the truncated product basis.
pub fn assemble_impurity_hamiltonian(basis: &SectorBasis) -> Result<SymmetricSparseMatrix> {
    match basis.kind() {
        BasisKind::Impurity { params } => assemble_impurity_hamiltonian_with(basis, params),
        BasisKind::Lattice { .. } => Err(Error::BasisMismatch("lattice basis passed to the impurity assembler".into())),
    }
}

/// Impurity Hamiltonian with couplings from `params`; `spins` and
/// `n_cutoff` must match the basis.
pub fn assemble_impurity_hamiltonian_with(basis: &SectorBasis, params: &ImpurityParams) -> Result<SymmetricSparseMatrix> {
    let params = params.normalized();
    params.validate()?;
    let BasisKind::Impurity { params: built } = basis.kind() else {
        return Err(Error::BasisMismatch("lattice basis passed to the impurity assembler".into()));
    };
    if built.spins != params.spins || built.n_cutoff != params.n_cutoff {
        return Err(Error::BasisMismatch(format!(
            "basis has S={}, n_cutoff={} but parameters have S={}, n_cutoff={}",
            built.spins, built.n_cutoff, params.spins, params.n_cutoff
        )));
    }
    let terms = impurity_terms(&params);
    let limit = params.n_cutoff as u32;
    let drive = -params.mu * (params.spins as f64).sqrt();
    let meta = AssemblyMeta {
        params: format!(
            "model=impurity spins={} lambda={} mu={} omega_c={} omega_s={} n_cutoff={}",
            params.spins, params.lambda, params.mu, params.omega_c, params.omega_s, params.n_cutoff
        ),
        basis_checksum: basis.checksum(),
    };
    assemble(basis, meta, move |config, emit| {
        let s = config[0];
        emit(config, terms.diagonal(s));
        terms.exchange(s, Some(limit), |t, amp| emit(&[t], amp));
        if drive != 0.0 {
            if s.n + 1 < limit {
                emit(&[LocalState::new(s.n + 1, s.m)], drive * ((s.n + 1) as f64).sqrt());
            }
            if s.n > 0 {
                emit(&[LocalState::new(s.n - 1, s.m)], drive * (s.n as f64).sqrt());
            }
        }
    })
}

/// Diagonal matrix of total excitation counts `sum_i (n_i + m_i)`.
pub fn number_operator(basis: &SectorBasis) -> SymmetricSparseMatrix {
    let triplets = (0..basis.dim()).map(|k| (k, k, basis.excitations(k) as f64));
    let meta = AssemblyMeta {
        params: "operator=number".into(),
        basis_checksum: basis.checksum(),
    };
    SymmetricSparseMatrix::from_triplets(basis.dim(), triplets, meta).expect("diagonal entries are in range")
}
