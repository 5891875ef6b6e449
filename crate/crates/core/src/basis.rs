//! Occupation-number bases for the Tavis-Cummings lattice and the driven
//! impurity.
//!
//! A lattice configuration is an `L`-tuple of [`LocalState`]s, one per site,
//! where each site carries a boson occupation `n` and a spin excitation index
//! `m` in `0..=S` (so `S^z = m - S/2`). The lattice conserves the total
//! excitation number `sum_i (n_i + m_i)` and, with open boundaries, is
//! symmetric under the site reflection `i -> L - 1 - i`. Sectors are labelled
//! by both quantum numbers.
//!
//! Configurations are stored flattened and sorted lexicographically on
//! `(n_1, m_1, ..., n_L, m_L)`, which makes the index map a binary search.

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default upper bound on the number of basis states a builder will enumerate.
pub const DEFAULT_MAX_DIM: usize = 2_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeParams {
    /// Number of lattice sites `L`.
    pub sites: usize,
    /// Number of two-level systems per site `S`; the spin magnitude is `S/2`.
    pub spins: usize,
    /// Spin-boson coupling.
    pub lambda: f64,
    /// Boson hopping amplitude `J`.
    pub hopping: f64,
    pub omega_c: f64,
    pub omega_s: f64,
}

impl LatticeParams {
    /// Resonant lattice with `omega_c = omega_s = 1`.
    pub fn resonant(sites: usize, spins: usize, lambda: f64, hopping: f64) -> Self {
        Self {
            sites,
            spins,
            lambda,
            hopping,
            omega_c: 1.0,
            omega_s: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites == 0 {
            return Err(invalid("sites", "must be at least 1"));
        }
        if self.spins == 0 {
            return Err(invalid("spins", "must be at least 1"));
        }
        if !(self.hopping >= 0.0) || !self.hopping.is_finite() {
            return Err(invalid("hopping", format!("must be finite and >= 0, got {}", self.hopping)));
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("omega_c", self.omega_c),
            ("omega_s", self.omega_s),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, format!("must be finite, got {v}")));
            }
        }
        Ok(())
    }

    pub fn is_resonant(&self) -> bool {
        self.omega_c == self.omega_s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpurityParams {
    pub spins: usize,
    pub lambda: f64,
    /// Drive amplitude, normalized to be non-negative.
    pub mu: f64,
    pub omega_c: f64,
    pub omega_s: f64,
    /// Bosons are truncated to occupations `0..n_cutoff`.
    pub n_cutoff: usize,
}

impl ImpurityParams {
    /// Resonant impurity with `omega_c = omega_s = 1`. A negative drive is
    /// folded onto `|mu|`: the map `a -> -a, S^± -> -S^±` is unitary and
    /// flips only the sign of the drive term.
    pub fn resonant(spins: usize, lambda: f64, mu: f64, n_cutoff: usize) -> Self {
        Self {
            spins,
            lambda,
            mu: mu.abs(),
            omega_c: 1.0,
            omega_s: 1.0,
            n_cutoff,
        }
    }

    /// Returns a copy with the drive sign folded away.
    pub fn normalized(mut self) -> Self {
        self.mu = self.mu.abs();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.spins == 0 {
            return Err(invalid("spins", "must be at least 1"));
        }
        if self.n_cutoff == 0 {
            return Err(invalid("n_cutoff", "must be at least 1"));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(invalid("mu", format!("must be finite and >= 0, got {}", self.mu)));
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("omega_c", self.omega_c),
            ("omega_s", self.omega_s),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, format!("must be finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// Single-site occupation: `n` bosons and spin index `m` (`S^z = m - S/2`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct LocalState {
    pub n: u32,
    pub m: u32,
}

impl LocalState {
    pub const fn new(n: u32, m: u32) -> Self {
        Self { n, m }
    }

    pub const fn excitations(&self) -> u32 {
        self.n + self.m
    }
}

/// Reflection sector tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Symmetric,
    Antisymmetric,
    /// No reflection projection.
    #[serde(rename = "none")]
    Full,
}

impl Parity {
    /// Sign picked up by the reflected partner of a configuration.
    pub fn sign(self) -> f64 {
        match self {
            Parity::Antisymmetric => -1.0,
            _ => 1.0,
        }
    }
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Parity::Symmetric => "symmetric",
            Parity::Antisymmetric => "antisymmetric",
            Parity::Full => "none",
        })
    }
}

impl FromStr for Parity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "symmetric" | "sym" | "even" | "+" => Ok(Parity::Symmetric),
            "antisymmetric" | "anti" | "odd" | "-" => Ok(Parity::Antisymmetric),
            "none" | "full" => Ok(Parity::Full),
            other => Err(invalid("parity", format!("unknown parity `{other}`"))),
        }
    }
}

/// What a [`SectorBasis`] was built from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BasisKind {
    Lattice {
        params: LatticeParams,
        n_ex: u32,
        parity: Parity,
    },
    Impurity {
        params: ImpurityParams,
    },
}

/// Enumerated basis of one Hilbert-space sector.
///
/// Immutable once built; `Send + Sync`.
#[derive(Clone, Debug)]
pub struct SectorBasis {
    kind: BasisKind,
    sites: usize,
    /// Flattened configurations, `sites` entries per state.
    states: Vec<LocalState>,
    weights: Vec<f64>,
}

impl SectorBasis {
    pub fn kind(&self) -> &BasisKind {
        &self.kind
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn spins(&self) -> usize {
        match &self.kind {
            BasisKind::Lattice { params, .. } => params.spins,
            BasisKind::Impurity { params } => params.spins,
        }
    }

    pub fn parity(&self) -> Parity {
        match &self.kind {
            BasisKind::Lattice { parity, .. } => *parity,
            BasisKind::Impurity { .. } => Parity::Full,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Configuration of state `k`.
    pub fn state(&self, k: usize) -> &[LocalState] {
        &self.states[k * self.sites..(k + 1) * self.sites]
    }

    pub fn states(&self) -> impl ExactSizeIterator<Item = &[LocalState]> + '_ {
        self.states.chunks_exact(self.sites.max(1))
    }

    /// Symmetrization weight: `1/sqrt(2)` when the reflected configuration
    /// differs, `1` for palindromes (and for every state without projection).
    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Position of a stored configuration, if present.
    pub fn index_of(&self, config: &[LocalState]) -> Option<usize> {
        if config.len() != self.sites {
            return None;
        }
        let (mut lo, mut hi) = (0usize, self.dim());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.state(mid).cmp(config) {
                Ordering::Less => lo = mid + 1,
                Ordering::Greater => hi = mid,
                Ordering::Equal => return Some(mid),
            }
        }
        None
    }

    /// Locates the sector state containing `config`: returns its index and
    /// the sign of `config` inside the symmetrized state. `None` when the
    /// configuration has no component in this sector (wrong excitation
    /// number, or a palindrome in the antisymmetric sector).
    pub fn locate(&self, config: &[LocalState]) -> Option<(usize, f64)> {
        match self.parity() {
            Parity::Full => self.index_of(config).map(|k| (k, 1.0)),
            parity => {
                let reflected: Vec<LocalState> = config.iter().rev().copied().collect();
                match config.cmp(reflected.as_slice()) {
                    Ordering::Less => self.index_of(config).map(|k| (k, 1.0)),
                    Ordering::Greater => self.index_of(&reflected).map(|k| (k, parity.sign())),
                    Ordering::Equal => {
                        if parity == Parity::Antisymmetric {
                            None
                        } else {
                            self.index_of(config).map(|k| (k, 1.0))
                        }
                    }
                }
            }
        }
    }

    /// Total excitation number `sum_i (n_i + m_i)` of state `k`.
    pub fn excitations(&self, k: usize) -> u32 {
        self.state(k).iter().map(LocalState::excitations).sum()
    }

    /// Order-sensitive FNV-1a checksum over the stored configurations.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |x: u32| {
            for b in x.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        feed(self.sites as u32);
        for s in &self.states {
            feed(s.n);
            feed(s.m);
        }
        h
    }

    /// Writes the basis as CSV: `n_1,m_1,...,n_L,m_L,weight,index`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (1..=self.sites)
            .flat_map(|i| [format!("n_{i}"), format!("m_{i}")])
            .chain(["weight".to_string(), "index".to_string()])
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (k, config) in self.states().enumerate() {
            for s in config {
                write!(out, "{},{},", s.n, s.m)?;
            }
            writeln!(out, "{:.16e},{}", self.weights[k], k)?;
        }
        Ok(())
    }
}

/// Number of local states with exactly `k` excitations: `min(S, k) + 1`.
fn local_count(spins: usize, k: usize) -> u128 {
    (spins.min(k) + 1) as u128
}

/// Coefficients `0..=n_ex` of `prod` of `factors` copies of a generating
/// series `g(x^stride)`.
fn series_power(spins: usize, n_ex: usize, factors: usize, stride: usize) -> Vec<u128> {
    let mut acc = vec![0u128; n_ex + 1];
    acc[0] = 1;
    for _ in 0..factors {
        let mut next = vec![0u128; n_ex + 1];
        for (e, &a) in acc.iter().enumerate() {
            if a == 0 {
                continue;
            }
            let mut k = 0;
            while e + k * stride <= n_ex {
                next[e + k * stride] += a * local_count(spins, k);
                k += 1;
            }
        }
        acc = next;
    }
    acc
}

/// Dimension of the `(n_ex, parity)` sector, counted with generating
/// functions rather than enumeration.
///
/// Reflection orbits have size 1 (palindromes) or 2, so with `F` the full
/// count and `P` the palindrome count, the symmetric sector has `(F + P)/2`
/// states and the antisymmetric one `(F - P)/2`.
pub fn sector_dimension(params: &LatticeParams, n_ex: u32, parity: Parity) -> u128 {
    let n_ex = n_ex as usize;
    let sites = params.sites;
    if sites == 0 || params.spins == 0 {
        return 0;
    }
    let full = series_power(params.spins, n_ex, sites, 1)[n_ex];
    if parity == Parity::Full {
        return full;
    }
    // Palindromes: sites i and L-1-i are locked together, the middle site
    // (odd L) is free.
    let pairs = series_power(params.spins, n_ex, sites / 2, 2);
    let pal = if sites % 2 == 1 {
        let single: Vec<u128> = (0..=n_ex).map(|k| local_count(params.spins, k)).collect();
        (0..=n_ex).map(|k| pairs[k] * single[n_ex - k]).sum()
    } else {
        pairs[n_ex]
    };
    match parity {
        Parity::Symmetric => (full + pal) / 2,
        Parity::Antisymmetric => (full - pal) / 2,
        Parity::Full => unreachable!(),
    }
}

/// Enumerates the `(n_ex, parity)` sector with the default size budget.
pub fn build_sector_basis(params: &LatticeParams, n_ex: u32, parity: Parity) -> Result<SectorBasis> {
    build_sector_basis_with_budget(params, n_ex, parity, DEFAULT_MAX_DIM)
}

pub fn build_sector_basis_with_budget(
    params: &LatticeParams,
    n_ex: u32,
    parity: Parity,
    max_dim: usize,
) -> Result<SectorBasis> {
    params.validate()?;
    let expected = sector_dimension(params, n_ex, parity);
    if expected > max_dim as u128 {
        return Err(Error::Capacity {
            dim: usize::try_from(expected).unwrap_or(usize::MAX),
            budget: max_dim,
        });
    }
    let sites = params.sites;
    let spins = params.spins as u32;
    let mut states = Vec::with_capacity(expected as usize * sites);
    let mut weights = Vec::with_capacity(expected as usize);
    let mut config = vec![LocalState::default(); sites];
    let mut reflected = vec![LocalState::default(); sites];

    // Depth-first enumeration in lexicographic order of (n_1, m_1, ...).
    fn visit(
        site: usize,
        remaining: u32,
        spins: u32,
        config: &mut [LocalState],
        emit: &mut dyn FnMut(&[LocalState]),
    ) {
        let last = site + 1 == config.len();
        if last {
            let n_min = remaining.saturating_sub(spins);
            for n in n_min..=remaining {
                config[site] = LocalState::new(n, remaining - n);
                emit(config);
            }
            return;
        }
        for n in 0..=remaining {
            for m in 0..=spins.min(remaining - n) {
                config[site] = LocalState::new(n, m);
                visit(site + 1, remaining - n - m, spins, config, emit);
            }
        }
    }

    let mut emit = |c: &[LocalState]| {
        if parity == Parity::Full {
            states.extend_from_slice(c);
            weights.push(1.0);
            return;
        }
        for (r, s) in reflected.iter_mut().zip(c.iter().rev()) {
            *r = *s;
        }
        match c.cmp(reflected.as_slice()) {
            Ordering::Less => {
                states.extend_from_slice(c);
                weights.push(std::f64::consts::FRAC_1_SQRT_2);
            }
            Ordering::Equal if parity == Parity::Symmetric => {
                states.extend_from_slice(c);
                weights.push(1.0);
            }
            _ => {}
        }
    };
    visit(0, n_ex, spins, &mut config, &mut emit);

    debug_assert_eq!(weights.len() as u128, expected);
    Ok(SectorBasis {
        kind: BasisKind::Lattice {
            params: *params,
            n_ex,
            parity,
        },
        sites,
        states,
        weights,
    })
}

/// Truncated product basis `{(n, m) : n < n_cutoff, m <= S}` of the impurity,
/// ordered lexicographically so that state `(n, m)` sits at `n (S + 1) + m`.
///
/// The drive breaks the U(1) symmetry, so no sector projection is applied.
pub fn build_impurity_basis(params: &ImpurityParams) -> Result<SectorBasis> {
    build_impurity_basis_with_budget(params, DEFAULT_MAX_DIM)
}

pub fn build_impurity_basis_with_budget(params: &ImpurityParams, max_dim: usize) -> Result<SectorBasis> {
    params.validate()?;
    let levels = params.spins + 1;
    let dim = params.n_cutoff.saturating_mul(levels);
    if dim > max_dim {
        return Err(Error::Capacity { dim, budget: max_dim });
    }
    let states: Vec<LocalState> = (0..params.n_cutoff as u32)
        .flat_map(|n| (0..levels as u32).map(move |m| LocalState::new(n, m)))
        .collect();
    Ok(SectorBasis {
        kind: BasisKind::Impurity {
            params: params.normalized(),
        },
        sites: 1,
        states,
        weights: vec![1.0; dim],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute force over every tuple with occupations bounded by `n_ex`.
    fn brute_counts(sites: usize, spins: u32, n_ex: u32) -> (u128, u128, u128) {
        let local: Vec<LocalState> = (0..=n_ex)
            .flat_map(|n| (0..=spins).map(move |m| LocalState::new(n, m)))
            .collect();
        let mut full = 0u128;
        let mut pal = 0u128;
        let mut idx = vec![0usize; sites];
        loop {
            let config: Vec<LocalState> = idx.iter().map(|&i| local[i]).collect();
            if config.iter().map(LocalState::excitations).sum::<u32>() == n_ex {
                full += 1;
                if config.iter().eq(config.iter().rev()) {
                    pal += 1;
                }
            }
            let mut d = 0;
            loop {
                if d == sites {
                    return (full, (full + pal) / 2, (full - pal) / 2);
                }
                idx[d] += 1;
                if idx[d] < local.len() {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
    }

    fn ls(pairs: &[(u32, u32)]) -> Vec<LocalState> {
        pairs.iter().map(|&(n, m)| LocalState::new(n, m)).collect()
    }

    #[test]
    fn dimension_examples() {
        assert_eq!(sector_dimension(&LatticeParams::resonant(1, 4, 1.0, 0.0), 0, Parity::Full), 1);
        assert_eq!(sector_dimension(&LatticeParams::resonant(1, 2, 1.0, 0.0), 2, Parity::Full), 3);
    }

    #[test]
    fn dimension_matches_brute_force_small() {
        for sites in 1..=3 {
            for spins in 1..=3u32 {
                for n_ex in 0..=5 {
                    let p = LatticeParams::resonant(sites, spins as usize, 1.0, 0.0);
                    let (f, s, a) = brute_counts(sites, spins, n_ex);
                    assert_eq!(sector_dimension(&p, n_ex, Parity::Full), f);
                    assert_eq!(sector_dimension(&p, n_ex, Parity::Symmetric), s);
                    assert_eq!(sector_dimension(&p, n_ex, Parity::Antisymmetric), a);
                }
            }
        }
    }

    #[test]
    fn full_scale_symmetric_sector() {
        // L=3, S=8, N_ex=36: counted by enumerating the orbit representatives.
        let p = LatticeParams::resonant(3, 8, 1.0, 0.0);
        let basis = build_sector_basis(&p, 36, Parity::Symmetric).unwrap();
        assert_eq!(basis.dim() as u128, sector_dimension(&p, 36, Parity::Symmetric));
        assert_eq!(basis.dim(), 122_625);
        assert_eq!(sector_dimension(&p, 36, Parity::Full), 244_215);
    }

    #[test]
    fn single_site_order_and_weights() {
        let p = LatticeParams::resonant(1, 2, 1.0, 0.0);
        let b = build_sector_basis(&p, 1, Parity::Full).unwrap();
        assert_eq!(b.dim(), 2);
        assert_eq!(b.state(0), ls(&[(0, 1)]).as_slice());
        assert_eq!(b.state(1), ls(&[(1, 0)]).as_slice());
    }

    #[test]
    fn two_site_symmetric_sector() {
        let p = LatticeParams::resonant(2, 1, 1.0, 0.0);
        let b = build_sector_basis(&p, 1, Parity::Symmetric).unwrap();
        assert_eq!(b.dim(), 2);
        // Orbits {(0,0)(0,1), (0,1)(0,0)} and {(0,0)(1,0), (1,0)(0,0)}.
        assert_eq!(b.state(0), ls(&[(0, 0), (0, 1)]).as_slice());
        assert_eq!(b.state(1), ls(&[(0, 0), (1, 0)]).as_slice());
        assert!(b.weights().iter().all(|&w| (w - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15));
        let (k, sign) = b.locate(&ls(&[(1, 0), (0, 0)])).unwrap();
        assert_eq!((k, sign), (1, 1.0));
        let anti = build_sector_basis(&p, 1, Parity::Antisymmetric).unwrap();
        assert_eq!(anti.locate(&ls(&[(1, 0), (0, 0)])), Some((1, -1.0)));
    }

    #[test]
    fn vacuum_has_no_antisymmetric_partner() {
        let p = LatticeParams::resonant(2, 1, 1.0, 0.0);
        let b = build_sector_basis(&p, 0, Parity::Antisymmetric).unwrap();
        assert_eq!(b.dim(), 0);
        assert!(b.is_empty());
        let s = build_sector_basis(&p, 0, Parity::Symmetric).unwrap();
        assert_eq!(s.dim(), 1);
        assert_eq!(s.weight(0), 1.0);
    }

    #[test]
    fn palindromes_only_in_symmetric_sector() {
        let p = LatticeParams::resonant(3, 2, 1.0, 0.0);
        let s = build_sector_basis(&p, 4, Parity::Symmetric).unwrap();
        let a = build_sector_basis(&p, 4, Parity::Antisymmetric).unwrap();
        let is_pal = |c: &[LocalState]| c.iter().eq(c.iter().rev());
        assert!(a.states().all(|c| !is_pal(c)));
        for (k, c) in s.states().enumerate() {
            let expected = if is_pal(c) { 1.0 } else { std::f64::consts::FRAC_1_SQRT_2 };
            assert_eq!(s.weight(k), expected);
            let r: Vec<_> = c.iter().rev().copied().collect();
            assert!(c <= r.as_slice(), "representative must be the lexicographic minimum");
        }
    }

    #[test]
    fn capacity_budget_is_enforced() {
        let p = LatticeParams::resonant(3, 4, 1.0, 0.1);
        let err = build_sector_basis_with_budget(&p, 13, Parity::Symmetric, 100).unwrap_err();
        assert!(matches!(err, Error::Capacity { dim: 2490, budget: 100 }));
        let imp = ImpurityParams::resonant(64, 1.0, 0.1, 1024);
        assert!(build_impurity_basis_with_budget(&imp, 1000).is_err());
    }

    #[test]
    fn impurity_basis_layout() {
        let b = build_impurity_basis(&ImpurityParams::resonant(1, 1.0, 0.0, 2)).unwrap();
        assert_eq!(b.dim(), 4);
        let b = build_impurity_basis(&ImpurityParams::resonant(2, 1.0, 0.3, 3)).unwrap();
        let listed: Vec<(u32, u32)> = b.states().map(|c| (c[0].n, c[0].m)).collect();
        let expected: Vec<(u32, u32)> = (0..3).flat_map(|n| (0..3).map(move |m| (n, m))).collect();
        assert_eq!(listed, expected);
        let big = build_impurity_basis(&ImpurityParams::resonant(64, 1.0, 0.1, 1024)).unwrap();
        assert_eq!(big.dim(), 66_560);
    }

    #[test]
    fn negative_drive_is_folded() {
        let p = ImpurityParams::resonant(4, 1.0, -0.7, 8);
        assert_eq!(p.mu, 0.7);
        let raw = ImpurityParams { mu: -0.2, ..p };
        assert!(raw.validate().is_err());
        assert_eq!(raw.normalized().mu, 0.2);
    }

    #[test]
    fn parity_parsing() {
        assert_eq!("symmetric".parse::<Parity>().unwrap(), Parity::Symmetric);
        assert_eq!("none".parse::<Parity>().unwrap(), Parity::Full);
        assert!("sideways".parse::<Parity>().is_err());
        assert_eq!(Parity::Full.to_string(), "none");
    }

    #[test]
    fn csv_dump_has_one_row_per_state() {
        let p = LatticeParams::resonant(2, 1, 1.0, 0.0);
        let b = build_sector_basis(&p, 2, Parity::Symmetric).unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "n_1,m_1,n_2,m_2,weight,index");
        assert_eq!(lines.count(), b.dim());
    }
}
