//! Independent dense oracles shared by the integration tests.
//!
//! The Hamiltonians here are built from Kronecker products of local
//! operator matrices on the untruncated-in-sector product space and
//! diagonalized with cyclic Jacobi rotations, so they share no code with the
//! sector assembler or the library eigensolver.

#![allow(dead_code)]

pub type Dense = Vec<Vec<f64>>;

pub fn zeros(n: usize) -> Dense {
    vec![vec![0.0; n]; n]
}

pub fn identity(n: usize) -> Dense {
    let mut m = zeros(n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn kron(a: &Dense, b: &Dense) -> Dense {
    let (na, nb) = (a.len(), b.len());
    let mut out = zeros(na * nb);
    for i in 0..na {
        for j in 0..na {
            if a[i][j] == 0.0 {
                continue;
            }
            for k in 0..nb {
                for l in 0..nb {
                    out[i * nb + k][j * nb + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

pub fn add_scaled(acc: &mut Dense, m: &Dense, c: f64) {
    for (ra, rm) in acc.iter_mut().zip(m) {
        for (x, y) in ra.iter_mut().zip(rm) {
            *x += c * y;
        }
    }
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    let mut out = zeros(n);
    for i in 0..n {
        for k in 0..n {
            if a[i][k] == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn transpose(a: &Dense) -> Dense {
    let n = a.len();
    (0..n).map(|i| (0..n).map(|j| a[j][i]).collect()).collect()
}

/// Truncated annihilation operator on occupations `0..levels`.
pub fn boson_lower(levels: usize) -> Dense {
    let mut a = zeros(levels);
    for n in 1..levels {
        a[n - 1][n] = (n as f64).sqrt();
    }
    a
}

/// `S^+` for spin `S/2` in the basis `m = 0..=S`, `S^z = m - S/2`.
pub fn spin_raise(spins: usize) -> Dense {
    let s = spins as f64 / 2.0;
    let mut sp = zeros(spins + 1);
    for m in 0..spins {
        let mz = m as f64 - s;
        sp[m + 1][m] = (s * (s + 1.0) - mz * (mz + 1.0)).sqrt();
    }
    sp
}

pub fn spin_z(spins: usize) -> Dense {
    let mut z = zeros(spins + 1);
    for (m, row) in z.iter_mut().enumerate() {
        row[m] = m as f64 - spins as f64 / 2.0;
    }
    z
}

/// Single-site `w_c a†a + w_s S^z + (λ/√S)(a† S^- + a S^+)` on `levels`
/// boson levels, as a matrix over `(n, m)` with `m` fastest.
pub fn site_hamiltonian(levels: usize, spins: usize, omega_c: f64, omega_s: f64, lambda: f64) -> Dense {
    let a = boson_lower(levels);
    let ad = transpose(&a);
    let sp = spin_raise(spins);
    let sm = transpose(&sp);
    let (ib, is) = (identity(levels), identity(spins + 1));
    let mut h = zeros(levels * (spins + 1));
    add_scaled(&mut h, &kron(&matmul(&ad, &a), &is), omega_c);
    add_scaled(&mut h, &kron(&ib, &spin_z(spins)), omega_s);
    let g = lambda / (spins as f64).sqrt();
    add_scaled(&mut h, &kron(&ad, &sm), g);
    add_scaled(&mut h, &kron(&a, &sp), g);
    h
}

/// Embeds a sequence of per-site operators (None = identity) as a product.
fn embed(ops: &[Option<&Dense>], local: usize) -> Dense {
    let id = identity(local);
    let mut out = identity(1);
    for op in ops {
        out = kron(&out, op.unwrap_or(&id));
    }
    out
}

/// Open-chain lattice Hamiltonian on `levels` boson levels per site.
pub fn lattice_hamiltonian(sites: usize, spins: usize, levels: usize, omega_c: f64, omega_s: f64, lambda: f64, hopping: f64) -> Dense {
    let local = levels * (spins + 1);
    let h_site = site_hamiltonian(levels, spins, omega_c, omega_s, lambda);
    let a = kron(&boson_lower(levels), &identity(spins + 1));
    let ad = transpose(&a);
    let dim = local.pow(sites as u32);
    let mut h = zeros(dim);
    for i in 0..sites {
        let mut ops: Vec<Option<&Dense>> = vec![None; sites];
        ops[i] = Some(&h_site);
        add_scaled(&mut h, &embed(&ops, local), 1.0);
    }
    for i in 0..sites.saturating_sub(1) {
        for (x, y) in [(&ad, &a), (&a, &ad)] {
            let mut ops: Vec<Option<&Dense>> = vec![None; sites];
            ops[i] = Some(x);
            ops[i + 1] = Some(y);
            add_scaled(&mut h, &embed(&ops, local), -hopping / 2.0);
        }
    }
    h
}

/// Per-site `(n, m)` digits of a product-basis index.
pub fn digits(mut index: usize, sites: usize, levels: usize, spins: usize) -> Vec<(usize, usize)> {
    let local = levels * (spins + 1);
    let mut out = vec![(0, 0); sites];
    for k in (0..sites).rev() {
        let d = index % local;
        index /= local;
        out[k] = (d / (spins + 1), d % (spins + 1));
    }
    out
}

pub fn undigits(config: &[(usize, usize)], levels: usize, spins: usize) -> usize {
    let local = levels * (spins + 1);
    config.iter().fold(0, |acc, &(n, m)| acc * local + n * (spins + 1) + m)
}

/// Restricts a product-space matrix to the given index set.
pub fn restrict(h: &Dense, keep: &[usize]) -> Dense {
    keep.iter().map(|&i| keep.iter().map(|&j| h[i][j]).collect()).collect()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
#[allow(clippy::needless_range_loop)]
pub fn jacobi_eigenvalues(a: &Dense) -> Vec<f64> {
    let n = a.len();
    let mut m = a.clone();
    let norm: f64 = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum::<f64>().sqrt();
        if off <= 1e-15 * norm {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (m[k][p], m[k][q]);
                    m[k][p] = c * akp - s * akq;
                    m[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * apk - s * aqk;
                    m[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Brute-force sector counts `(full, symmetric, antisymmetric)` by explicit
/// enumeration of all configurations with `n_ex` excitations.
pub fn brute_sector_counts(sites: usize, spins: usize, n_ex: usize) -> (usize, usize, usize) {
    let levels = n_ex + 1;
    let local = levels * (spins + 1);
    let mut full = 0;
    let mut pal = 0;
    for idx in 0..local.pow(sites as u32) {
        let c = digits(idx, sites, levels, spins);
        if c.iter().map(|&(n, m)| n + m).sum::<usize>() != n_ex {
            continue;
        }
        full += 1;
        if c.iter().eq(c.iter().rev()) {
            pal += 1;
        }
    }
    (full, (full + pal) / 2, (full - pal) / 2)
}

/// Oracle spectra `(full, symmetric, antisymmetric)` of the lattice in the
/// `n_ex` sector. Parity spectra use the shift `H + K (1 ∓ P)/2`, whose lowest
/// eigenvalues are those of the `±` sector when `K` exceeds the bandwidth.
pub fn lattice_sector_oracle(sites: usize, spins: usize, n_ex: usize, omega_c: f64, omega_s: f64, lambda: f64, hopping: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let levels = n_ex + 1;
    let h = lattice_hamiltonian(sites, spins, levels, omega_c, omega_s, lambda, hopping);
    let keep: Vec<usize> = (0..h.len())
        .filter(|&i| digits(i, sites, levels, spins).iter().map(|&(n, m)| n + m).sum::<usize>() == n_ex)
        .collect();
    let hr = restrict(&h, &keep);
    let full = jacobi_eigenvalues(&hr);
    let pos: std::collections::HashMap<usize, usize> = keep.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let d = keep.len();
    let mut perm = zeros(d);
    for (k, &i) in keep.iter().enumerate() {
        let mut c = digits(i, sites, levels, spins);
        c.reverse();
        perm[pos[&undigits(&c, levels, spins)]][k] = 1.0;
    }
    let bandwidth = full.last().unwrap() - full[0];
    let shift = 10.0 * (bandwidth + 1.0);
    let (_, n_sym, n_anti) = brute_sector_counts(sites, spins, n_ex);
    let sector = |sign: f64, count: usize| {
        let mut m = hr.clone();
        for i in 0..d {
            m[i][i] += shift / 2.0;
            for j in 0..d {
                m[i][j] -= sign * shift / 2.0 * perm[i][j];
            }
        }
        jacobi_eigenvalues(&m)[..count].to_vec()
    };
    let sym = sector(1.0, n_sym);
    let anti = sector(-1.0, n_anti);
    (full, sym, anti)
}

/// Dense oracle of the truncated driven impurity over `(n, m)`, `m` fastest.
pub fn impurity_oracle(spins: usize, n_cutoff: usize, omega_c: f64, omega_s: f64, lambda: f64, mu: f64) -> Dense {
    let mut h = site_hamiltonian(n_cutoff, spins, omega_c, omega_s, lambda);
    let a = boson_lower(n_cutoff);
    let x = kron(&a, &identity(spins + 1));
    let drive = -mu * (spins as f64).sqrt();
    add_scaled(&mut h, &x, drive);
    add_scaled(&mut h, &transpose(&x), drive);
    h
}
