use proptest::prelude::*;

use tcl_chaos::basis::{build_sector_basis, sector_dimension, LatticeParams, Parity};
use tcl_chaos::hamiltonian::{assemble_lattice_hamiltonian, number_operator};
use tcl_chaos::interp::{expand_blocks, isotonic_increasing, Pchip};
use tcl_chaos::sff::sff;
use tcl_chaos::spectra::Spectrum;
use tcl_chaos::stats::{brody_cdf, brody_pdf, gap_ratios};
use tcl_chaos::unfolding::UnfoldedSpectrum;

fn levels(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..3.0, n).prop_map(|gaps| {
        let mut acc = 0.0;
        gaps.into_iter()
            .map(|g| {
                acc += g;
                acc
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn sectors_partition_the_full_space(sites in 1usize..=4, spins in 1usize..=3, n_ex in 0u32..=6) {
        let p = LatticeParams::resonant(sites, spins, 1.0, 0.3);
        let full = sector_dimension(&p, n_ex, Parity::Full);
        let sym = sector_dimension(&p, n_ex, Parity::Symmetric);
        let anti = sector_dimension(&p, n_ex, Parity::Antisymmetric);
        prop_assert_eq!(sym + anti, full);
        prop_assert!(sym >= anti);
    }

    #[test]
    fn basis_index_round_trip(sites in 1usize..=3, spins in 1usize..=3, n_ex in 1u32..=5, anti in any::<bool>()) {
        let p = LatticeParams::resonant(sites, spins, 1.0, 0.3);
        let parity = if anti { Parity::Antisymmetric } else { Parity::Symmetric };
        if let Ok(b) = build_sector_basis(&p, n_ex, parity) {
            for k in 0..b.dim() {
                prop_assert_eq!(b.index_of(b.state(k)), Some(k));
                prop_assert_eq!(b.excitations(k), n_ex);
                let mut mirrored = b.state(k).to_vec();
                mirrored.reverse();
                let (idx, _) = b.locate(&mirrored).unwrap();
                prop_assert_eq!(idx, k);
            }
        }
    }

    #[test]
    fn hamiltonian_is_symmetric_and_conserves_excitations(
        sites in 1usize..=3,
        spins in 1usize..=3,
        n_ex in 1u32..=4,
        lambda in -2.0f64..2.0,
        hopping in 0.0f64..2.0,
        seed in any::<u64>(),
    ) {
        let p = LatticeParams { sites, spins, lambda, hopping, omega_c: 1.0, omega_s: 0.8 };
        let b = build_sector_basis(&p, n_ex, Parity::Symmetric).unwrap();
        let h = assemble_lattice_hamiltonian(&b).unwrap();
        let n = b.dim();
        let mut state = seed;
        let mut rnd = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let x: Vec<f64> = (0..n).map(|_| rnd()).collect();
        let y: Vec<f64> = (0..n).map(|_| rnd()).collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
        let lhs = dot(&y, &h.mul_vec(&x));
        let rhs = dot(&x, &h.mul_vec(&y));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        for r in 0..n {
            for c in 0..n {
                prop_assert_eq!(h.get(r, c), h.get(c, r));
            }
        }
        let num = number_operator(&b);
        let diag: Vec<f64> = (0..n).map(|k| num.get(k, k)).collect();
        prop_assert_eq!(h.commutator_with_diagonal(&diag), 0.0);
    }

    #[test]
    fn gap_ratio_is_affine_invariant(v in levels(60), scale in 0.01f64..100.0, shift in -1e3f64..1e3) {
        let a = gap_ratios(&Spectrum::new(v.clone(), "").unwrap()).unwrap();
        let moved: Vec<f64> = v.iter().map(|e| scale * e + shift).collect();
        let b = gap_ratios(&Spectrum::new(moved, "").unwrap()).unwrap();
        prop_assert!((a.mean_r - b.mean_r).abs() < 1e-9);
        prop_assert!(a.r_values.iter().all(|r| (0.0..=1.0).contains(r)));
    }

    #[test]
    fn sff_is_shift_invariant(v in levels(40), shift in -50.0f64..50.0) {
        let times = [0.05, 0.3, 1.0, 7.0];
        let a = sff(&UnfoldedSpectrum::from_levels(v.clone()).unwrap(), 20, &times).unwrap();
        let moved: Vec<f64> = v.iter().map(|e| e + shift).collect();
        let b = sff(&UnfoldedSpectrum::from_levels(moved).unwrap(), 20, &times).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() <= 1e-8 * (1.0 + x.abs()));
        }
        prop_assert!(a.values.iter().all(|k| *k >= 0.0));
    }

    #[test]
    fn brody_is_a_density(b in 0.0f64..1.2) {
        // trapezoid mass on [0, 40] against the closed-form CDF
        let n = 80_000;
        let h = 40.0 / n as f64;
        let mass: f64 = (0..n).map(|k| 0.5 * h * (brody_pdf(b, k as f64 * h) + brody_pdf(b, (k + 1) as f64 * h))).sum();
        prop_assert!((mass - brody_cdf(b, 40.0)).abs() < 2e-3);
        prop_assert!((brody_cdf(b, 40.0) - 1.0).abs() < 1e-12);
        prop_assert!((0..100).all(|k| brody_pdf(b, 0.1 * k as f64) >= 0.0));
    }

    #[test]
    fn pchip_never_overshoots_monotone_data(steps in prop::collection::vec((0.01f64..2.0, 0.0f64..1.0), 3..20)) {
        let mut x = vec![0.0];
        let mut y = vec![0.0];
        for (dx, dy) in steps {
            x.push(x.last().unwrap() + dx);
            y.push(y.last().unwrap() + dy);
        }
        let p = Pchip::new(&x, &y).unwrap();
        for k in 0..x.len() - 1 {
            let mut prev = y[k];
            for j in 0..=20 {
                let t = x[k] + (x[k + 1] - x[k]) * j as f64 / 20.0;
                let v = p.eval(t);
                prop_assert!(v >= y[k] - 1e-12 && v <= y[k + 1] + 1e-12);
                prop_assert!(v >= prev - 1e-12);
                prev = v;
            }
        }
    }

    #[test]
    fn isotonic_fit_is_monotone_and_mean_preserving(
        data in prop::collection::vec((-5.0f64..5.0, 0.1f64..3.0), 1..40)
    ) {
        let (y, w): (Vec<f64>, Vec<f64>) = data.into_iter().unzip();
        let fit = expand_blocks(&isotonic_increasing(&y, &w).unwrap());
        prop_assert_eq!(fit.len(), y.len());
        prop_assert!(fit.windows(2).all(|p| p[1] >= p[0] - 1e-12));
        let m0: f64 = y.iter().zip(&w).map(|(a, b)| a * b).sum();
        let m1: f64 = fit.iter().zip(&w).map(|(a, b)| a * b).sum();
        prop_assert!((m0 - m1).abs() < 1e-9);
    }
}
