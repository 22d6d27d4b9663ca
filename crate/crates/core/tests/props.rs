//! Property-based checks: algebraic invariants that must hold for arbitrary
//! shapes, seeds, and budgets, not just the hand-picked unit fixtures.

mod common;

use proptest::prelude::*;

use actcomp::baselines::{compress_topk, decompress_topk};
use actcomp::fourier::{choose_cutoffs, FourierCodecError};
use actcomp::spectral::{fft2, parseval_residual, Spectrum};
use actcomp::tensor::{load_activation, store_activation, ActivationMatrix};
use common::random_matrix;

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=16, 1usize..=16)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn store_load_roundtrip_is_bit_identical(
        (rows, cols) in dims(),
        seed in any::<u64>(),
    ) {
        let a = random_matrix(rows, cols, seed);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.actv");
        store_activation(&a, &path).unwrap();
        let b = load_activation(&path).unwrap();
        prop_assert_eq!(b.rows(), rows);
        prop_assert_eq!(b.cols(), cols);
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn fft2_is_linear(
        (rows, cols) in dims(),
        seed_a in any::<u64>(),
        seed_b in any::<u64>(),
        alpha in -4.0f32..4.0,
    ) {
        let a = random_matrix(rows, cols, seed_a);
        let b = random_matrix(rows, cols, seed_b);
        let combo_data: Vec<f32> = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| alpha * x + y)
            .collect();
        let combo = ActivationMatrix::new(rows, cols, combo_data).unwrap();

        let fa = fft2(&a);
        let fb = fft2(&b);
        let fc = fft2(&combo);
        let scale = fc.total_energy().sqrt().max(1.0);
        for u in 0..rows {
            for v in 0..cols {
                let lhs = fc.at(u, v);
                let rhs = fa.at(u, v) * alpha as f64 + fb.at(u, v);
                prop_assert!((lhs - rhs).norm() <= 1e-4 * scale, "bin ({u},{v})");
            }
        }
    }

    #[test]
    fn real_input_spectrum_is_conjugate_symmetric(
        (rows, cols) in dims(),
        seed in any::<u64>(),
    ) {
        let a = random_matrix(rows, cols, seed);
        let spec = fft2(&a);
        let scale = spec.total_energy().sqrt().max(1.0);
        for u in 0..rows {
            for v in 0..cols {
                let mirror = spec.at((rows - u) % rows, (cols - v) % cols);
                prop_assert!(
                    (spec.at(u, v) - mirror.conj()).norm() <= 1e-9 * scale,
                    "bin ({u},{v})"
                );
            }
        }
    }

    #[test]
    fn parseval_holds_for_random_input(
        (rows, cols) in dims(),
        seed in any::<u64>(),
    ) {
        let a = random_matrix(rows, cols, seed);
        let spec = fft2(&a);
        prop_assert!(parseval_residual(&a, &spec).unwrap() <= 1e-9);
    }

    #[test]
    fn chosen_cutoffs_meet_the_requested_ratio(
        rows in 1usize..=512,
        cols in 1usize..=512,
        ratio in 1.0001f64..64.0,
    ) {
        match choose_cutoffs(rows, cols, ratio) {
            Ok((kr, kc)) => {
                prop_assert!(kr >= 1 && kr <= rows);
                prop_assert!(kc >= 1 && kc <= cols);
                let achieved = (rows * cols * 4) as f64 / (8 * kr * kc) as f64;
                prop_assert!(achieved >= ratio - 1e-9, "achieved {achieved} < {ratio}");
            }
            Err(FourierCodecError::RatioInfeasible { .. }) => {
                // Infeasible exactly when even a single retained bin is too big.
                prop_assert!(((rows * cols) as f64) < 2.0 * ratio);
            }
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn topk_error_is_the_energy_of_dropped_entries(
        (rows, cols) in dims(),
        seed in any::<u64>(),
        k in 1usize..=64,
    ) {
        let a = random_matrix(rows, cols, seed);
        let k = k.min(rows * cols);
        let p = compress_topk(&a, 8 * k).unwrap();
        prop_assert_eq!(p.k(), k);
        let b = decompress_topk(&p).unwrap();

        // Kept entries reproduce exactly, so the squared reconstruction error
        // must equal the total energy of the dropped entries.
        let mut err2 = 0.0f64;
        let mut dropped2 = 0.0f64;
        let mut min_kept = f64::INFINITY;
        let mut max_dropped = 0.0f64;
        for (x, y) in a.data().iter().zip(b.data()) {
            let (x, y) = (*x as f64, *y as f64);
            err2 += (x - y) * (x - y);
            if y == 0.0 && x != 0.0 {
                dropped2 += x * x;
                max_dropped = max_dropped.max(x.abs());
            } else if x != 0.0 {
                prop_assert_eq!(x, y, "kept entries must be exact");
                min_kept = min_kept.min(x.abs());
            }
        }
        prop_assert!((err2 - dropped2).abs() <= 1e-12 * dropped2.max(1.0));
        // Selection keeps the largest magnitudes.
        prop_assert!(min_kept >= max_dropped - 1e-12);
    }

    #[test]
    fn spectrum_energy_matches_coefficient_sum(
        (rows, cols) in dims(),
        seed in any::<u64>(),
    ) {
        let a = random_matrix(rows, cols, seed);
        let spec = fft2(&a);
        let by_hand: f64 = spec.coeffs().iter().map(|c| c.norm_sqr()).sum();
        prop_assert!((spec.total_energy() - by_hand).abs() <= 1e-9 * by_hand.max(1.0));
        let rebuilt = Spectrum::new(rows, cols, spec.coeffs().to_vec());
        prop_assert_eq!(rebuilt.at(0, 0), spec.at(0, 0));
    }
}
