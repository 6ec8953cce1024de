use std::f64::consts::PI;

use nfig_core::bands::{radial_frequency, sigma_max};
use nfig_core::spectral::{dft2, Complex64, fit_one_over_f, idft2, power_spectrum, radial_bin, radial_profile};
use nfig_core::FeatureMap;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_map(h: usize, w: usize, c: usize, seed: u64) -> FeatureMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FeatureMap::from_fn(h, w, c, |_, _, _| rng.random::<f64>() * 2.0 - 1.0)
}

/// Direct O(N^4) evaluation of the unnormalized forward transform.
fn naive_dft(f: &FeatureMap, u: usize, v: usize, c: usize) -> (f64, f64) {
    let (h, w, _) = f.shape();
    let (mut re, mut im) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            let phase = -2.0 * PI * ((u * y) as f64 / h as f64 + (v * x) as f64 / w as f64);
            re += f.get(y, x, c) * phase.cos();
            im += f.get(y, x, c) * phase.sin();
        }
    }
    (re, im)
}

#[test]
fn fft_agrees_with_direct_summation() {
    for (h, w) in [(4, 4), (5, 3), (6, 8), (7, 7)] {
        let f = random_map(h, w, 2, (h * 10 + w) as u64);
        let spec = dft2(&f).unwrap();
        for u in 0..h {
            for v in 0..w {
                for c in 0..2 {
                    let (re, im) = naive_dft(&f, u, v, c);
                    let z = spec.get(u, v, c);
                    assert!((z.re - re).abs() < 1e-10 && (z.im - im).abs() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn sixteen_grid_bin_populations_match_enumeration() {
    let power = FeatureMap::filled(16, 16, 1, 1.0);
    let prof = radial_profile(&power, 4).unwrap();
    let smax = sigma_max(16, 16);
    let width = smax / 4.0;
    let mut expected = [0usize; 4];
    for u in 0..16i64 {
        for v in 0..16i64 {
            let cu = (u + 8).rem_euclid(16) - 8;
            let cv = (v + 8).rem_euclid(16) - 8;
            let fr = ((cu * cu + cv * cv) as f64).sqrt() / 16.0;
            expected[((fr / width) as usize).min(3)] += 1;
        }
    }
    let counts: Vec<usize> = prof.bins.iter().map(|b| b.count).collect();
    assert_eq!(counts, expected);
    assert_eq!(counts.iter().sum::<usize>(), 256);
    assert_eq!(radial_bin(smax, smax, 4), 3);
}

#[test]
fn white_noise_has_flat_slope() {
    let f = random_map(128, 128, 1, 17);
    let alpha = fit_one_over_f(&radial_profile(&power_spectrum(&dft2(&f).unwrap()), 64).unwrap()).unwrap();
    assert!(alpha.abs() < 0.15, "alpha {alpha}");
}

#[test]
fn inverse_of_cosine_spectrum() {
    let mut spec = dft2(&FeatureMap::zeros(4, 4, 1)).unwrap();
    spec.set(1, 0, 0, Complex64::new(8.0, 0.0));
    spec.set(3, 0, 0, Complex64::new(8.0, 0.0));
    let f = idft2(&spec).unwrap();
    for y in 0..4 {
        for x in 0..4 {
            assert!((f.get(y, x, 0) - (2.0 * PI * y as f64 / 4.0).cos()).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn roundtrip(h in 1usize..20, w in 1usize..20, c in 1usize..4, seed in any::<u64>(), scale in 1e-3f64..1e3) {
        let mut f = random_map(h, w, c, seed);
        f.scale(scale);
        let back = idft2(&dft2(&f).unwrap()).unwrap();
        prop_assert!(back.max_abs_diff(&f) <= 1e-5 * (1.0 + f.max_abs()));
    }

    #[test]
    fn parseval(h in 1usize..20, w in 1usize..20, c in 1usize..4, seed in any::<u64>()) {
        let f = random_map(h, w, c, seed);
        let spec = dft2(&f).unwrap();
        let lhs: f64 = spec.as_slice().iter().map(|z| z.norm_sqr()).sum();
        let rhs = (h * w) as f64 * f.sum_squares();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1e-300));
        // The channel-averaged power spectrum carries the same total.
        let p: f64 = power_spectrum(&spec).as_slice().iter().sum::<f64>() * c as f64;
        prop_assert!((p - rhs).abs() <= 1e-9 * rhs.max(1e-300));
    }

    #[test]
    fn linearity(h in 1usize..12, w in 1usize..12, seed in any::<u64>(), a in -5f64..5.0, b in -5f64..5.0) {
        let f = random_map(h, w, 2, seed);
        let g = random_map(h, w, 2, seed.wrapping_add(1));
        let combo = FeatureMap::from_fn(h, w, 2, |y, x, c| a * f.get(y, x, c) + b * g.get(y, x, c));
        let (sf, sg, sc) = (dft2(&f).unwrap(), dft2(&g).unwrap(), dft2(&combo).unwrap());
        for i in 0..sc.as_slice().len() {
            let expect = sf.as_slice()[i] * a + sg.as_slice()[i] * b;
            prop_assert!((sc.as_slice()[i] - expect).norm() < 1e-9);
        }
    }

    #[test]
    fn conjugate_symmetry(h in 1usize..16, w in 1usize..16, seed in any::<u64>()) {
        let spec = dft2(&random_map(h, w, 1, seed)).unwrap();
        for u in 0..h {
            for v in 0..w {
                let a = spec.get(u, v, 0);
                let b = spec.get((h - u) % h, (w - v) % w, 0).conj();
                prop_assert!((a - b).norm() < 1e-9);
            }
        }
        prop_assert!(spec.symmetry_defect() < 1e-9);
    }

    #[test]
    fn radial_frequency_is_centered_and_bounded(h in 1usize..40, w in 1usize..40, u in 0usize..40, v in 0usize..40) {
        prop_assume!(u < h && v < w);
        let fr = radial_frequency(u, v, h, w).unwrap();
        prop_assert!(fr >= 0.0 && fr <= sigma_max(h, w) + 1e-15);
        prop_assert_eq!(fr, radial_frequency((h - u) % h, (w - v) % w, h, w).unwrap());
    }
}
