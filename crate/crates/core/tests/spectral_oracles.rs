//! Spectral operators against direct-summation oracles, plus algebraic
//! invariants as property tests.

use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sqglab::spectral_core::*;

/// Direct DFT `c(m) = n^-2 sum_j f(x_j) e^{-i k.x_j}` indexed like the FFT output.
fn direct_dft(f: &PhysicalField) -> Vec<Complex64> {
    let g = f.grid;
    let n = g.n;
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for (idx, c) in out.iter_mut().enumerate() {
        let (m1, m2) = (g.mode(idx / n) as f64, g.mode(idx % n) as f64);
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..n * n {
            let (j1, j2) = ((j / n) as f64, (j % n) as f64);
            let ph = -2.0 * PI * (m1 * j1 + m2 * j2) / n as f64;
            acc += f.values[j] * Complex64::from_polar(1.0, ph);
        }
        *c = acc / (n * n) as f64;
    }
    out
}

/// Direct synthesis `sum_m mult(k) c(m) e^{i k.x_j}`, real part.
fn direct_synthesis<F: Fn(f64, f64) -> Complex64>(g: &Grid, c: &[Complex64], mult: F) -> Vec<f64> {
    let n = g.n;
    let active: Vec<(usize, Complex64)> = c
        .iter()
        .enumerate()
        .filter(|(_, v)| v.norm() > 0.0)
        .map(|(i, v)| {
            let (k1, k2) = g.wavevector(i);
            (i, v * mult(k1, k2))
        })
        .collect();
    (0..n * n)
        .map(|j| {
            let (x1, x2) = g.point(j);
            active
                .iter()
                .map(|(i, v)| {
                    let (k1, k2) = g.wavevector(*i);
                    (v * Complex64::from_polar(1.0, k1 * x1 + k2 * x2)).re
                })
                .sum()
        })
        .collect()
}

/// Real, mean-free field whose modes satisfy `|m_i| <= band`.
fn band_limited(g: Grid, band: i64, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = (0..g.len())
        .map(|idx| {
            let (m1, m2) = (g.mode(idx / g.n), g.mode(idx % g.n));
            if (m1 == 0 && m2 == 0) || m1.abs() > band || m2.abs() > band {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            }
        })
        .collect();
    let mut f = SpectralField::from_coeffs(g, coeffs).unwrap();
    f.symmetrize();
    f
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

#[test]
fn forward_matches_direct_dft() {
    let g = Grid::new(32, 2.0 * PI).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let f = PhysicalField::from_values(g, (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let fast = forward(&f).unwrap();
    let slow = direct_dft(&f);
    let err: f64 = fast.coeffs.iter().zip(&slow).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let scale = slow.iter().map(|c| c.norm()).fold(0.0, f64::max);
    assert!(err <= 1e-13 * scale, "max coefficient error {err:e}");
}

#[test]
fn multipliers_match_direct_summation() {
    let g = Grid::new(64, 3.0).unwrap();
    let f = band_limited(g, 20, 2);
    for s in [-1.0, -0.5, 0.5, 1.0, 1.7] {
        let fast = inverse(&apply_lambda(s, &f).unwrap());
        let slow = direct_synthesis(&g, &f.coeffs, |k1, k2| Complex64::new(k1.hypot(k2).powf(s), 0.0));
        assert!(rel_err(&fast.values, &slow) < 1e-12, "Lambda^{s}");
        let fast = inverse(&apply_bessel(s, &f));
        let slow = direct_synthesis(&g, &f.coeffs, |k1, k2| Complex64::new((1.0 + k1 * k1 + k2 * k2).powf(0.5 * s), 0.0));
        assert!(rel_err(&fast.values, &slow) < 1e-12, "J^{s}");
    }
}

#[test]
fn velocity_matches_direct_summation() {
    let g = Grid::new(64, 2.0 * PI).unwrap();
    let f = band_limited(g, 24, 3);
    let u = velocity(&f).unwrap();
    let s1 = direct_synthesis(&g, &f.coeffs, |k1, k2| Complex64::new(0.0, -k2 / k1.hypot(k2)));
    let s2 = direct_synthesis(&g, &f.coeffs, |k1, k2| Complex64::new(0.0, k1 / k1.hypot(k2)));
    assert!(rel_err(&u.u1.values, &s1) < 1e-12);
    assert!(rel_err(&u.u2.values, &s2) < 1e-12);
    assert!(u.divergence_relative().unwrap() < 1e-13);
}

#[test]
fn dealiased_product_matches_truncated_convolution() {
    let g = Grid::new(64, 2.0 * PI).unwrap();
    let a = band_limited(g, 10, 4);
    let b = band_limited(g, 10, 5);
    let fast = dealiased_product(&inverse(&a), &inverse(&b)).unwrap();
    let mut slow = vec![Complex64::new(0.0, 0.0); g.len()];
    for (i, ca) in a.coeffs.iter().enumerate().filter(|(_, c)| c.norm() > 0.0) {
        for (j, cb) in b.coeffs.iter().enumerate().filter(|(_, c)| c.norm() > 0.0) {
            let m1 = g.mode(i / g.n) + g.mode(j / g.n);
            let m2 = g.mode(i % g.n) + g.mode(j % g.n);
            let idx = g.position(m1) * g.n + g.position(m2);
            slow[idx] += ca * cb;
        }
    }
    for (idx, c) in slow.iter_mut().enumerate() {
        if !g.retained(idx) {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    let err: f64 = fast.coeffs.iter().zip(&slow).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    let scale = slow.iter().map(|c| c.norm()).fold(0.0, f64::max);
    assert!(err < 1e-14 * scale, "max error {err:e}");
}

#[test]
fn transport_matches_pointwise_product() {
    let g = Grid::new(64, 2.0 * PI).unwrap();
    let th = band_limited(g, 8, 6);
    let u = velocity(&band_limited(g, 8, 7)).unwrap();
    let fast = transport(&u, &th).unwrap();
    let (g1, g2) = gradient(&th);
    let prod: Vec<f64> = (0..g.len()).map(|i| u.u1.values[i] * g1.values[i] + u.u2.values[i] * g2.values[i]).collect();
    let slow = forward(&PhysicalField::from_values(g, prod).unwrap()).unwrap();
    let err: f64 = fast.coeffs.iter().zip(&slow.coeffs).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    assert!(err < 1e-13, "{err:e}");
}

#[test]
fn snapshot_rejects_truncated_and_foreign_files() {
    let dir = std::env::temp_dir().join(format!("sqglab_snap_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let g = Grid::new(8, 1.0).unwrap();
    let f = PhysicalField::from_fn(g, |x, y| x - 2.0 * y);
    let path = dir.join("a.sqgf");
    write_snapshot(&path, &f, 0.25).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(bytes.len(), SNAPSHOT_HEADER_LEN + 8 * g.len());
    assert_eq!(&bytes[..4], SNAPSHOT_MAGIC);
    std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
    assert!(read_snapshot(&path).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    std::fs::write(&path, &bad).unwrap();
    assert!(read_snapshot(&path).is_err());
    std::fs::remove_dir_all(&dir).ok();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn round_trip_and_parseval(seed in any::<u64>(), band in 1i64..15) {
        let g = Grid::new(32, 5.0).unwrap();
        let f = band_limited(g, band, seed);
        let phys = inverse(&f);
        let back = forward(&phys).unwrap();
        let err = f.sub(&back).unwrap().l2_norm();
        prop_assert!(err <= 1e-13 * f.l2_norm());
        prop_assert!((phys.lp_norm(2.0) - f.l2_norm()).abs() <= 1e-12 * f.l2_norm());
        prop_assert!(back.hermitian_defect() == 0.0);
    }

    #[test]
    fn lambda_powers_compose(seed in any::<u64>(), a in -1.5f64..1.5, b in -1.5f64..1.5) {
        let g = Grid::new(32, 2.0 * PI).unwrap();
        let f = band_limited(g, 12, seed);
        let ab = apply_lambda(a, &apply_lambda(b, &f).unwrap()).unwrap();
        let direct = apply_lambda(a + b, &f).unwrap();
        prop_assert!(ab.sub(&direct).unwrap().l2_norm() <= 1e-12 * direct.l2_norm());
    }

    #[test]
    fn self_transport_conserves_l2(seed in any::<u64>()) {
        // <theta, P(u[theta] . grad theta)> = 0 for theta inside the dealias mask
        let g = Grid::new(64, 2.0 * PI).unwrap();
        let th = band_limited(g, 20, seed);
        let u = velocity(&th).unwrap();
        let tr = transport(&u, &th).unwrap();
        let inner: f64 = th.coeffs.iter().zip(&tr.coeffs).map(|(a, b)| (a * b.conj()).re).sum();
        let scale = th.l2_norm() * tr.l2_norm() / (g.l * g.l);
        prop_assert!(inner.abs() <= 1e-12 * scale, "inner {inner:e} scale {scale:e}");
    }

    #[test]
    fn grid_translation_is_an_index_shift(seed in any::<u64>(), s1 in 0usize..16, s2 in 0usize..16) {
        let g = Grid::new(16, 2.0).unwrap();
        let f = band_limited(g, 7, seed);
        let moved = inverse(&f.translate(s1 as f64 * g.dx(), s2 as f64 * g.dx()));
        let orig = inverse(&f);
        for i in 0..g.n {
            for j in 0..g.n {
                let src = ((i + g.n - s1) % g.n) * g.n + (j + g.n - s2) % g.n;
                prop_assert!((moved.values[i * g.n + j] - orig.values[src]).abs() < 1e-12);
            }
        }
    }
}
