//! Radial profiles: Hankel transforms against an independent quadrature and
//! `h` against the real-space Riesz potential written with elliptic integrals.

use std::f64::consts::PI;

use sqglab::profiles::*;

/// Composite Simpson with `m` (even) intervals.
fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let inner: f64 = (1..m).map(|i| if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + h * i as f64)).sum();
    h / 3.0 * (f(a) + inner + f(b))
}

/// `J0(x) = (2 pi)^-1 int_0^{2 pi} cos(x sin t) dt` by the periodic trapezoid rule.
fn j0(x: f64) -> f64 {
    let m = 512;
    (0..m).map(|i| (x * (2.0 * PI * i as f64 / m as f64).sin()).cos()).sum::<f64>() / m as f64
}

/// Complete elliptic integral of the first kind, parameter `m`, via the AGM.
fn ellip_k(m: f64) -> f64 {
    let (mut a, mut b) = (1.0, (1.0 - m).sqrt());
    for _ in 0..40 {
        (a, b) = (0.5 * (a + b), (a * b).sqrt());
    }
    PI / (2.0 * a)
}

/// `w = Lambda^{-1} f` at radius `r` from the kernel `1/(2 pi |x|)`.
fn riesz_potential(f: &RadialProfile, r: f64) -> f64 {
    let (a, b) = f.support;
    let integrand = |rho: f64| {
        let s = r + rho;
        rho * f.eval(rho) * 4.0 * ellip_k(4.0 * r * rho / (s * s)) / s
    };
    simpson(&integrand, a, b, 4000) / (2.0 * PI)
}

#[test]
fn hankel_matches_independent_quadrature() {
    let f = make_bump(0.5, 2.0, 1.7).unwrap();
    let ks = [0.0, 0.5, 1.0, 3.3, 7.0, 15.0, 40.0];
    let fast = hankel_values(&f, &ks);
    for (k, v) in ks.iter().zip(&fast) {
        let oracle = 2.0 * PI * simpson(&|r: f64| f.eval(r) * j0(k * r) * r, 0.5, 2.0, 4000);
        assert!((v - oracle).abs() <= 1e-10 * fast[0].abs(), "k = {k}: {v} vs {oracle}");
    }
    assert!((fast[0] - f.mass()).abs() <= 1e-12 * f.mass());
}

#[test]
fn h_matches_real_space_potential() {
    let f = make_bump(F_SUPPORT.0, F_SUPPORT.1, 1.0).unwrap();
    let h = compute_h(&f, DEFAULT_R_MAX, DEFAULT_N_R).unwrap();
    let scale = h.base.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let e = 1e-4;
    for r in [0.2, 0.3, 0.4, 2.3, 2.8, 3.5, 5.0, 8.0, 11.0] {
        let oracle = (riesz_potential(&f, r + e) - riesz_potential(&f, r - e)) / (2.0 * e) / r;
        assert!((h.h(r) - oracle).abs() <= 1e-6 * scale, "r = {r}: {} vs {oracle}", h.h(r));
    }
}

#[test]
fn h_derivative_is_consistent() {
    let h = unit_core_h(DEFAULT_R_MAX, DEFAULT_N_R).unwrap();
    let scale = h.derivative.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let e = 1e-5;
    for r in [0.3, 0.9, 1.4, 2.2, 4.0, 9.0] {
        let fd = (h.h(r + e) - h.h(r - e)) / (2.0 * e);
        assert!((h.dh(r) - fd).abs() <= 1e-6 * scale, "r = {r}");
    }
}

#[test]
fn far_field_law_at_large_radius() {
    let h = unit_core_h(DEFAULT_R_MAX, DEFAULT_N_R).unwrap();
    for r in [8.0, 10.0, 11.5] {
        let rel = (h.h(r) / h.far_field(r) - 1.0).abs();
        assert!(rel < 2e-3, "r = {r}: relative gap {rel}");
    }
}

#[test]
fn h_is_linear_in_the_seed() {
    let f = make_bump(F_SUPPORT.0, F_SUPPORT.1, 1.0).unwrap();
    let h1 = compute_h(&f, 8.0, 1024).unwrap();
    let h3 = compute_h(&f.scaled(3.0), 8.0, 1024).unwrap();
    for r in [0.3, 1.0, 4.0] {
        assert!((h3.h(r) - 3.0 * h1.h(r)).abs() <= 1e-12 * h3.h(r).abs());
    }
    let z = compute_h(&f.scaled(0.0), 8.0, 1024).unwrap();
    assert!(z.base.values.iter().all(|v| *v == 0.0));
}

#[test]
fn assembled_ring_sits_in_the_positivity_window() {
    let set = assemble_profiles(5000.0).unwrap();
    let (w0, w1) = set.h.positivity_window.unwrap();
    assert!(w0 > G_EXCLUSION.1 || w1 < G_EXCLUSION.0);
    let (a, b) = set.g.support;
    assert!(a >= w0 && b <= w1);
    for i in 0..=50 {
        let r = a + (b - a) * i as f64 / 50.0;
        assert!(set.h.dh(r) > 0.0, "h' <= 0 at r = {r}");
    }
    assert!(set.without_ring().g.is_zero());
    assert!(assemble_profiles(-1.0).is_err());
}

#[test]
fn window_search_reports_empty_cases() {
    let h = unit_core_h(DEFAULT_R_MAX, DEFAULT_N_R).unwrap();
    assert!(find_positivity_window(&h, (0.0, 100.0)).is_err());
    assert!(find_positivity_window(&h.scaled(-1.0), (0.0, 2.5)).is_err() || h.scaled(-1.0).dh(3.0) > 0.0);
    assert!(compute_h(&make_bump(0.5, 2.0, 1.0).unwrap(), 4.0, 1024).is_err());
}

#[test]
fn profile_files_round_trip() {
    let dir = std::env::temp_dir().join(format!("sqglab_prof_{}", std::process::id()));
    let f = make_bump(0.5, 2.0, 2.0).unwrap();
    f.write(&dir, "profile_f").unwrap();
    let side: ProfileSidecar =
        serde_json::from_str(&std::fs::read_to_string(dir.join("profile_f.json")).unwrap()).unwrap();
    assert_eq!(side, f.sidecar());
    let mut rd = csv::Reader::from_path(dir.join("profile_f.csv")).unwrap();
    let rows: Vec<(f64, f64)> = rd
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), f.r_samples.len());
    for ((r, v), (r0, v0)) in rows.iter().zip(f.r_samples.iter().zip(&f.values)) {
        assert_eq!((r, v), (r0, v0));
    }
    std::fs::remove_dir_all(&dir).ok();
}
