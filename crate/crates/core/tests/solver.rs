//! Time integration: closed-form dissipation, conservation structure,
//! convergence orders and equivariance.

use std::f64::consts::PI;

use proptest::prelude::*;

use sqglab::experiments::random_field;
use sqglab::norms::NormSpec;
use sqglab::solver::*;
use sqglab::spectral_core::*;
use sqglab::SqgError;

fn fixed(t_end: f64, dt: f64, scheme: Scheme) -> SolverConfig {
    SolverConfig { dt_policy: DtPolicy::Fixed, scheme, snapshot_stride: 1000, ..SolverConfig::new(t_end, dt) }
}

fn run(theta: &SpectralField, cfg: &SolverConfig) -> SpectralField {
    evolve(theta, cfg, &EvolveOptions::default()).unwrap().into_result().unwrap().final_state.unwrap()
}

#[test]
fn dissipation_matches_the_exponential_factor() {
    let g = Grid::new(64, 2.0 * PI).unwrap();
    let th = random_field(&g, 12, 1.0, 3).unwrap();
    for alpha in [0.5, 1.0, 2.0] {
        for scheme in [Scheme::IfRk4, Scheme::ImexBdf2] {
            let cfg = SolverConfig { alpha, transport: false, ..fixed(0.3, 0.01, scheme) };
            let out = run(&th, &cfg);
            let exact = th.map_modes(|k1, k2| Complex::new((-k1.hypot(k2).powf(alpha) * 0.3).exp(), 0.0));
            let e = out.sub(&exact).unwrap().l2_norm() / exact.l2_norm();
            let tol = if scheme == Scheme::IfRk4 { 1e-13 } else { 1e-3 };
            assert!(e <= tol, "alpha {alpha}, {scheme:?}: {e:e}");
        }
    }
}

type Complex = num_complex::Complex64;

#[test]
fn single_shell_data_only_dissipate() {
    // u = grad-perp theta / |k| on one shell, so u . grad theta vanishes identically
    let g = Grid::new(64, 2.0 * PI).unwrap();
    let modes = [(3.0, 4.0, 0.2), (4.0, -3.0, 1.3), (5.0, 0.0, -0.4), (0.0, 5.0, 2.1)];
    let phys = PhysicalField::from_fn(g, |x, y| modes.iter().map(|&(a, b, ph)| (a * x + b * y + ph).cos()).sum());
    let th = forward(&phys).unwrap();
    let with = run(&th, &fixed(0.5, 0.01, Scheme::IfRk4));
    let without = run(&th, &SolverConfig { transport: false, ..fixed(0.5, 0.01, Scheme::IfRk4) });
    let e = with.sub(&without).unwrap().l2_norm() / without.l2_norm();
    assert!(e <= 1e-12, "{e:e}");
}

fn observed_order(scheme: Scheme) -> f64 {
    let g = Grid::new(64, 2.0 * PI).unwrap();
    let th = random_field(&g, 6, 1.0, 11).unwrap();
    let sols: Vec<SpectralField> = [0.04, 0.02, 0.01].iter().map(|&dt| run(&th, &fixed(0.4, dt, scheme))).collect();
    let e1 = sols[0].sub(&sols[1]).unwrap().l2_norm();
    let e2 = sols[1].sub(&sols[2]).unwrap().l2_norm();
    (e1 / e2).log2()
}

#[test]
fn temporal_orders() {
    let rk = observed_order(Scheme::IfRk4);
    assert!(rk >= 3.5, "IF-RK4 order {rk}");
    let bdf = observed_order(Scheme::ImexBdf2);
    assert!((bdf - 2.0).abs() <= 0.3, "IMEX-BDF2 order {bdf}");
}

#[test]
fn l2_decreases_every_step_and_max_principle_holds() {
    let g = Grid::new(64, 2.0 * PI).unwrap();
    let th = random_field(&g, 6, 1.0, 5).unwrap();
    let cfg = SolverConfig { snapshot_stride: 5, ..SolverConfig::new(1.0, 0.05) };
    let rec = evolve(&th, &cfg, &EvolveOptions { specs: vec![NormSpec::lp(2.0)], ..Default::default() }).unwrap();
    assert!(rec.max_l2_increase() <= 1e-8, "{:e}", rec.max_l2_increase());
    assert!(rec.max_linf_excess() <= 1e-6, "{:e}", rec.max_linf_excess());
    assert_eq!(rec.step_l2.len(), rec.step_times.len());
    assert!((rec.step_times.last().unwrap() - 1.0).abs() < 1e-12);
    // the recorded L2 series matches the requested L2 norm at each snapshot
    let series = rec.series(&NormSpec::lp(2.0)).unwrap();
    for (a, b) in series.iter().zip(&rec.l2_series) {
        assert!((a - b).abs() <= 1e-12 * b);
    }
}

#[test]
fn cfl_policy_bounds_the_step() {
    let g = Grid::new(64, 2.0 * PI).unwrap();
    let th = random_field(&g, 6, 5.0, 8).unwrap();
    let umax = max_velocity(&th).unwrap();
    let cfg = SolverConfig::new(0.2, 1.0);
    let rec = evolve(&th, &cfg, &EvolveOptions::default()).unwrap();
    let first = rec.step_times[1] - rec.step_times[0];
    assert!((first - cfl_limit(&g, umax, 0.4)).abs() <= 1e-14);
    assert_eq!(cfl_limit(&g, 0.0, 0.4), f64::INFINITY);
}

#[test]
fn guards_and_error_paths() {
    let g = Grid::new(16, 1.0).unwrap();
    let mut th = random_field(&g, 3, 1.0, 1).unwrap();
    assert!(SolverConfig { alpha: 2.5, ..SolverConfig::new(1.0, 0.1) }.validate().is_err());
    assert!(SolverConfig { cfl_number: 1.0, ..SolverConfig::new(1.0, 0.1) }.validate().is_err());
    assert!(SolverConfig::new(1.0, 0.0).validate().is_err());
    assert!(SolverConfig { snapshot_stride: 0, ..SolverConfig::new(1.0, 0.1) }.validate().is_err());
    assert!(step(&th, -1.0, &SolverConfig::new(1.0, 0.1)).is_err());
    th.coeffs[0] = Complex::new(1.0, 0.0);
    assert!(matches!(
        evolve(&th, &SolverConfig::new(1.0, 0.1), &EvolveOptions::default()),
        Err(SqgError::NonzeroMean { .. })
    ));
    let rec = EvolutionRecord { aborted: Some("boom".into()), times: vec![0.5], ..Default::default() };
    assert!(matches!(rec.into_result(), Err(SqgError::BlowUp { .. })));
    let rec = EvolutionRecord { times: vec![0.0], ..Default::default() };
    assert!(attach_diagnostics(rec, &[NormSpec::lp(2.0)]).is_err());
}

#[test]
fn diagnostics_from_snapshots_match_inline_series() {
    let g = Grid::new(32, 2.0 * PI).unwrap();
    let th = random_field(&g, 4, 1.0, 2).unwrap();
    let cfg = SolverConfig { snapshot_stride: 2, ..fixed(0.2, 0.02, Scheme::IfRk4) };
    let spec = NormSpec::sobolev(1.0, 3.0, true);
    let inline = evolve(&th, &cfg, &EvolveOptions { specs: vec![spec], ..Default::default() }).unwrap();
    let stored = evolve(&th, &cfg, &EvolveOptions { keep_snapshots: true, ..Default::default() }).unwrap();
    let stored = attach_diagnostics(stored, &[spec]).unwrap();
    assert_eq!(inline.series(&spec), stored.series(&spec));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn evolution_commutes_with_grid_shifts(seed in any::<u64>(), s1 in 0usize..32, s2 in 0usize..32) {
        let g = Grid::new(32, 2.0 * PI).unwrap();
        let th = random_field(&g, 5, 1.0, seed).unwrap();
        let cfg = fixed(0.1, 0.02, Scheme::IfRk4);
        let (d1, d2) = (s1 as f64 * g.dx(), s2 as f64 * g.dx());
        let a = run(&th.translate(d1, d2), &cfg);
        let b = run(&th, &cfg).translate(d1, d2);
        prop_assert!(a.sub(&b).unwrap().l2_norm() <= 1e-12 * b.l2_norm());
    }

    #[test]
    fn single_step_never_raises_l2(seed in any::<u64>(), dt in 0.001f64..0.05) {
        let g = Grid::new(32, 2.0 * PI).unwrap();
        let th = random_field(&g, 6, 1.0, seed).unwrap();
        for scheme in [Scheme::IfRk4, Scheme::ImexBdf2] {
            let next = step(&th, dt, &SolverConfig { scheme, ..SolverConfig::new(1.0, dt) }).unwrap();
            prop_assert!(next.l2_norm() <= th.l2_norm() * (1.0 + 1e-8));
        }
    }
}
