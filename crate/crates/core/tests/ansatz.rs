//! Closed-form ansatz quantities against grid evaluations, plus the
//! structural identities of the construction.

use std::f64::consts::PI;
use std::sync::OnceLock;

use proptest::prelude::*;

use sqglab::ansatz::*;
use sqglab::norms::{sobolev_norm, NormSpec};
use sqglab::profiles::{assemble_profiles, ProfileSet};
use sqglab::spectral_core::*;

fn profiles() -> &'static ProfileSet {
    static SET: OnceLock<ProfileSet> = OnceLock::new();
    SET.get_or_init(|| assemble_profiles(5000.0).unwrap())
}

fn small_state(grid: &Grid) -> AnsatzState {
    let params = AnsatzParams::manual(0.5, 1.2, 1.0, 8, 4.0).unwrap();
    AnsatzState::centered(params, profiles().clone(), grid).unwrap()
}

fn max_diff(a: &PhysicalField, b: &PhysicalField) -> f64 {
    a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn spectral_core_matches_point_samples() {
    let mut errs = Vec::new();
    for n in [512, 1024, 2048] {
        let g = Grid::new(n, 8.0).unwrap();
        let st = small_state(&g);
        let spec = inverse(&st.theta1_spectral(&g, Band::Full));
        let phys = st.theta1_physical(&g);
        errs.push(max_diff(&spec, &phys) / phys.max_abs());
    }
    assert!(errs[1] < 0.25 * errs[0] && errs[2] < 0.25 * errs[1], "{errs:?}");
    assert!(errs[2] <= 1e-5, "{errs:?}");
}

#[test]
fn periodize_is_the_rasterized_ansatz() {
    let g = Grid::new(256, 8.0).unwrap();
    let st = small_state(&g);
    let t = 2e-3;
    let p = inverse(&st.periodize(&g, t).unwrap());
    let mut direct = st.theta1_physical(&g);
    direct.add_assign(&st.theta2_physical(&g, t)).unwrap();
    assert!(max_diff(&p, &direct) <= 1e-12 * direct.max_abs());
}

#[test]
fn time_derivative_matches_differences() {
    let g = Grid::new(256, 8.0).unwrap();
    let st = small_state(&g);
    let (t, dt) = (2e-3, 1e-7);
    let mut fd = st.theta2_physical(&g, t + dt);
    fd.add_assign(&{
        let mut m = st.theta2_physical(&g, t - dt);
        m.scale(-1.0);
        m
    })
    .unwrap();
    fd.scale(0.5 / dt);
    let exact = st.dtheta2_physical(&g, t);
    assert!(exact.max_abs() > 0.0);
    assert!(max_diff(&fd, &exact) <= 1e-5 * exact.max_abs(), "{:e}", max_diff(&fd, &exact) / exact.max_abs());
}

#[test]
fn closed_form_gradient_matches_spectral_gradient() {
    // the ring's bump edges set the rate; refinement must drive the error down fast
    let mut errs = Vec::new();
    for n in [512, 1024, 2048] {
        let g = Grid::new(n, 8.0).unwrap();
        let st = small_state(&g);
        let t = 2e-3;
        let (c1, c2) = st.theta2_gradient(&g, t);
        let (s1, s2) = gradient(&st.theta2_spectral(&g, t).unwrap());
        let scale = c1.max_abs().max(c2.max_abs());
        errs.push(max_diff(&c1, &s1).max(max_diff(&c2, &s2)) / scale);
    }
    assert!(errs[1] < 0.25 * errs[0] && errs[2] < 0.25 * errs[1], "{errs:?}");
    assert!(errs[2] <= 1e-3, "{errs:?}");
}

#[test]
fn gradient_parts_recombine_and_match_their_norms() {
    let g = Grid::new(512, 8.0).unwrap();
    let st = small_state(&g);
    let t = 2e-3;
    let [i1, i2, i3] = st.gradient_parts(&g, t);
    let (c1, c2) = st.theta2_gradient(&g, t);
    let scale = c1.max_abs();
    for idx in 0..g.len() {
        let (x1, x2) = g.point(idx);
        let a = (x2 - st.center.1).atan2(x1 - st.center.0);
        let gr = i1.values[idx] + i2.values[idx];
        let ga = i3.values[idx];
        let (e1, e2) = (gr * a.cos() - ga * a.sin(), gr * a.sin() + ga * a.cos());
        assert!((e1 - c1.values[idx]).abs() <= 1e-12 * scale && (e2 - c2.values[idx]).abs() <= 1e-12 * scale);
    }
    for q in [1.2, 2.0, f64::INFINITY] {
        let closed = st.gradient_part_norms(t, q);
        for (k, part) in [&i1, &i2, &i3].iter().enumerate() {
            let grid_norm = part.lp_norm(q);
            let tol = if q.is_infinite() { 1e-2 } else { 1e-3 };
            assert!((closed[k] / grid_norm - 1.0).abs() <= tol, "q {q}, I{}: {} vs {grid_norm}", k + 1, closed[k]);
        }
    }
}

#[test]
fn h1_closed_form_matches_spectral_norm() {
    let g = Grid::new(512, 8.0).unwrap();
    let st = small_state(&g);
    for t in [0.0, 2e-3] {
        let closed = st.theta2_h1(t);
        let grid = sobolev_norm(&st.theta2_spectral(&g, t).unwrap(), &NormSpec::sobolev(1.0, 2.0, true)).unwrap();
        assert!((closed / grid - 1.0).abs() <= 1e-4, "t {t}: {closed} vs {grid}");
    }
}

#[test]
fn residual_terms_sum_to_the_direct_residual() {
    let g = Grid::new(256, 8.0).unwrap();
    let st = small_state(&g);
    let r = st.residual(&g, 1e-3, &[NormSpec::lp(2.0)]).unwrap();
    assert!(r.sum_defect <= SUM_CHECK_TOL, "{:e}", r.sum_defect);
    assert!(r.norm("F2", &NormSpec::lp(2.0)).unwrap() > 0.0);
    assert!(r.term("F5").is_none());
}

#[test]
fn zero_profiles_give_a_zero_residual() {
    let g = Grid::new(128, 8.0).unwrap();
    let set = profiles();
    let zero = ProfileSet { f: set.f.scaled(0.0), g: set.without_ring().g, h: set.h.scaled(0.0) };
    let params = AnsatzParams::manual(0.5, 1.2, 1.0, 8, 4.0).unwrap();
    let st = AnsatzState::centered(params, zero, &g).unwrap();
    let specs = [NormSpec::lp(2.0), NormSpec::sobolev(1.0, 2.0, true)];
    let r = st.residual(&g, 0.0, &specs).unwrap();
    assert!(r.norms.iter().all(|(_, _, v)| *v == 0.0));
    assert_eq!(r.sum_defect, 0.0);
}

#[test]
fn grid_guards_reject_small_cells_and_coarse_grids() {
    let st = small_state(&Grid::new(64, 8.0).unwrap());
    assert!(matches!(st.check_support(&Grid::new(64, 1.0).unwrap()), Err(sqglab::SqgError::InvalidGrid(_))));
    assert!(matches!(st.check_resolution(&Grid::new(16, 8.0).unwrap(), 0.0), Err(sqglab::SqgError::Resolution(_))));
    assert!(st.periodization_correction(&Grid::new(64, 8.0).unwrap(), 0.0, 1).is_err());
}

#[test]
fn parameter_validation() {
    assert!(AnsatzParams::manual(0.5, 2.0, 1.0, 8, 4.0).is_err());
    assert!(AnsatzParams::manual(0.5, 1.2, 1.7, 8, 4.0).is_err());
    assert!(AnsatzParams::manual(0.5, 1.2, 1.0, 1, 4.0).is_err());
    assert!(AnsatzParams::manual(0.5, 1.2, 1.0, 8, 0.5).is_err());
    assert!(AnsatzParams::manual(-0.5, 1.2, 1.0, 8, 4.0).is_err());
    assert!(AnsatzParams::asymptotic(0.5, 1.2, 1.0, 32).is_err());
    let p = AnsatzParams::asymptotic(0.5, 1.2, 1.0, 2).unwrap();
    assert!((p.lambda.log2() - 150.0).abs() < 1e-9);
    let q = AnsatzParams::manual(0.5, 1.2, 1.0, 32, 16.0).unwrap();
    assert!((q.horizon - default_horizon(0.5, 1.2, 1.0, 16.0)).abs() == 0.0);
}

#[test]
fn periodization_correction_shrinks_with_a_larger_cell() {
    let st = small_state(&Grid::new(128, 8.0).unwrap());
    let near = st.periodization_correction(&Grid::new(128, 8.0).unwrap(), 0.0, 2).unwrap();
    let far = st.periodization_correction(&Grid::new(256, 16.0).unwrap(), 0.0, 2).unwrap();
    assert!(far.relative() < near.relative(), "{} vs {}", far.relative(), near.relative());
    assert!(near.umax > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn amplitudes_follow_their_power_laws(eps in 0.05f64..2.0, lam in 1.0f64..64.0, n in 2u32..200) {
        let p = AnsatzParams::manual(eps, 1.2, 1.0, n, lam).unwrap();
        prop_assert!((p.amplitude() / (eps * lam.powf(2.0 / 1.2 - 1.0)) - 1.0).abs() < 1e-13);
        prop_assert!((p.ring_amplitude() * n as f64 / p.amplitude() - 1.0).abs() < 1e-13);
        prop_assert!((p.shear_rate() / (p.amplitude() * lam) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn ring_has_n_fold_symmetry_and_core_is_radial(r in 0.3f64..1.5, a in 0.0f64..(2.0 * PI), t in 0.0f64..5e-3) {
        let st = small_state(&Grid::new(64, 8.0).unwrap());
        let c = st.center;
        let at = |r: f64, a: f64| (c.0 + r * a.cos(), c.1 + r * a.sin());
        let step = 2.0 * PI / st.params.n as f64;
        let v = st.eval_theta2(at(r, a), t);
        prop_assert!((st.eval_theta2(at(r, a + step), t) - v).abs() <= 1e-9 * (1.0 + v.abs()));
        // half a period flips the sign of the ring
        prop_assert!((st.eval_theta2(at(r, a + 0.5 * step), t) + v).abs() <= 1e-9 * (1.0 + v.abs()));
        prop_assert!((st.eval_theta1(at(r, a)) - st.eval_theta1(at(r, 0.0))).abs() <= 1e-10 * st.params.amplitude());
    }
}
