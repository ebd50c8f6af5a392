//! The two-scale approximate solution `theta_bar = theta1 + theta2`.
//!
//! With `A = eps lambda^{2/p - beta}` and `rho = lambda r`:
//!
//! * `theta1 = A f(rho)` is a radial core, a steady state of the transport part;
//! * `theta2 = A N^{-beta} g(rho) cos(N alpha - N h2(t, rho))` is a ring carried
//!   by the core's angular velocity, `h2(t, rho) = eps t lambda^{1+2/p-beta} h(rho)`.
//!
//! Point evaluators work in the plane relative to `center`; everything that
//! touches a grid uses the nearest periodic image, which is the wrap-sum as
//! long as the support fits in a quarter of the cell.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SqgError};
use crate::norms::{evaluate, NormSpec};
use crate::numerics::composite_gl;
use crate::profiles::{hankel_values, ProfileSet};
use crate::spectral_core::{
    apply_lambda, forward, inverse, transport, velocity, velocity_owned, Grid, PhysicalField, SpectralField,
    VelocityField,
};

/// Grid points per wavelength of the ring's highest local wavenumber.
pub const POINTS_PER_WAVELENGTH: f64 = 6.0;
/// Largest support radius, as a fraction of the period, accepted by `periodize`.
pub const MAX_SUPPORT_FRACTION: f64 = 0.25;
/// Tolerance of the `F1 + F2 + F3 + F4 = F` assembly check.
pub const SUM_CHECK_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    Asymptotic,
    Manual,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnsatzParams {
    pub eps: f64,
    pub p: f64,
    pub beta: f64,
    #[serde(rename = "N")]
    pub n: u32,
    pub lambda: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub coupling: Coupling,
}

/// `T = lambda^{beta - 1 - 2/p} eps^{-1 - 2/beta}`.
pub fn default_horizon(eps: f64, p: f64, beta: f64, lambda: f64) -> f64 {
    lambda.powf(beta - 1.0 - 2.0 / p) * eps.powf(-1.0 - 2.0 / beta)
}

impl AnsatzParams {
    /// Free `lambda`; the horizon defaults to the coupled formula.
    pub fn manual(eps: f64, p: f64, beta: f64, n: u32, lambda: f64) -> Result<Self> {
        let out = Self {
            eps,
            p,
            beta,
            n,
            lambda,
            horizon: default_horizon(eps, p, beta, lambda),
            coupling: Coupling::Manual,
        };
        out.validate()?;
        Ok(out)
    }

    /// `lambda = N^{100p/(2 - p beta)}`, which overflows for all but tiny `N`.
    pub fn asymptotic(eps: f64, p: f64, beta: f64, n: u32) -> Result<Self> {
        let lambda = (n as f64).powf(100.0 * p / (2.0 - p * beta));
        let horizon = default_horizon(eps, p, beta, lambda);
        if !lambda.is_finite() || !horizon.is_finite() || horizon == 0.0 {
            return Err(SqgError::InvalidParameter(format!(
                "asymptotic coupling gives lambda = {lambda:e}, T = {horizon:e}: not representable"
            )));
        }
        let out = Self { eps, p, beta, n, lambda, horizon, coupling: Coupling::Asymptotic };
        out.validate()?;
        Ok(out)
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SqgError::InvalidParameter(m));
        if !(self.p > 1.0 && self.p < 2.0) {
            return bad(format!("p = {} outside (1, 2)", self.p));
        }
        if !(self.beta >= 1.0 && self.beta < 2.0 / self.p) {
            return bad(format!("beta = {} outside [1, 2/p) with p = {}", self.beta, self.p));
        }
        if self.n < 2 {
            return bad(format!("N = {} must be at least 2", self.n));
        }
        if !(self.lambda >= 1.0 && self.lambda.is_finite()) {
            return bad(format!("lambda = {} must be >= 1", self.lambda));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps = {} must be positive", self.eps));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("T = {} must be positive", self.horizon));
        }
        Ok(())
    }

    /// `A = eps lambda^{2/p - beta}`.
    pub fn amplitude(&self) -> f64 {
        self.eps * self.lambda.powf(2.0 / self.p - self.beta)
    }

    /// Prefactor of `h` in `h2`: `h2(t, rho) = shear_rate * t * h(rho)`.
    pub fn shear_rate(&self) -> f64 {
        self.eps * self.lambda.powf(1.0 + 2.0 / self.p - self.beta)
    }

    /// Amplitude of the ring, `A N^{-beta}`.
    pub fn ring_amplitude(&self) -> f64 {
        self.amplitude() * (self.n as f64).powf(-self.beta)
    }
}

/// Which modes carry the exact coefficients of `theta1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Band {
    /// Every mode except the Nyquist row and column.
    Full,
    /// The disc `|m| <= dealias_fraction * n / 2`.
    Circular,
}

#[derive(Clone, Debug)]
pub struct AnsatzState {
    pub params: AnsatzParams,
    pub profiles: ProfileSet,
    pub t: f64,
    pub center: (f64, f64),
}

/// `psi_{2,s}(t, rho) = c_s^{-1} (rho^{-2} + h2'(rho)^2)^{s/2}` sampled on `supp g`.
#[derive(Clone, Debug)]
pub struct PhaseDenominator {
    pub s: f64,
    pub rho: Vec<f64>,
    pub values: Vec<f64>,
    pub c_s: f64,
}

impl PhaseDenominator {
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug)]
pub struct ResidualBreakdown {
    pub t: f64,
    pub f1: SpectralField,
    pub f2: SpectralField,
    pub f3: SpectralField,
    pub f4: SpectralField,
    /// `||F1+F2+F3+F4 - F||_{L2} / ||F||_{L2}` against the directly assembled `F`.
    pub sum_defect: f64,
    /// `(term, spec, value)`, term in `F1..F4`.
    pub norms: Vec<(String, NormSpec, f64)>,
}

impl ResidualBreakdown {
    pub fn term(&self, name: &str) -> Option<&SpectralField> {
        match name {
            "F1" => Some(&self.f1),
            "F2" => Some(&self.f2),
            "F3" => Some(&self.f3),
            "F4" => Some(&self.f4),
            _ => None,
        }
    }

    pub fn norm(&self, term: &str, spec: &NormSpec) -> Option<f64> {
        self.norms.iter().find(|(t, s, _)| t == term && s == spec).map(|x| x.2)
    }
}

/// Transport identity `d_t theta2 + u[theta1] . grad theta2 = 0` on a grid.
#[derive(Clone, Copy, Debug)]
pub struct TransportDefect {
    pub residual_l2: f64,
    pub dt_l2: f64,
}

impl TransportDefect {
    pub fn relative(&self) -> f64 {
        if self.dt_l2 == 0.0 {
            0.0
        } else {
            self.residual_l2 / self.dt_l2
        }
    }
}

/// Torus velocity of the wrapped ansatz against a zero-padded planar proxy.
#[derive(Clone, Copy, Debug)]
pub struct PeriodizationReport {
    pub lambda: f64,
    /// `sup |u_torus - u_padded|` over the support of `theta_bar`.
    pub correction: f64,
    /// `sup |u_padded|` over the same points.
    pub umax: f64,
    pub pad: usize,
}

impl PeriodizationReport {
    pub fn relative(&self) -> f64 {
        if self.umax == 0.0 {
            0.0
        } else {
            self.correction / self.umax
        }
    }
}

/// Fitted stationary-phase constant.
#[derive(Clone, Debug)]
pub struct CsCalibration {
    pub s: f64,
    pub c_s: f64,
    pub per_n: Vec<(u32, f64)>,
    /// Largest `||E - c M|| / ||E||` over the sweep.
    pub residual: f64,
    /// `(max - min) / mean` of the per-N constants.
    pub spread: f64,
}

/// Average of `|cos|^q` over a period.
fn mean_abs_cos_pow(q: f64) -> f64 {
    libm::tgamma(0.5 * (q + 1.0)) / (PI.sqrt() * libm::tgamma(0.5 * q + 1.0))
}

impl AnsatzState {
    pub fn new(params: AnsatzParams, profiles: ProfileSet, center: (f64, f64)) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, profiles, t: 0.0, center })
    }

    /// Centre at the middle of the periodic cell.
    pub fn centered(params: AnsatzParams, profiles: ProfileSet, grid: &Grid) -> Result<Self> {
        Self::new(params, profiles, (0.5 * grid.l, 0.5 * grid.l))
    }

    pub fn at_time(&self, t: f64) -> Self {
        Self { t, ..self.clone() }
    }

    pub fn with_center(&self, center: (f64, f64)) -> Self {
        Self { center, ..self.clone() }
    }

    fn polar(&self, x: (f64, f64)) -> (f64, f64) {
        let (d1, d2) = (x.0 - self.center.0, x.1 - self.center.1);
        (d1.hypot(d2), d2.atan2(d1))
    }

    fn min_image(&self, grid: &Grid, x: (f64, f64)) -> (f64, f64) {
        let wrap = |d: f64| d - grid.l * (d / grid.l).round();
        let (d1, d2) = (wrap(x.0 - self.center.0), wrap(x.1 - self.center.1));
        (d1.hypot(d2), d2.atan2(d1))
    }

    /// `h2(t, rho)` and its first two `rho`-derivatives.
    pub fn h2(&self, t: f64, rho: f64) -> [f64; 3] {
        let c = self.params.shear_rate() * t;
        let [h, dh, d2h] = self.profiles.h.eval3(rho);
        [c * h, c * dh, c * d2h]
    }

    fn in_ring(&self, rho: f64) -> bool {
        let (a, b) = self.profiles.g.support;
        rho > a && rho < b
    }

    pub fn eval_theta1(&self, x: (f64, f64)) -> f64 {
        let (r, _) = self.polar(x);
        self.theta1_at(r)
    }

    fn theta1_at(&self, r: f64) -> f64 {
        self.params.amplitude() * self.profiles.f.eval(self.params.lambda * r)
    }

    pub fn eval_theta2(&self, x: (f64, f64), t: f64) -> f64 {
        let (r, alpha) = self.polar(x);
        self.theta2_at(r, alpha, t)
    }

    fn phase(&self, alpha: f64, h2: f64) -> f64 {
        let n = self.params.n as f64;
        n * alpha - n * h2
    }

    fn theta2_at(&self, r: f64, alpha: f64, t: f64) -> f64 {
        let rho = self.params.lambda * r;
        if !self.in_ring(rho) {
            return 0.0;
        }
        let h2 = self.h2(t, rho)[0];
        self.params.ring_amplitude() * self.profiles.g.eval(rho) * self.phase(alpha, h2).cos()
    }

    fn dtheta2_at(&self, r: f64, alpha: f64, t: f64) -> f64 {
        let rho = self.params.lambda * r;
        if !self.in_ring(rho) {
            return 0.0;
        }
        let p = &self.params;
        let h = self.profiles.h.h(rho);
        let h2 = p.shear_rate() * t * h;
        p.ring_amplitude() * self.profiles.g.eval(rho) * (p.n as f64) * p.shear_rate() * h * self.phase(alpha, h2).sin()
    }

    /// Largest radius (physical units) where `theta_bar` is nonzero.
    pub fn support_radius(&self) -> f64 {
        let mut rho = self.profiles.f.support.1;
        if !self.profiles.g.is_zero() {
            rho = rho.max(self.profiles.g.support.1);
        }
        rho / self.params.lambda
    }

    /// Largest local wavenumber of `theta2`, `lambda N max (rho^{-2} + h2'^2)^{1/2}`.
    pub fn ring_kmax(&self, t: f64) -> f64 {
        if self.profiles.g.is_zero() {
            return 0.0;
        }
        let (a, b) = self.profiles.g.support;
        let m = (0..=256)
            .map(|i| {
                let rho = a + (b - a) * i as f64 / 256.0;
                let d = self.h2(t, rho)[1];
                (rho.powi(-2) + d * d).sqrt()
            })
            .fold(0.0, f64::max);
        self.params.lambda * self.params.n as f64 * m
    }

    pub fn check_support(&self, grid: &Grid) -> Result<()> {
        let r = self.support_radius();
        if r > MAX_SUPPORT_FRACTION * grid.l {
            return Err(SqgError::InvalidGrid(format!(
                "support radius {r} exceeds {MAX_SUPPORT_FRACTION} L = {}",
                MAX_SUPPORT_FRACTION * grid.l
            )));
        }
        Ok(())
    }

    /// Requires `POINTS_PER_WAVELENGTH` grid points per local wavelength of the ring.
    pub fn check_resolution(&self, grid: &Grid, t: f64) -> Result<()> {
        let k = self.ring_kmax(t);
        let limit = 2.0 * PI / (POINTS_PER_WAVELENGTH * grid.dx());
        if k > limit {
            let need = (POINTS_PER_WAVELENGTH * k * grid.l / (2.0 * PI)).ceil();
            return Err(SqgError::Resolution(format!(
                "ring wavenumber {k:.1} at t = {t} exceeds {limit:.1}; need n >= {need}"
            )));
        }
        Ok(())
    }

    /// Exact Fourier coefficients of the periodized core, via its Hankel transform.
    pub fn theta1_spectral(&self, grid: &Grid, band: Band) -> SpectralField {
        let g = *grid;
        let n = g.n;
        let cut = g.dealias_cutoff();
        let keep = |i: usize, j: usize| -> bool {
            if g.is_nyquist(i) || g.is_nyquist(j) {
                return false;
            }
            match band {
                Band::Full => true,
                Band::Circular => {
                    let (m1, m2) = (g.mode(i) as f64, g.mode(j) as f64);
                    m1.hypot(m2) <= cut
                }
            }
        };
        let key = |i: usize, j: usize| -> u64 {
            let (m1, m2) = (g.mode(i), g.mode(j));
            (m1 * m1 + m2 * m2) as u64
        };
        let mut keys: Vec<u64> = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if keep(i, j) {
                    keys.push(key(i, j));
                }
            }
        }
        keys.sort_unstable();
        keys.dedup();
        let lam = self.params.lambda;
        let ks: Vec<f64> = keys.iter().map(|&q| g.dk() * (q as f64).sqrt() / lam).collect();
        let fhat = hankel_values(&self.profiles.f, &ks);
        let table: HashMap<u64, f64> = keys.into_iter().zip(fhat).collect();
        let scale = self.params.amplitude() / (lam * lam * g.l * g.l);
        let (c1, c2) = self.center;
        let coeffs = (0..g.len())
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                if !keep(i, j) {
                    return Complex64::new(0.0, 0.0);
                }
                let (k1, k2) = g.wavevector(idx);
                scale * table[&key(i, j)] * Complex64::from_polar(1.0, -(k1 * c1 + k2 * c2))
            })
            .collect();
        let mut out = SpectralField::from_coeffs(g, coeffs).expect("sized to grid");
        out.symmetrize();
        out
    }

    /// Point samples of the core at the nearest periodic image.
    pub fn theta1_physical(&self, grid: &Grid) -> PhysicalField {
        PhysicalField::from_fn(*grid, |x1, x2| self.theta1_at(self.min_image(grid, (x1, x2)).0))
    }

    /// Point samples of the ring at time `t`.
    pub fn theta2_physical(&self, grid: &Grid, t: f64) -> PhysicalField {
        PhysicalField::from_fn(*grid, |x1, x2| {
            let (r, a) = self.min_image(grid, (x1, x2));
            self.theta2_at(r, a, t)
        })
    }

    /// Ring spectrum with its (analytically zero) mean removed.
    pub fn theta2_spectral(&self, grid: &Grid, t: f64) -> Result<SpectralField> {
        let mut out = forward(&self.theta2_physical(grid, t))?;
        out.remove_mean();
        Ok(out.with_time(t))
    }

    /// Analytic `d_t theta2` sampled on the grid.
    pub fn dtheta2_physical(&self, grid: &Grid, t: f64) -> PhysicalField {
        PhysicalField::from_fn(*grid, |x1, x2| {
            let (r, a) = self.min_image(grid, (x1, x2));
            self.dtheta2_at(r, a, t)
        })
    }

    /// Wrap-sum of the planar ansatz into the periodic cell at time `t`.
    pub fn periodize(&self, grid: &Grid, t: f64) -> Result<SpectralField> {
        self.check_support(grid)?;
        let f = PhysicalField::from_fn(*grid, |x1, x2| {
            let (r, a) = self.min_image(grid, (x1, x2));
            self.theta1_at(r) + self.theta2_at(r, a, t)
        });
        Ok(forward(&f)?.with_time(t))
    }

    /// Mean-free `theta_bar(t)` for dynamics: exact core coefficients on
    /// `band`, sampled ring, truncated to the dealias mask.
    pub fn dynamic_field(&self, grid: &Grid, t: f64, band: Band) -> Result<SpectralField> {
        self.check_support(grid)?;
        let mut out = self.theta1_spectral(grid, band).add(&self.theta2_spectral(grid, t)?)?;
        out.remove_mean();
        out.dealias();
        Ok(out.with_time(t))
    }

    pub fn phase_denominator(&self, s: f64, t: f64, c_s: f64) -> Result<PhaseDenominator> {
        if !(c_s > 0.0 && c_s.is_finite()) {
            return Err(SqgError::InvalidParameter(format!("c_s = {c_s} must be positive")));
        }
        let (a, b) = self.profiles.g.support;
        let rho: Vec<f64> = (0..=256).map(|i| a + (b - a) * i as f64 / 256.0).collect();
        let values: Vec<f64> = rho.iter().map(|&r| self.psi(s, t, c_s, r)[0]).collect();
        let out = PhaseDenominator { s, rho, values, c_s };
        let m = out.min();
        if !(m > 0.0 && m.is_finite()) {
            return Err(SqgError::Margin(format!("psi_(2,{s}) reaches {m} on supp g")));
        }
        Ok(out)
    }

    /// `psi_{2,s}` and its `rho`-derivative.
    fn psi(&self, s: f64, t: f64, c_s: f64, rho: f64) -> [f64; 2] {
        let [_, d1, d2] = self.h2(t, rho);
        let q = rho.powi(-2) + d1 * d1;
        let v = q.powf(0.5 * s) / c_s;
        let dq = -2.0 * rho.powi(-3) + 2.0 * d1 * d2;
        [v, 0.5 * s * q.powf(0.5 * s - 1.0) * dq / c_s]
    }

    /// Closed form of `grad-perp [ (N lambda)^{-1} theta2 / psi_{2,1} ]`.
    pub fn approx_velocity(&self, grid: &Grid, t: f64, c_s: f64) -> Result<VelocityField> {
        self.phase_denominator(1.0, t, c_s)?;
        let p = &self.params;
        let n = p.n as f64;
        let lam = p.lambda;
        let c = p.ring_amplitude() / (n * lam);
        let eval = |x1: f64, x2: f64| -> (f64, f64) {
            let (r, alpha) = self.min_image(grid, (x1, x2));
            let rho = lam * r;
            if !self.in_ring(rho) {
                return (0.0, 0.0);
            }
            let [g, dg, _] = self.profiles.g.eval3(rho);
            let [psi, dpsi] = self.psi(1.0, t, c_s, rho);
            let [h2, dh2, _] = self.h2(t, rho);
            let q = g / psi;
            let dq = (dg * psi - g * dpsi) / (psi * psi);
            let ph = self.phase(alpha, h2);
            let (sn, cs) = ph.sin_cos();
            let ua = c * lam * (dq * cs + q * n * dh2 * sn);
            let ur = c * q * n * sn / r;
            let (sa, ca) = alpha.sin_cos();
            (ur * ca - ua * sa, ur * sa + ua * ca)
        };
        let u1 = PhysicalField::from_fn(*grid, |x1, x2| eval(x1, x2).0);
        let u2 = PhysicalField::from_fn(*grid, |x1, x2| eval(x1, x2).1);
        Ok(VelocityField { u1, u2 })
    }

    /// Radial amplitudes `(R1, R2, R3)` of the gradient decomposition
    /// `grad theta2 = (R1 cos + R2 sin) e_r + R3 sin e_alpha`.
    fn gradient_amplitudes(&self, t: f64, rho: f64) -> [f64; 3] {
        let p = &self.params;
        let n = p.n as f64;
        let a = p.ring_amplitude() * p.lambda;
        let [g, dg, _] = self.profiles.g.eval3(rho);
        let dh2 = self.h2(t, rho)[1];
        [a * dg, a * n * g * dh2, -a * n * g / rho]
    }

    /// `I1 = A N^{-beta} lambda g' cos`, `I2 = A N^{1-beta} lambda g h2' sin`,
    /// `I3 = -A N^{1-beta} lambda (g/rho) sin`, sampled on the grid; the
    /// gradient is `(I1 + I2) e_r + I3 e_alpha`.
    pub fn gradient_parts(&self, grid: &Grid, t: f64) -> [PhysicalField; 3] {
        let part = |which: usize| {
            PhysicalField::from_fn(*grid, |x1, x2| {
                let (r, alpha) = self.min_image(grid, (x1, x2));
                let rho = self.params.lambda * r;
                if !self.in_ring(rho) {
                    return 0.0;
                }
                let amp = self.gradient_amplitudes(t, rho);
                let ph = self.phase(alpha, self.h2(t, rho)[0]);
                amp[which] * if which == 0 { ph.cos() } else { ph.sin() }
            })
        };
        [part(0), part(1), part(2)]
    }

    /// Closed-form Cartesian gradient `(d1 theta2, d2 theta2)` on the grid.
    pub fn theta2_gradient(&self, grid: &Grid, t: f64) -> (PhysicalField, PhysicalField) {
        let eval = |x1: f64, x2: f64| -> (f64, f64) {
            let (r, alpha) = self.min_image(grid, (x1, x2));
            let rho = self.params.lambda * r;
            if !self.in_ring(rho) {
                return (0.0, 0.0);
            }
            let [r1, r2, r3] = self.gradient_amplitudes(t, rho);
            let (sn, cs) = self.phase(alpha, self.h2(t, rho)[0]).sin_cos();
            let (gr, ga) = (r1 * cs + r2 * sn, r3 * sn);
            let (sa, ca) = alpha.sin_cos();
            (gr * ca - ga * sa, gr * sa + ga * ca)
        };
        (
            PhysicalField::from_fn(*grid, |x1, x2| eval(x1, x2).0),
            PhysicalField::from_fn(*grid, |x1, x2| eval(x1, x2).1),
        )
    }

    /// Exact `L^q` norms of `I1, I2, I3` by radial quadrature; the angular
    /// factor is the mean of `|cos|^q`.
    pub fn gradient_part_norms(&self, t: f64, q: f64) -> [f64; 3] {
        let (a, b) = self.profiles.g.support;
        let (x, w) = composite_gl(a, b, 64, 16);
        let lam2 = self.params.lambda.powi(2);
        let mut out = [0.0; 3];
        for (j, o) in out.iter_mut().enumerate() {
            if q.is_infinite() {
                *o = x.iter().map(|&r| self.gradient_amplitudes(t, r)[j].abs()).fold(0.0, f64::max);
            } else {
                let radial: f64 =
                    x.iter().zip(&w).map(|(&r, w)| w * r * self.gradient_amplitudes(t, r)[j].abs().powf(q)).sum();
                *o = (2.0 * PI * mean_abs_cos_pow(q) * radial / lam2).powf(1.0 / q);
            }
        }
        out
    }

    /// `||theta2(t)||_{Hdot^1} = ||grad theta2||_{L^2}` in closed form.
    pub fn theta2_h1(&self, t: f64) -> f64 {
        let (a, b) = self.profiles.g.support;
        let (x, w) = composite_gl(a, b, 64, 16);
        let s: f64 = x
            .iter()
            .zip(&w)
            .map(|(&r, w)| {
                let [r1, r2, r3] = self.gradient_amplitudes(t, r);
                w * r * (r1 * r1 + r2 * r2 + r3 * r3)
            })
            .sum();
        (PI * s / self.params.lambda.powi(2)).sqrt()
    }

    /// `F1 = u[theta2].grad theta1`, `F2 = u[theta2].grad theta2`,
    /// `F3 = Lambda theta1`, `F4 = Lambda theta2` at time `t`.
    pub fn residual(&self, grid: &Grid, t: f64, specs: &[NormSpec]) -> Result<ResidualBreakdown> {
        self.check_support(grid)?;
        self.check_resolution(grid, t)?;
        let mut th1 = self.theta1_spectral(grid, Band::Full);
        th1.remove_mean();
        let th2 = self.theta2_spectral(grid, t)?;
        let u2 = velocity(&th2)?;
        let f1 = transport(&u2, &th1)?;
        let f2 = transport(&u2, &th2)?;
        let f3 = apply_lambda(1.0, &th1)?;
        let f4 = apply_lambda(1.0, &th2)?;
        let total = th1.add(&th2)?;
        let direct = apply_lambda(1.0, &total)?.add(&transport(&u2, &total)?)?;
        let sum = f1.add(&f2)?.add(&f3)?.add(&f4)?;
        let dn = direct.l2_norm();
        let sum_defect = if dn == 0.0 { sum.l2_norm() } else { sum.sub(&direct)?.l2_norm() / dn };
        let mut norms = Vec::new();
        for (name, f) in [("F1", &f1), ("F2", &f2), ("F3", &f3), ("F4", &f4)] {
            for spec in specs {
                norms.push((name.to_string(), *spec, evaluate(f, spec)?));
            }
        }
        Ok(ResidualBreakdown { t, f1, f2, f3, f4, sum_defect, norms })
    }

    /// Pointwise `d_t theta2 + u[theta1] . grad theta2` with the spectral
    /// velocity of the core and closed-form derivatives of the ring.
    pub fn transport_defect(&self, grid: &Grid, t: f64) -> Result<TransportDefect> {
        self.check_support(grid)?;
        self.check_resolution(grid, t)?;
        let mut th1 = self.theta1_spectral(grid, Band::Full);
        th1.remove_mean();
        let u = velocity(&th1)?;
        let (g1, g2) = self.theta2_gradient(grid, t);
        let dt = self.dtheta2_physical(grid, t);
        let values = (0..grid.len())
            .map(|i| dt.values[i] + u.u1.values[i] * g1.values[i] + u.u2.values[i] * g2.values[i])
            .collect();
        let res = PhysicalField::from_values(*grid, values)?;
        Ok(TransportDefect { residual_l2: res.lp_norm(2.0), dt_l2: dt.lp_norm(2.0) })
    }
}

impl AnsatzState {
    fn velocity_on(&self, grid: &Grid, t: f64) -> Result<VelocityField> {
        let mut th = self.theta2_spectral(grid, t)?;
        let core = self.theta1_spectral(grid, Band::Full);
        th.coeffs.iter_mut().zip(&core.coeffs).for_each(|(a, b)| *a += b);
        drop(core);
        th.remove_mean();
        velocity_owned(th)
    }

    /// Compares `u[theta_bar(t)]` on `grid` with the velocity computed on a
    /// cell `pad` times larger at the same spacing, over the points of the
    /// fundamental cell within the ansatz support.
    pub fn periodization_correction(&self, grid: &Grid, t: f64, pad: usize) -> Result<PeriodizationReport> {
        if pad < 2 || grid.n % 2 != 0 {
            return Err(SqgError::InvalidGrid(format!("padding factor {pad} with n = {}", grid.n)));
        }
        self.check_support(grid)?;
        self.check_resolution(grid, t)?;
        let here = self.with_center((0.5 * grid.l, 0.5 * grid.l));
        let big = Grid::with_dealias(pad * grid.n, pad as f64 * grid.l, grid.dealias_fraction)?;
        let there = self.with_center((0.5 * big.l, 0.5 * big.l));
        let u_t = here.velocity_on(grid, t)?;
        let u_p = there.velocity_on(&big, t)?;
        let (n, nb) = (grid.n, big.n);
        let off = (pad - 1) * n / 2;
        let radius = self.support_radius();
        let (mut correction, mut umax) = (0.0f64, 0.0f64);
        for i in 0..n {
            for j in 0..n {
                let (x1, x2) = grid.point(i * n + j);
                if (x1 - 0.5 * grid.l).hypot(x2 - 0.5 * grid.l) > radius {
                    continue;
                }
                let (a, b) = (i * n + j, (i + off) * nb + j + off);
                let d = (u_t.u1.values[a] - u_p.u1.values[b]).hypot(u_t.u2.values[a] - u_p.u2.values[b]);
                correction = correction.max(d);
                umax = umax.max(u_p.u1.values[b].hypot(u_p.u2.values[b]));
            }
        }
        Ok(PeriodizationReport { lambda: self.params.lambda, correction, umax, pad })
    }
}

/// Per-N least-squares constants `(N, c, relative misfit)` of
/// `Lambda^{-s} theta ~ c N^{-s} theta / (r^{-2} + h'^2)^{s/2}` for
/// `theta = g(r) cos(N alpha - N h(r))`, using the exact spectral `Lambda^{-s}`.
pub fn fit_cs_per_n(s: f64, profiles: &ProfileSet, n_sweep: &[u32], grid: &Grid) -> Result<Vec<(u32, f64, f64)>> {
    let mut out = Vec::new();
    for &n in n_sweep {
        // lambda = eps = 1 makes h2(t) = t h, so t = 1 gives the profile's phase
        let t = 1.0;
        let params = AnsatzParams::manual(1.0, 1.5, 1.0, n, 1.0)?;
        let state = AnsatzState::centered(params, profiles.clone(), grid)?;
        state.check_support(grid)?;
        state.check_resolution(grid, t)?;
        let th = state.theta2_spectral(grid, t)?;
        let exact = inverse(&apply_lambda(-s, &th)?);
        let theta = inverse(&th);
        let nf = n as f64;
        let model = PhysicalField::from_fn(*grid, |x1, x2| {
            let (r, _) = state.min_image(grid, (x1, x2));
            if !state.in_ring(r) {
                return 0.0;
            }
            nf.powf(-s) / state.psi(s, t, 1.0, r)[0]
        });
        let (mut em, mut mm, mut ee) = (0.0, 0.0, 0.0);
        for i in 0..grid.len() {
            let m = model.values[i] * theta.values[i];
            em += exact.values[i] * m;
            mm += m * m;
            ee += exact.values[i] * exact.values[i];
        }
        if mm == 0.0 {
            return Err(SqgError::Fit("ring profile is zero".into()));
        }
        let c = em / mm;
        out.push((n, c, ((ee - 2.0 * c * em + c * c * mm).max(0.0) / ee).sqrt()));
    }
    Ok(out)
}

/// Mean of the per-N constants; errors when any misfit exceeds 10%.
pub fn calibrate_cs(s: f64, profiles: &ProfileSet, n_sweep: &[u32], grid: &Grid) -> Result<CsCalibration> {
    if n_sweep.len() < 3 || n_sweep.iter().any(|&n| n < 8) {
        return Err(SqgError::InvalidParameter(format!(
            "calibration needs at least 3 values of N, each >= 8; got {n_sweep:?}"
        )));
    }
    let fits = fit_cs_per_n(s, profiles, n_sweep, grid)?;
    let residual = fits.iter().map(|x| x.2).fold(0.0, f64::max);
    let per_n: Vec<(u32, f64)> = fits.iter().map(|x| (x.0, x.1)).collect();
    if residual > 0.1 {
        return Err(SqgError::Fit(format!(
            "stationary-phase fit residual {residual:.3} exceeds 10% (c per N: {per_n:?})"
        )));
    }
    let cs: Vec<f64> = per_n.iter().map(|x| x.1).collect();
    let mean = cs.iter().sum::<f64>() / cs.len() as f64;
    let hi = cs.iter().copied().fold(f64::MIN, f64::max);
    let lo = cs.iter().copied().fold(f64::MAX, f64::min);
    Ok(CsCalibration { s, c_s: mean, per_n, residual, spread: (hi - lo) / mean })
}
