//! Radial profiles: the core profile `f`, the ring profile `g`, and the
//! angular velocity `h(r) = w'(r)/r` induced by `f`, where `w = Lambda^{-1} f`
//! on the plane.
//!
//! `h` is computed by two nested Hankel quadratures:
//! `f_hat(k) = 2 pi int f(r) J0(k r) r dr` and
//! `h(r) = -(2 pi)^{-1} int f_hat(k) k^2 phi(k r) dk` with `phi(x) = J1(x)/x`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SqgError};
use crate::numerics::{bessel_j0, composite_gl, phi_derivs};

/// Support of the core profile.
pub const F_SUPPORT: (f64, f64) = (0.5, 2.0);
/// Region kept free of `g` when placing the ring.
pub const G_EXCLUSION: (f64, f64) = (0.25, 2.5);
/// A window point must satisfy `h' >= WINDOW_MARGIN * max_window h'`.
pub const WINDOW_MARGIN: f64 = 1.0 / 32.0;
pub const DEFAULT_R_MAX: f64 = 12.0;
pub const DEFAULT_N_R: usize = 1024;

/// Relative agreement required between a quadrature and its refinement.
const REFINE_TOL: f64 = 1e-6;
/// `f_hat` tail cutoff, relative to its peak, weighted by `k^3`.
const TAIL_TOL: f64 = 1e-9;
/// Relative level below which `f_hat` is treated as rounding noise.
const NOISE_FLOOR: f64 = 1e-14;
/// Smallest sampled radius of `h`.
pub const R_MIN: f64 = 0.125;

/// Piecewise quintic Hermite interpolant on ascending nodes.
#[derive(Clone, Debug)]
pub struct QuinticHermite {
    pub r: Vec<f64>,
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
    pub d2y: Vec<f64>,
    /// Power-law decay exponent used beyond the last node; 0 means zero.
    pub tail_power: i32,
}

impl QuinticHermite {
    fn locate(&self, r: f64) -> usize {
        let n = self.r.len();
        match self.r.binary_search_by(|v| v.partial_cmp(&r).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        }
    }

    /// Value, first and second derivative.
    pub fn eval3(&self, r: f64) -> [f64; 3] {
        let last = *self.r.last().unwrap();
        if r > last {
            if self.tail_power == 0 {
                return [0.0; 3];
            }
            let p = self.tail_power as f64;
            let y = *self.y.last().unwrap() * (last / r).powf(p);
            return [y, -p * y / r, p * (p + 1.0) * y / (r * r)];
        }
        let i = self.locate(r);
        let h = self.r[i + 1] - self.r[i];
        let s = (r - self.r[i]) / h;
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let (d0, d1) = (h * self.dy[i], h * self.dy[i + 1]);
        let (e0, e1) = (h * h * self.d2y[i], h * h * self.d2y[i + 1]);
        let dy = y1 - y0;
        let c = [
            y0,
            d0,
            0.5 * e0,
            10.0 * dy - 6.0 * d0 - 4.0 * d1 - 1.5 * e0 + 0.5 * e1,
            -15.0 * dy + 8.0 * d0 + 7.0 * d1 + 1.5 * e0 - e1,
            6.0 * dy - 3.0 * d0 - 3.0 * d1 - 0.5 * e0 + 0.5 * e1,
        ];
        let v = ((((c[5] * s + c[4]) * s + c[3]) * s + c[2]) * s + c[1]) * s + c[0];
        let v1 = (((5.0 * c[5] * s + 4.0 * c[4]) * s + 3.0 * c[3]) * s + 2.0 * c[2]) * s + c[1];
        let v2 = ((20.0 * c[5] * s + 12.0 * c[4]) * s + 6.0 * c[3]) * s + 2.0 * c[2];
        [v, v1 / h, v2 / (h * h)]
    }
}

#[derive(Clone, Debug)]
pub enum Shape {
    /// `amplitude * exp(-1/(1-t^2))`, `t = (2r-a-b)/(b-a)`.
    Bump { a: f64, b: f64, amplitude: f64 },
    Sampled(QuinticHermite),
}

#[derive(Clone, Debug)]
pub struct RadialProfile {
    pub name: String,
    pub r_samples: Vec<f64>,
    pub values: Vec<f64>,
    pub support: (f64, f64),
    pub smoothness_order: u32,
    pub shape: Shape,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct ProfileSidecar {
    pub name: String,
    pub kind: String,
    pub support: [f64; 2],
    pub smoothness_order: u32,
    pub n_samples: usize,
    pub parameters: HashMap<String, f64>,
}

impl RadialProfile {
    pub fn eval(&self, r: f64) -> f64 {
        self.eval3(r)[0]
    }

    pub fn deriv(&self, r: f64) -> f64 {
        self.eval3(r)[1]
    }

    /// Value, first and second radial derivative.
    pub fn eval3(&self, r: f64) -> [f64; 3] {
        match &self.shape {
            Shape::Bump { a, b, amplitude } => bump3(*a, *b, *amplitude, r),
            Shape::Sampled(q) => q.eval3(r),
        }
    }

    pub fn is_zero(&self) -> bool {
        match &self.shape {
            Shape::Bump { amplitude, .. } => *amplitude == 0.0,
            Shape::Sampled(q) => q.y.iter().all(|v| *v == 0.0),
        }
    }

    pub fn scaled(&self, c: f64) -> RadialProfile {
        let shape = match &self.shape {
            Shape::Bump { a, b, amplitude } => Shape::Bump { a: *a, b: *b, amplitude: amplitude * c },
            Shape::Sampled(q) => Shape::Sampled(QuinticHermite {
                r: q.r.clone(),
                y: q.y.iter().map(|v| v * c).collect(),
                dy: q.dy.iter().map(|v| v * c).collect(),
                d2y: q.d2y.iter().map(|v| v * c).collect(),
                tail_power: q.tail_power,
            }),
        };
        RadialProfile {
            name: self.name.clone(),
            r_samples: self.r_samples.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
            support: self.support,
            smoothness_order: self.smoothness_order,
            shape,
        }
    }

    /// `int_a^b f(r) r^power dr` by composite Gauss-Legendre.
    pub fn radial_moment(&self, power: i32, panels: usize) -> f64 {
        let (a, b) = self.support;
        let (x, w) = composite_gl(a, b, panels, 16);
        x.iter().zip(&w).map(|(r, w)| w * self.eval(*r) * r.powi(power)).sum()
    }

    /// `int_{R^2} f dx`.
    pub fn mass(&self) -> f64 {
        2.0 * PI * self.radial_moment(1, 64)
    }

    pub fn sidecar(&self) -> ProfileSidecar {
        let mut parameters = HashMap::new();
        let kind = match &self.shape {
            Shape::Bump { a, b, amplitude } => {
                parameters.insert("a".into(), *a);
                parameters.insert("b".into(), *b);
                parameters.insert("amplitude".into(), *amplitude);
                "exp_bump"
            }
            Shape::Sampled(q) => {
                parameters.insert("tail_power".into(), q.tail_power as f64);
                "quintic_hermite"
            }
        };
        ProfileSidecar {
            name: self.name.clone(),
            kind: kind.into(),
            support: [self.support.0, self.support.1],
            smoothness_order: self.smoothness_order,
            n_samples: self.r_samples.len(),
            parameters,
        }
    }

    /// Writes `<stem>.csv` with columns (r, value) and `<stem>.json`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join(format!("{stem}.csv")))?;
        w.write_record(["r", "value"])?;
        for (r, v) in self.r_samples.iter().zip(&self.values) {
            w.write_record([format!("{r:.17e}"), format!("{v:.17e}")])?;
        }
        w.flush()?;
        let json = serde_json::to_string_pretty(&self.sidecar())?;
        std::fs::write(dir.join(format!("{stem}.json")), json)?;
        Ok(())
    }
}

fn bump3(a: f64, b: f64, amp: f64, r: f64) -> [f64; 3] {
    let c = 2.0 / (b - a);
    let t = (2.0 * r - a - b) / (b - a);
    if t.abs() >= 1.0 || amp == 0.0 {
        return [0.0; 3];
    }
    let q = 1.0 - t * t;
    let v = amp * (-1.0 / q).exp();
    let p1 = -2.0 * t / (q * q);
    let p2 = -2.0 / (q * q) - 8.0 * t * t / (q * q * q);
    [v, v * p1 * c, v * (p1 * p1 + p2) * c * c]
}

/// Smooth bump `amplitude * exp(-1/(1-t^2))` supported on `[a, b]`.
pub fn make_bump(a: f64, b: f64, amplitude: f64) -> Result<RadialProfile> {
    if !(a > 0.0 && b > a && a.is_finite() && b.is_finite()) {
        return Err(SqgError::InvalidParameter(format!("bump needs 0 < a < b, got a={a}, b={b}")));
    }
    let ns = 513;
    let r_samples: Vec<f64> = (0..ns).map(|i| a + (b - a) * i as f64 / (ns - 1) as f64).collect();
    let values = r_samples.iter().map(|&r| bump3(a, b, amplitude, r)[0]).collect();
    Ok(RadialProfile {
        name: "bump".into(),
        r_samples,
        values,
        support: (a, b),
        smoothness_order: u32::MAX,
        shape: Shape::Bump { a, b, amplitude },
    })
}

/// `h`, its derivative `h'`, and the window where `h' > 0` is used for `g`.
#[derive(Clone, Debug)]
pub struct AngularVelocityProfile {
    pub base: RadialProfile,
    pub derivative: RadialProfile,
    pub positivity_window: Option<(f64, f64)>,
    /// `int f dx` of the generating profile.
    pub mass: f64,
    /// `int f |x|^2 dx / int f dx`.
    pub second_moment: f64,
}

impl AngularVelocityProfile {
    pub fn h(&self, r: f64) -> f64 {
        self.base.eval(r)
    }

    pub fn dh(&self, r: f64) -> f64 {
        self.derivative.eval(r)
    }

    /// `(h, h', h'')` at `r`.
    pub fn eval3(&self, r: f64) -> [f64; 3] {
        let d = self.derivative.eval3(r);
        [self.base.eval(r), d[0], d[1]]
    }

    /// Two-term far-field law `-M/(2 pi r^3) (1 + 3<rho^2>/(4 r^2))`.
    pub fn far_field(&self, r: f64) -> f64 {
        -self.mass / (2.0 * PI * r.powi(3)) * (1.0 + 0.75 * self.second_moment / (r * r))
    }

    pub fn scaled(&self, c: f64) -> AngularVelocityProfile {
        AngularVelocityProfile {
            base: self.base.scaled(c),
            derivative: self.derivative.scaled(c),
            positivity_window: None,
            mass: self.mass * c,
            second_moment: self.second_moment,
        }
    }

    pub fn r_range(&self) -> (f64, f64) {
        (self.base.r_samples[0], *self.base.r_samples.last().unwrap())
    }
}

struct HankelRule {
    k: Vec<f64>,
    /// quadrature weight times `f_hat(k)`
    wf: Vec<f64>,
}

fn fhat_at(k: f64, rho: &[f64], wrho: &[f64]) -> f64 {
    2.0 * PI * rho.iter().zip(wrho).map(|(r, w)| w * bessel_j0(k * r)).sum::<f64>()
}

/// Radial rule resolving `J0(k r)` for `k <= kmax`. Bumps vanish to all
/// orders at their edges, so the trapezoid rule is spectrally accurate there.
fn radial_rule(f: &RadialProfile, kmax: f64) -> (Vec<f64>, Vec<f64>) {
    let (a, b) = f.support;
    let (x, w) = match f.shape {
        Shape::Bump { .. } => {
            let m = ((1.5 * kmax * (b - a) / PI).ceil() as usize).max(256);
            let h = (b - a) / m as f64;
            ((1..m).map(|i| a + h * i as f64).collect(), vec![h; m - 1])
        }
        Shape::Sampled(_) => {
            let panels = ((kmax * (b - a) / (4.0 * PI)).ceil() as usize).max(16);
            composite_gl(a, b, panels, 16)
        }
    };
    let wf = x.iter().zip(&w).map(|(r, w)| w * f.eval(*r) * r).collect();
    (x, wf)
}

/// Two-dimensional Fourier transform `f_hat(k) = 2 pi int f(r) J0(k r) r dr`
/// of a radial profile at each `k`.
pub fn hankel_values(f: &RadialProfile, ks: &[f64]) -> Vec<f64> {
    let kmax = ks.iter().fold(1.0_f64, |m, k| m.max(k.abs()));
    let (rho, wrho) = radial_rule(f, kmax);
    ks.par_iter().map(|&k| fhat_at(k, &rho, &wrho)).collect()
}

fn tail_cutoff(f: &RadialProfile) -> f64 {
    let scan_max = 3000.0;
    let (rho, wrho) = radial_rule(f, scan_max);
    let ks: Vec<f64> = (0..=scan_max as usize).map(|i| i as f64).collect();
    let vals: Vec<f64> = ks.par_iter().map(|&k| fhat_at(k, &rho, &wrho)).collect();
    let peak = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut kmax = 50.0_f64;
    for (k, v) in ks.iter().zip(&vals) {
        let floor = (TAIL_TOL * peak / k.max(1.0).powi(3)).max(NOISE_FLOOR * peak);
        if v.abs() > floor {
            kmax = kmax.max(*k + 5.0);
        }
    }
    kmax
}

fn hankel_rule(f: &RadialProfile, kmax: f64, panel_width: f64) -> HankelRule {
    let (rho, wrho) = radial_rule(f, kmax);
    let panels = (kmax / panel_width).ceil() as usize;
    let (k, w) = composite_gl(0.0, panels as f64 * panel_width, panels, 16);
    let wf = k.par_iter().zip(&w).map(|(k, w)| w * fhat_at(*k, &rho, &wrho)).collect();
    HankelRule { k, wf }
}

/// `(h, h', h'')` at `r` from a Hankel rule.
fn h_derivs(rule: &HankelRule, r: f64) -> [f64; 3] {
    let mut acc = [0.0; 3];
    for (k, wf) in rule.k.iter().zip(&rule.wf) {
        let p = phi_derivs(k * r);
        let k2 = k * k;
        acc[0] += wf * k2 * p[0];
        acc[1] += wf * k2 * k * p[1];
        acc[2] += wf * k2 * k2 * p[2];
    }
    let c = -1.0 / (2.0 * PI);
    [c * acc[0], c * acc[1], c * acc[2]]
}

/// Computes `h = w'/r` for `w = Lambda^{-1} f` on `R^2` at `n_r` uniform
/// samples of `[R_MIN, r_max]`.
pub fn compute_h(f: &RadialProfile, r_max: f64, n_r: usize) -> Result<AngularVelocityProfile> {
    if r_max < 8.0 || n_r < 1024 {
        return Err(SqgError::InvalidParameter(format!(
            "compute_h needs r_max >= 8 and n_r >= 1024, got {r_max}, {n_r}"
        )));
    }
    if f.support.1 >= r_max {
        return Err(SqgError::InvalidParameter("support of f must lie below r_max".into()));
    }
    let rs: Vec<f64> =
        (0..n_r).map(|i| R_MIN + (r_max - R_MIN) * i as f64 / (n_r - 1) as f64).collect();
    if f.is_zero() {
        return Ok(zero_h(rs));
    }
    let kmax = tail_cutoff(f);
    let width = (12.0 / (r_max + f.support.1)).min(1.0);
    let rule = hankel_rule(f, kmax, width);
    let vals: Vec<[f64; 3]> = rs.par_iter().map(|&r| h_derivs(&rule, r)).collect();

    // successive refinement on a subsample
    let fine = hankel_rule(f, 1.3 * kmax, 0.5 * width);
    let hmax = vals.iter().fold(0.0_f64, |m, v| m.max(v[0].abs()));
    let dmax = vals.iter().fold(0.0_f64, |m, v| m.max(v[1].abs()));
    let check: Vec<usize> = (0..n_r).step_by(64).chain(std::iter::once(n_r - 1)).collect();
    for &i in &check {
        let v = h_derivs(&fine, rs[i]);
        let e0 = (v[0] - vals[i][0]).abs() / hmax;
        let e1 = (v[1] - vals[i][1]).abs() / dmax;
        if e0 > REFINE_TOL || e1 > REFINE_TOL {
            return Err(SqgError::Quadrature(format!(
                "refinement changed h by {e0:e} and h' by {e1:e} (relative) at r = {}",
                rs[i]
            )));
        }
    }

    let h: Vec<f64> = vals.iter().map(|v| v[0]).collect();
    let dh: Vec<f64> = vals.iter().map(|v| v[1]).collect();
    let d2h: Vec<f64> = vals.iter().map(|v| v[2]).collect();
    let d3h = differentiate(&rs, &d2h);
    let (rho, wrho) = radial_rule(f, 100.0);
    let mass = fhat_at(0.0, &rho, &wrho);
    let m2 = 2.0 * PI * rho.iter().zip(&wrho).map(|(r, w)| w * r * r).sum::<f64>() / mass;
    Ok(AngularVelocityProfile {
        base: sampled("h", &rs, h, dh.clone(), d2h.clone(), 3),
        derivative: sampled("dh", &rs, dh, d2h, d3h, 4),
        positivity_window: None,
        mass,
        second_moment: m2,
    })
}

fn differentiate(r: &[f64], y: &[f64]) -> Vec<f64> {
    let n = r.len();
    (0..n)
        .map(|i| {
            let (a, b) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            (y[b] - y[a]) / (r[b] - r[a])
        })
        .collect()
}

fn sampled(name: &str, r: &[f64], y: Vec<f64>, dy: Vec<f64>, d2y: Vec<f64>, tail: i32) -> RadialProfile {
    let support = (r[0], *r.last().unwrap());
    RadialProfile {
        name: name.into(),
        r_samples: r.to_vec(),
        values: y.clone(),
        support,
        smoothness_order: 2,
        shape: Shape::Sampled(QuinticHermite { r: r.to_vec(), y, dy, d2y, tail_power: tail }),
    }
}

fn zero_h(rs: Vec<f64>) -> AngularVelocityProfile {
    let z = vec![0.0; rs.len()];
    AngularVelocityProfile {
        base: sampled("h", &rs, z.clone(), z.clone(), z.clone(), 3),
        derivative: sampled("dh", &rs, z.clone(), z.clone(), z, 4),
        positivity_window: None,
        mass: 0.0,
        second_moment: 0.0,
    }
}

/// Window with the default margin.
pub fn find_positivity_window(h: &AngularVelocityProfile, exclusion: (f64, f64)) -> Result<(f64, f64)> {
    find_positivity_window_with_margin(h, exclusion, WINDOW_MARGIN)
}

/// Picks the outermost run of samples outside `exclusion` with `h' > 0`,
/// starts at its inner end `r1` and extends `r2` while
/// `h'(r) >= margin * max_{[r1, r]} h'`.
pub fn find_positivity_window_with_margin(
    h: &AngularVelocityProfile,
    exclusion: (f64, f64),
    margin: f64,
) -> Result<(f64, f64)> {
    let rs = &h.derivative.r_samples;
    let d = &h.derivative.values;
    let allowed: Vec<bool> = rs
        .iter()
        .zip(d)
        .map(|(r, v)| (*r < exclusion.0 || *r > exclusion.1) && *v > 0.0)
        .collect();
    if !rs.iter().any(|r| *r < exclusion.0 || *r > exclusion.1) {
        return Err(SqgError::NoWindow("exclusion covers the whole sample range".into()));
    }
    let last = match allowed.iter().rposition(|a| *a) {
        Some(i) => i,
        None => return Err(SqgError::NoWindow("h' is nowhere positive outside the exclusion".into())),
    };
    let mut start = last;
    while start > 0 && allowed[start - 1] {
        start -= 1;
    }
    let mut peak = d[start];
    let mut end = start;
    for i in start..=last {
        peak = peak.max(d[i]);
        if d[i] < margin * peak {
            break;
        }
        end = i;
    }
    if end == start {
        return Err(SqgError::NoWindow(format!(
            "window at r = {} collapses under margin {margin}",
            rs[start]
        )));
    }
    Ok((rs[start], rs[end]))
}

/// Unit-amplitude `h` for the default core, shared across callers.
pub fn unit_core_h(r_max: f64, n_r: usize) -> Result<Arc<AngularVelocityProfile>> {
    type Cache = Mutex<HashMap<(u64, usize), Arc<AngularVelocityProfile>>>;
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (r_max.to_bits(), n_r);
    if let Some(h) = cache.lock().unwrap().get(&key) {
        return Ok(h.clone());
    }
    let f = make_bump(F_SUPPORT.0, F_SUPPORT.1, 1.0)?;
    let h = Arc::new(compute_h(&f, r_max, n_r)?);
    cache.lock().unwrap().insert(key, h.clone());
    Ok(h)
}

/// The profile triple of the construction.
#[derive(Clone, Debug)]
pub struct ProfileSet {
    pub f: RadialProfile,
    pub g: RadialProfile,
    pub h: AngularVelocityProfile,
}

impl ProfileSet {
    /// Same triple with `g` rescaled to `amplitude`.
    pub fn with_g_amplitude(&self, amplitude: f64) -> ProfileSet {
        let mut out = self.clone();
        if let Shape::Bump { a, b, .. } = self.g.shape {
            out.g = make_bump(a, b, amplitude).expect("existing support is valid");
        }
        out
    }

    /// Radial-only control: `g = 0`.
    pub fn without_ring(&self) -> ProfileSet {
        self.with_g_amplitude(0.0)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        self.f.write(dir, "profile_f")?;
        self.g.write(dir, "profile_g")?;
        self.h.base.write(dir, "profile_h")?;
        self.h.derivative.write(dir, "profile_dh")
    }
}

/// `f` = bump on `[1/2, 2]`, `h` from `f`, `g` = bump centred in the
/// positivity window with half its width; both bumps carry `seed_amplitude`.
pub fn assemble_profiles(seed_amplitude: f64) -> Result<ProfileSet> {
    if !(seed_amplitude > 0.0 && seed_amplitude.is_finite()) {
        return Err(SqgError::NoWindow(format!(
            "seed amplitude {seed_amplitude} gives no positive far-field h'"
        )));
    }
    let unit = unit_core_h(DEFAULT_R_MAX, DEFAULT_N_R)?;
    let mut h = unit.scaled(seed_amplitude);
    let window = find_positivity_window(&h, G_EXCLUSION)?;
    h.positivity_window = Some(window);
    let f = make_bump(F_SUPPORT.0, F_SUPPORT.1, seed_amplitude)?;
    let c = 0.5 * (window.0 + window.1);
    let q = 0.25 * (window.1 - window.0);
    let g = make_bump(c - q, c + q, seed_amplitude)?;
    Ok(ProfileSet { f, g, h })
}
