//! Periodic grid, 2-D FFTs and Fourier multipliers.
//!
//! Convention: a real field on the torus `[0, L)^2` is represented as
//! `f(x) = sum_m c(m) exp(i k_m . x)` with `k_m = 2 pi m / L`, so the forward
//! transform is the unnormalized DFT divided by `n^2`. Arrays are row-major
//! with the first index running over `x1` (or `m1`).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Result, SqgError};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"SQGF";
pub const SNAPSHOT_VERSION: u32 = 1;
pub const SNAPSHOT_HEADER_LEN: usize = 32;

/// Relative size below which a mean coefficient counts as zero.
const MEAN_ZERO_TOL: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub n: usize,
    pub l: f64,
    pub dealias_fraction: f64,
}

impl Grid {
    pub fn new(n: usize, l: f64) -> Result<Self> {
        Self::with_dealias(n, l, 2.0 / 3.0)
    }

    pub fn with_dealias(n: usize, l: f64, dealias_fraction: f64) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(SqgError::InvalidGrid(format!(
                "n = {n} must be a power of two and at least 8"
            )));
        }
        if !(l.is_finite() && l > 0.0) {
            return Err(SqgError::InvalidGrid(format!("L = {l} must be positive")));
        }
        if !(dealias_fraction > 0.0 && dealias_fraction <= 1.0) {
            return Err(SqgError::InvalidGrid(format!(
                "dealias_fraction = {dealias_fraction} outside (0, 1]"
            )));
        }
        Ok(Self { n, l, dealias_fraction })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.l / self.n as f64
    }

    #[inline]
    pub fn dk(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.l
    }

    /// Cell area used as the collocation quadrature weight.
    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dx()
    }

    /// Signed mode number of array position `j` along one axis, in `[-n/2, n/2)`.
    #[inline]
    pub fn mode(&self, j: usize) -> i64 {
        let n = self.n as i64;
        let j = j as i64;
        if j < n / 2 {
            j
        } else {
            j - n
        }
    }

    /// Array position of signed mode `m`.
    #[inline]
    pub fn position(&self, m: i64) -> usize {
        m.rem_euclid(self.n as i64) as usize
    }

    #[inline]
    pub fn is_nyquist(&self, j: usize) -> bool {
        j == self.n / 2
    }

    /// Wavevector of flat index `idx`.
    #[inline]
    pub fn wavevector(&self, idx: usize) -> (f64, f64) {
        let dk = self.dk();
        (
            dk * self.mode(idx / self.n) as f64,
            dk * self.mode(idx % self.n) as f64,
        )
    }

    /// Wavevector with Nyquist components set to zero, for odd multipliers
    /// such as derivatives (keeps the output real).
    #[inline]
    pub fn wavevector_odd(&self, idx: usize) -> (f64, f64) {
        let (i, j) = (idx / self.n, idx % self.n);
        let (k1, k2) = self.wavevector(idx);
        (
            if self.is_nyquist(i) { 0.0 } else { k1 },
            if self.is_nyquist(j) { 0.0 } else { k2 },
        )
    }

    #[inline]
    pub fn kmag(&self, idx: usize) -> f64 {
        let (k1, k2) = self.wavevector(idx);
        k1.hypot(k2)
    }

    /// Flat index of the mode `-m` for the mode at `idx`.
    #[inline]
    pub fn conj_index(&self, idx: usize) -> usize {
        let (i, j) = (idx / self.n, idx % self.n);
        ((self.n - i) % self.n) * self.n + (self.n - j) % self.n
    }

    /// Largest retained |m| per axis.
    pub fn dealias_cutoff(&self) -> f64 {
        self.dealias_fraction * self.n as f64 / 2.0
    }

    #[inline]
    pub fn retained(&self, idx: usize) -> bool {
        let c = self.dealias_cutoff();
        let m1 = self.mode(idx / self.n).unsigned_abs() as f64;
        let m2 = self.mode(idx % self.n).unsigned_abs() as f64;
        m1 <= c && m2 <= c
    }

    /// Largest |k| retained in every direction, i.e. the radius of the
    /// inscribed disc of the dealias square.
    pub fn dealias_kmax(&self) -> f64 {
        self.dk() * self.dealias_cutoff().floor()
    }

    /// Collocation point of flat index `idx`.
    #[inline]
    pub fn point(&self, idx: usize) -> (f64, f64) {
        let dx = self.dx();
        ((idx / self.n) as f64 * dx, (idx % self.n) as f64 * dx)
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self.n != other.n || self.l != other.l {
            return Err(SqgError::GridMismatch(format!(
                "(n={}, L={}) vs (n={}, L={})",
                self.n, self.l, other.n, other.l
            )));
        }
        Ok(())
    }
}

struct Plans {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Arc<Plans> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Plans>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plans {
                fwd: planner.plan_fft_forward(n),
                inv: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

fn fft_rows(data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>, n: usize) {
    let rows_per_task = (n / 8).max(1);
    data.par_chunks_mut(n * rows_per_task).for_each(|chunk| {
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(chunk, &mut scratch);
    });
}

/// Unnormalized 2-D FFT in place. `inverse` selects the `+i` sign.
pub(crate) fn fft2(data: &mut Vec<Complex64>, n: usize, inverse: bool) {
    let p = plans(n);
    let fft = if inverse { &p.inv } else { &p.fwd };
    fft_rows(data, fft, n);
    let mut tmp = vec![Complex64::new(0.0, 0.0); n * n];
    transpose::transpose(data, &mut tmp, n, n);
    fft_rows(&mut tmp, fft, n);
    transpose::transpose(&tmp, data, n, n);
}

#[derive(Clone, Debug)]
pub struct PhysicalField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl PhysicalField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(SqgError::GridMismatch(format!(
                "{} values for an {}x{} grid",
                values.len(),
                grid.n,
                grid.n
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x1, x2)` at the collocation points, in parallel over rows.
    pub fn from_fn<F>(grid: Grid, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Sync,
    {
        let n = grid.n;
        let dx = grid.dx();
        let mut values = vec![0.0; grid.len()];
        values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            let x1 = i as f64 * dx;
            for (j, v) in row.iter_mut().enumerate() {
                *v = f(x1, j as f64 * dx);
            }
        });
        Self { grid, values }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Collocation L^p norm with uniform cell weights; `p = inf` gives the max.
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.max_abs();
        }
        let w = self.grid.cell_area();
        if p == 2.0 {
            return (self.values.iter().map(|v| v * v).sum::<f64>() * w).sqrt();
        }
        let s: f64 = self.values.iter().map(|v| v.abs().powf(p)).sum();
        (s * w).powf(1.0 / p)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn sub(&self, other: &PhysicalField) -> Result<PhysicalField> {
        self.grid.check_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(PhysicalField { grid: self.grid, values })
    }

    pub fn add_assign(&mut self, other: &PhysicalField) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v *= c);
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(SqgError::NonFinite { index, value: self.values[index] }),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SpectralField {
    pub grid: Grid,
    pub coeffs: Vec<Complex64>,
    pub time_tag: Option<f64>,
}

impl SpectralField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, coeffs: vec![Complex64::new(0.0, 0.0); grid.len()], time_tag: None }
    }

    pub fn from_coeffs(grid: Grid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(SqgError::GridMismatch(format!(
                "{} coefficients for an {}x{} grid",
                coeffs.len(),
                grid.n,
                grid.n
            )));
        }
        Ok(Self { grid, coeffs, time_tag: None })
    }

    /// Builds coefficients from a function of the wavevector. The caller is
    /// responsible for Hermitian symmetry; `symmetrize` enforces it.
    pub fn from_modes<F>(grid: Grid, f: F) -> Self
    where
        F: Fn(f64, f64) -> Complex64 + Sync,
    {
        let coeffs = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let (k1, k2) = grid.wavevector(idx);
                f(k1, k2)
            })
            .collect();
        Self { grid, coeffs, time_tag: None }
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time_tag = Some(t);
        self
    }

    #[inline]
    pub fn mean_coeff(&self) -> Complex64 {
        self.coeffs[0]
    }

    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.norm()))
    }

    /// True when the zero mode is negligible relative to the largest mode.
    pub fn is_mean_zero(&self) -> bool {
        let c0 = self.coeffs[0].norm();
        c0 == 0.0 || c0 <= MEAN_ZERO_TOL * self.max_coeff()
    }

    fn require_mean_zero(&self) -> Result<()> {
        if self.is_mean_zero() {
            Ok(())
        } else {
            Err(SqgError::NonzeroMean { re: self.coeffs[0].re, im: self.coeffs[0].im })
        }
    }

    /// Largest |c(m) - conj c(-m)| over all modes.
    pub fn hermitian_defect(&self) -> f64 {
        let g = &self.grid;
        (0..g.len())
            .map(|idx| (self.coeffs[idx] - self.coeffs[g.conj_index(idx)].conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Projects onto the Hermitian-symmetric subspace.
    pub fn symmetrize(&mut self) {
        let g = self.grid;
        let old = self.coeffs.clone();
        for (idx, c) in self.coeffs.iter_mut().enumerate() {
            *c = 0.5 * (old[idx] + old[g.conj_index(idx)].conj());
        }
    }

    /// `(sum |c|^2 L^2)^(1/2)`, the L^2 norm by Parseval.
    pub fn l2_norm(&self) -> f64 {
        (self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt() * self.grid.l
    }

    pub fn scaled(&self, a: f64) -> SpectralField {
        let coeffs = self.coeffs.iter().map(|c| c * a).collect();
        SpectralField { grid: self.grid, coeffs, time_tag: self.time_tag }
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        self.grid.check_same(&other.grid)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Ok(SpectralField { grid: self.grid, coeffs, time_tag: self.time_tag })
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        self.grid.check_same(&other.grid)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(SpectralField { grid: self.grid, coeffs, time_tag: self.time_tag })
    }

    /// Multiplies each mode by `m(k1, k2)`; the multiplier must be
    /// conjugate-symmetric for the output to stay real.
    pub fn map_modes<F>(&self, m: F) -> SpectralField
    where
        F: Fn(f64, f64) -> Complex64 + Sync,
    {
        let g = self.grid;
        let coeffs = self
            .coeffs
            .par_iter()
            .enumerate()
            .map(|(idx, c)| {
                let (k1, k2) = g.wavevector(idx);
                c * m(k1, k2)
            })
            .collect();
        SpectralField { grid: g, coeffs, time_tag: self.time_tag }
    }

    /// Zeroes modes outside the dealias mask.
    pub fn dealias(&mut self) {
        let g = self.grid;
        for (idx, c) in self.coeffs.iter_mut().enumerate() {
            if !g.retained(idx) {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Sets the zero mode to 0.
    pub fn remove_mean(&mut self) {
        self.coeffs[0] = Complex64::new(0.0, 0.0);
    }

    /// Translation `f(x) -> f(x - d)`.
    pub fn translate(&self, d1: f64, d2: f64) -> SpectralField {
        let g = self.grid;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| {
                let (k1, k2) = g.wavevector_odd(idx);
                c * Complex64::from_polar(1.0, -(k1 * d1 + k2 * d2))
            })
            .collect();
        SpectralField { grid: g, coeffs, time_tag: self.time_tag }
    }
}

/// Forward transform with Hermitian symmetry enforced exactly.
pub fn forward(f: &PhysicalField) -> Result<SpectralField> {
    f.check_finite()?;
    let g = f.grid;
    let mut buf: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(&mut buf, g.n, false);
    let inv = 1.0 / g.len() as f64;
    let mut out = SpectralField { grid: g, coeffs: buf, time_tag: None };
    out.coeffs.iter_mut().for_each(|c| *c *= inv);
    out.symmetrize();
    Ok(out)
}

/// Forward transforms of two real fields with a single complex FFT.
pub fn forward_pair(a: &PhysicalField, b: &PhysicalField) -> Result<(SpectralField, SpectralField)> {
    a.grid.check_same(&b.grid)?;
    a.check_finite()?;
    b.check_finite()?;
    let g = a.grid;
    let mut z: Vec<Complex64> =
        a.values.iter().zip(&b.values).map(|(&x, &y)| Complex64::new(x, y)).collect();
    fft2(&mut z, g.n, false);
    let inv = 1.0 / g.len() as f64;
    let (ca, cb) = split_pair(&z, &g, inv);
    Ok((
        SpectralField { grid: g, coeffs: ca, time_tag: None },
        SpectralField { grid: g, coeffs: cb, time_tag: None },
    ))
}

fn split_pair(z: &[Complex64], g: &Grid, scale: f64) -> (Vec<Complex64>, Vec<Complex64>) {
    let half = 0.5 * scale;
    let mi = Complex64::new(0.0, -half);
    let mut ca = vec![Complex64::new(0.0, 0.0); z.len()];
    let mut cb = vec![Complex64::new(0.0, 0.0); z.len()];
    for idx in 0..z.len() {
        let zc = z[g.conj_index(idx)].conj();
        ca[idx] = (z[idx] + zc) * half;
        cb[idx] = (z[idx] - zc) * mi;
    }
    (ca, cb)
}

/// Inverse transform; the imaginary residue of a non-Hermitian input is dropped.
pub fn inverse(f: &SpectralField) -> PhysicalField {
    let g = f.grid;
    let mut buf = f.coeffs.clone();
    fft2(&mut buf, g.n, true);
    PhysicalField { grid: g, values: buf.iter().map(|c| c.re).collect() }
}

/// Inverse transforms of two Hermitian spectra with a single complex FFT.
pub fn inverse_pair(a: &SpectralField, b: &SpectralField) -> Result<(PhysicalField, PhysicalField)> {
    a.grid.check_same(&b.grid)?;
    let g = a.grid;
    let i = Complex64::new(0.0, 1.0);
    let mut buf: Vec<Complex64> = a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x + i * y).collect();
    fft2(&mut buf, g.n, true);
    Ok((
        PhysicalField { grid: g, values: buf.iter().map(|c| c.re).collect() },
        PhysicalField { grid: g, values: buf.iter().map(|c| c.im).collect() },
    ))
}

/// `Lambda^s = (-Laplacian)^(s/2)`, multiplier `|k|^s`.
pub fn apply_lambda(s: f64, f: &SpectralField) -> Result<SpectralField> {
    if s < 0.0 {
        f.require_mean_zero()?;
    }
    if s == 0.0 {
        return Ok(f.clone());
    }
    let g = f.grid;
    let coeffs = f
        .coeffs
        .par_iter()
        .enumerate()
        .map(|(idx, c)| if idx == 0 { Complex64::new(0.0, 0.0) } else { c * g.kmag(idx).powf(s) })
        .collect();
    Ok(SpectralField { grid: g, coeffs, time_tag: f.time_tag })
}

/// Bessel potential `J^s = (1 - Laplacian)^(s/2)`.
pub fn apply_bessel(s: f64, f: &SpectralField) -> SpectralField {
    let g = f.grid;
    let coeffs = f
        .coeffs
        .par_iter()
        .enumerate()
        .map(|(idx, c)| {
            let k2 = g.kmag(idx).powi(2);
            c * (1.0 + k2).powf(0.5 * s)
        })
        .collect();
    SpectralField { grid: g, coeffs, time_tag: f.time_tag }
}

/// Spectral partial derivatives `(d1 f, d2 f)` as spectra.
pub fn gradient_spectral(f: &SpectralField) -> (SpectralField, SpectralField) {
    let g = f.grid;
    let i = Complex64::new(0.0, 1.0);
    let mut a = SpectralField::zeros(g);
    let mut b = SpectralField::zeros(g);
    for (idx, c) in f.coeffs.iter().enumerate() {
        let (k1, k2) = g.wavevector_odd(idx);
        a.coeffs[idx] = i * k1 * c;
        b.coeffs[idx] = i * k2 * c;
    }
    (a, b)
}

/// Physical gradient `(d1 f, d2 f)`.
pub fn gradient(f: &SpectralField) -> (PhysicalField, PhysicalField) {
    let (a, b) = gradient_spectral(f);
    inverse_pair(&a, &b).expect("same grid")
}

#[derive(Clone, Debug)]
pub struct VelocityField {
    pub u1: PhysicalField,
    pub u2: PhysicalField,
}

impl VelocityField {
    pub fn max_speed(&self) -> f64 {
        self.u1
            .values
            .iter()
            .zip(&self.u2.values)
            .fold(0.0_f64, |m, (a, b)| m.max(a.hypot(*b)))
    }

    /// Spectral divergence relative to the velocity's L^2 size.
    pub fn divergence_relative(&self) -> Result<f64> {
        let g = self.u1.grid;
        let (a, b) = forward_pair(&self.u1, &self.u2)?;
        let mut num = 0.0;
        let mut den = 0.0;
        for idx in 0..g.len() {
            let (k1, k2) = g.wavevector_odd(idx);
            let d = Complex64::new(0.0, 1.0) * (k1 * a.coeffs[idx] + k2 * b.coeffs[idx]);
            num += d.norm_sqr();
            den += g.kmag(idx).powi(2) * (a.coeffs[idx].norm_sqr() + b.coeffs[idx].norm_sqr());
        }
        Ok(if den == 0.0 { 0.0 } else { (num / den).sqrt() })
    }
}

/// Velocity spectra `u_hat = i(-k2, k1)/|k| theta_hat`.
pub fn velocity_spectral(theta: &SpectralField) -> Result<(SpectralField, SpectralField)> {
    theta.require_mean_zero()?;
    let g = theta.grid;
    let i = Complex64::new(0.0, 1.0);
    let mut a = SpectralField::zeros(g);
    let mut b = SpectralField::zeros(g);
    for (idx, c) in theta.coeffs.iter().enumerate().skip(1) {
        let (k1, k2) = g.wavevector_odd(idx);
        let inv = 1.0 / g.kmag(idx);
        a.coeffs[idx] = -i * k2 * inv * c;
        b.coeffs[idx] = i * k1 * inv * c;
    }
    Ok((a, b))
}

/// `u = grad-perp Lambda^{-1} theta` in physical space.
pub fn velocity(theta: &SpectralField) -> Result<VelocityField> {
    theta.require_mean_zero()?;
    velocity_owned(theta.clone())
}

/// As [`velocity`], reusing the coefficient buffer of `theta` so that only
/// one extra full-size complex array is live during the transform.
pub fn velocity_owned(theta: SpectralField) -> Result<VelocityField> {
    theta.require_mean_zero()?;
    let g = theta.grid;
    let mut buf = theta.coeffs;
    // Packs u1_hat + i u2_hat = -(k1 + i k2)/|k| theta_hat into one spectrum.
    buf.par_iter_mut().enumerate().skip(1).for_each(|(idx, c)| {
        let (k1, k2) = g.wavevector_odd(idx);
        *c *= -Complex64::new(k1, k2) / g.kmag(idx);
    });
    buf[0] = Complex64::new(0.0, 0.0);
    fft2(&mut buf, g.n, true);
    let u1 = PhysicalField { grid: g, values: buf.iter().map(|c| c.re).collect() };
    let u2 = PhysicalField { grid: g, values: buf.iter().map(|c| c.im).collect() };
    Ok(VelocityField { u1, u2 })
}

/// Pointwise product, transformed and truncated by the dealias mask.
pub fn dealiased_product(a: &PhysicalField, b: &PhysicalField) -> Result<SpectralField> {
    a.grid.check_same(&b.grid)?;
    let values = a.values.iter().zip(&b.values).map(|(x, y)| x * y).collect();
    let mut out = forward(&PhysicalField { grid: a.grid, values })?;
    out.dealias();
    Ok(out)
}

/// Dealiased transport term `u . grad theta` as a spectrum.
pub fn transport(u: &VelocityField, theta: &SpectralField) -> Result<SpectralField> {
    u.u1.grid.check_same(&theta.grid)?;
    let (t1, t2) = gradient(theta);
    let values = (0..theta.grid.len())
        .map(|i| u.u1.values[i] * t1.values[i] + u.u2.values[i] * t2.values[i])
        .collect();
    let mut out = forward(&PhysicalField { grid: theta.grid, values })?;
    out.dealias();
    Ok(out)
}

/// Writes a physical field in the `SQGF` binary snapshot format.
pub fn write_snapshot(path: &Path, f: &PhysicalField, time: f64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    w.write_all(&(f.grid.n as u32).to_le_bytes())?;
    // reserved, keeps the f64 fields 8-byte aligned
    w.write_all(&0u32.to_le_bytes())?;
    w.write_all(&f.grid.l.to_le_bytes())?;
    w.write_all(&time.to_le_bytes())?;
    for v in &f.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a snapshot; returns the field (default dealias fraction) and its time.
pub fn read_snapshot(path: &Path) -> Result<(PhysicalField, f64)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; SNAPSHOT_HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|e| SqgError::Snapshot(format!("short header: {e}")))?;
    if &header[0..4] != SNAPSHOT_MAGIC {
        return Err(SqgError::Snapshot("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != SNAPSHOT_VERSION {
        return Err(SqgError::Snapshot(format!("unsupported version {version}")));
    }
    let n = u32_at(8) as usize;
    let l = f64_at(16);
    let time = f64_at(24);
    let grid = Grid::new(n, l).map_err(|e| SqgError::Snapshot(e.to_string()))?;
    let mut bytes = vec![0u8; grid.len() * 8];
    r.read_exact(&mut bytes)
        .map_err(|e| SqgError::Snapshot(format!("truncated payload: {e}")))?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((PhysicalField { grid, values }, time))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        Grid::new(n, 2.0 * PI).unwrap()
    }

    #[test]
    fn constant_field_has_single_zero_mode() {
        let g = grid(16);
        let f = PhysicalField::from_fn(g, |_, _| 1.0);
        let c = forward(&f).unwrap();
        assert!((c.coeffs[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(c.coeffs.iter().skip(1).all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn cosine_splits_into_two_half_modes() {
        let g = grid(16);
        let f = PhysicalField::from_fn(g, |x1, _| (2.0 * PI * x1 / g.l).cos());
        let c = forward(&f).unwrap();
        for idx in 0..g.len() {
            let m1 = g.mode(idx / g.n);
            let m2 = g.mode(idx % g.n);
            let want = if m2 == 0 && m1.abs() == 1 { 0.5 } else { 0.0 };
            assert!((c.coeffs[idx].re - want).abs() < 1e-15 && c.coeffs[idx].im.abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let g = grid(8);
        let mut f = PhysicalField::zeros(g);
        f.values[5] = f64::NAN;
        assert!(matches!(forward(&f), Err(SqgError::NonFinite { index: 5, .. })));
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(Grid::new(6, 1.0).is_err());
        assert!(Grid::new(12, 1.0).is_err());
        assert!(Grid::new(16, 0.0).is_err());
    }

    #[test]
    fn lambda_eigenfunction_and_mean_error() {
        let g = grid(16);
        // |k| = 2 along x2
        let f = PhysicalField::from_fn(g, |_, x2| (2.0 * x2).sin());
        let c = forward(&f).unwrap();
        let out = inverse(&apply_lambda(1.0, &c).unwrap());
        for (a, b) in out.values.iter().zip(&f.values) {
            assert!((a - 2.0 * b).abs() < 1e-13);
        }
        let with_mean = forward(&PhysicalField::from_fn(g, |x1, _| 1.0 + x1.cos())).unwrap();
        assert!(matches!(apply_lambda(-0.5, &with_mean), Err(SqgError::NonzeroMean { .. })));
    }

    #[test]
    fn bessel_unit_at_zero_and_scaled_mode() {
        let g = grid(16);
        let c = forward(&PhysicalField::from_fn(g, |_, _| 3.0)).unwrap();
        let b = apply_bessel(1.7, &c);
        assert!((b.coeffs[0].re - 3.0).abs() < 1e-14);
        let m = forward(&PhysicalField::from_fn(g, |x1, _| x1.cos())).unwrap();
        let b = inverse(&apply_bessel(2.0, &m));
        for (i, v) in b.values.iter().enumerate() {
            let (x1, _) = g.point(i);
            assert!((v - 2.0 * x1.cos()).abs() < 1e-13);
        }
    }

    #[test]
    fn velocity_of_sine() {
        let g = grid(32);
        let th = forward(&PhysicalField::from_fn(g, |x1, _| x1.sin())).unwrap();
        let u = velocity(&th).unwrap();
        for i in 0..g.len() {
            let (x1, _) = g.point(i);
            assert!(u.u1.values[i].abs() < 1e-14);
            assert!((u.u2.values[i] - x1.cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn product_of_cosines() {
        let g = grid(16);
        let a = PhysicalField::from_fn(g, |x1, _| x1.cos());
        let p = dealiased_product(&a, &a).unwrap();
        assert!((p.coeffs[0].re - 0.5).abs() < 1e-15);
        let i2 = g.position(2) * g.n;
        let im2 = g.position(-2) * g.n;
        assert!((p.coeffs[i2].re - 0.25).abs() < 1e-15);
        assert!((p.coeffs[im2].re - 0.25).abs() < 1e-15);
    }

    #[test]
    fn pair_transforms_match_single() {
        let g = grid(32);
        let a = PhysicalField::from_fn(g, |x1, x2| (x1 + 2.0 * x2).sin() + 0.3 * (3.0 * x1).cos());
        let b = PhysicalField::from_fn(g, |x1, x2| (x1 * x2.cos()).sin());
        let (pa, pb) = forward_pair(&a, &b).unwrap();
        let (sa, sb) = (forward(&a).unwrap(), forward(&b).unwrap());
        for i in 0..g.len() {
            assert!((pa.coeffs[i] - sa.coeffs[i]).norm() < 1e-15);
            assert!((pb.coeffs[i] - sb.coeffs[i]).norm() < 1e-15);
        }
        let (ra, rb) = inverse_pair(&pa, &pb).unwrap();
        for i in 0..g.len() {
            assert!((ra.values[i] - a.values[i]).abs() < 1e-13);
            assert!((rb.values[i] - b.values[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let g = grid(8);
        let f = PhysicalField::from_fn(g, |x1, x2| x1 - 0.5 * x2);
        let dir = std::env::temp_dir().join(format!("sqglab-snap-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("f.bin");
        write_snapshot(&path, &f, 0.25).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), SNAPSHOT_HEADER_LEN + 8 * 64);
        assert_eq!(&bytes[0..4], b"SQGF");
        let (back, t) = read_snapshot(&path).unwrap();
        assert_eq!(t, 0.25);
        assert_eq!(back.values, f.values);
        std::fs::remove_dir_all(&dir).ok();
    }
}
