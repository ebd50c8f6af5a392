//! Time integration of `d_t theta + Lambda^alpha theta + u . grad theta = 0`.
//!
//! Dissipation is integrated exactly through the factor `exp(-|k|^alpha t)`;
//! transport is explicit and dealiased. `imex_bdf2` is the second-order
//! semi-implicit BDF scheme, started with one first-order step.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ansatz::{AnsatzState, Band};
use crate::error::{Result, SqgError};
use crate::norms::{derivative_sup, evaluate, NormSpec};
use crate::spectral_core::{
    apply_lambda, forward, gradient_spectral, inverse, inverse_pair, velocity_spectral, Grid, PhysicalField,
    SpectralField,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DtPolicy {
    Fixed,
    Cfl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    IfRk4,
    ImexBdf2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_policy")]
    pub dt_policy: DtPolicy,
    /// Step for the fixed policy; upper bound on the step for the CFL policy.
    pub dt: f64,
    #[serde(default = "default_cfl")]
    pub cfl_number: f64,
    pub t_end: f64,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    /// Switch for the nonlinear term; off gives the linear dissipative flow.
    #[serde(default = "default_true")]
    pub transport: bool,
}

fn default_alpha() -> f64 {
    1.0
}
fn default_policy() -> DtPolicy {
    DtPolicy::Cfl
}
fn default_cfl() -> f64 {
    0.4
}
fn default_stride() -> usize {
    10
}
fn default_scheme() -> Scheme {
    Scheme::IfRk4
}
fn default_true() -> bool {
    true
}

impl SolverConfig {
    pub fn new(t_end: f64, dt: f64) -> Self {
        Self {
            alpha: 1.0,
            dt_policy: DtPolicy::Cfl,
            dt,
            cfl_number: 0.4,
            t_end,
            snapshot_stride: 10,
            scheme: Scheme::IfRk4,
            transport: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SqgError::InvalidParameter(m));
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return bad(format!("alpha = {} outside (0, 2]", self.alpha));
        }
        if !(self.cfl_number > 0.0 && self.cfl_number < 1.0) {
            return bad(format!("cfl_number = {} outside (0, 1)", self.cfl_number));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt = {} must be positive", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end = {} must be nonnegative", self.t_end));
        }
        if self.snapshot_stride == 0 {
            return bad("snapshot_stride must be positive".into());
        }
        Ok(())
    }
}

/// `-(u . grad theta)` dealiased, with `max |u|`.
fn transport_rhs(theta: &SpectralField) -> Result<(SpectralField, f64)> {
    let (a, b) = velocity_spectral(theta)?;
    let (c, d) = gradient_spectral(theta);
    let (u1, u2) = inverse_pair(&a, &b)?;
    let (g1, g2) = inverse_pair(&c, &d)?;
    let mut umax: f64 = 0.0;
    let values = (0..theta.grid.len())
        .map(|i| {
            umax = umax.max(u1.values[i].hypot(u2.values[i]));
            -(u1.values[i] * g1.values[i] + u2.values[i] * g2.values[i])
        })
        .collect();
    let mut out = forward(&PhysicalField::from_values(theta.grid, values)?)?;
    out.dealias();
    out.remove_mean();
    Ok((out, umax))
}

fn rhs(theta: &SpectralField, cfg: &SolverConfig) -> Result<(SpectralField, f64)> {
    if cfg.transport {
        transport_rhs(theta)
    } else {
        Ok((SpectralField::zeros(theta.grid), 0.0))
    }
}

/// Largest stable step `cfl * dx / max|u|`.
pub fn cfl_limit(grid: &Grid, umax: f64, cfl_number: f64) -> f64 {
    if umax == 0.0 {
        f64::INFINITY
    } else {
        cfl_number * grid.dx() / umax
    }
}

/// `max |u[theta]|`.
pub fn max_velocity(theta: &SpectralField) -> Result<f64> {
    let (a, b) = velocity_spectral(theta)?;
    let (u1, u2) = inverse_pair(&a, &b)?;
    Ok(u1.values.iter().zip(&u2.values).fold(0.0_f64, |m, (x, y)| m.max(x.hypot(*y))))
}

fn decay(grid: &Grid, alpha: f64, tau: f64) -> Vec<f64> {
    (0..grid.len()).map(|idx| (-grid.kmag(idx).powf(alpha) * tau).exp()).collect()
}

fn combine(terms: &[(&[f64], f64, &SpectralField)], grid: Grid) -> SpectralField {
    let mut out = SpectralField::zeros(grid);
    for (idx, c) in out.coeffs.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (e, w, f) in terms {
            acc += f.coeffs[idx] * (e[idx] * w);
        }
        *c = acc;
    }
    out
}

fn check_cfl(grid: &Grid, dt: f64, umax: f64, cfl_number: f64) -> Result<()> {
    let limit = cfl_limit(grid, umax, cfl_number);
    if dt > limit * (1.0 + 1e-12) {
        return Err(SqgError::Cfl { dt, limit, suggested: limit });
    }
    Ok(())
}

fn if_rk4(theta: &SpectralField, dt: f64, cfg: &SolverConfig) -> Result<SpectralField> {
    let g = theta.grid;
    let e = decay(&g, cfg.alpha, 0.5 * dt);
    let e2: Vec<f64> = e.iter().map(|x| x * x).collect();
    let one = vec![1.0; g.len()];
    let (k1, umax) = rhs(theta, cfg)?;
    check_cfl(&g, dt, umax, cfg.cfl_number)?;
    let t2 = combine(&[(&e, 1.0, theta), (&e, 0.5 * dt, &k1)], g);
    let (k2, _) = rhs(&t2, cfg)?;
    let t3 = combine(&[(&e, 1.0, theta), (&one, 0.5 * dt, &k2)], g);
    let (k3, _) = rhs(&t3, cfg)?;
    let t4 = combine(&[(&e2, 1.0, theta), (&e, dt, &k3)], g);
    let (k4, _) = rhs(&t4, cfg)?;
    let w = dt / 6.0;
    Ok(combine(
        &[(&e2, 1.0, theta), (&e2, w, &k1), (&e, 2.0 * w, &k2), (&e, 2.0 * w, &k3), (&one, w, &k4)],
        g,
    ))
}

/// `(theta + dt N) / (1 + dt L)` and the transport term used.
fn imex_euler(theta: &SpectralField, dt: f64, cfg: &SolverConfig) -> Result<(SpectralField, SpectralField)> {
    let g = theta.grid;
    let (n0, umax) = rhs(theta, cfg)?;
    check_cfl(&g, dt, umax, cfg.cfl_number)?;
    let mut out = SpectralField::zeros(g);
    for (idx, c) in out.coeffs.iter_mut().enumerate() {
        let l = g.kmag(idx).powf(cfg.alpha);
        *c = (theta.coeffs[idx] + dt * n0.coeffs[idx]) / (1.0 + dt * l);
    }
    Ok((out, n0))
}

/// SBDF2 with constant step: `(4 th_n - th_{n-1} + 2dt(2N_n - N_{n-1})) / (3 + 2dt L)`.
fn imex_bdf2(
    theta: &SpectralField,
    prev: &SpectralField,
    prev_n: &SpectralField,
    dt: f64,
    cfg: &SolverConfig,
) -> Result<(SpectralField, SpectralField)> {
    let g = theta.grid;
    let (n0, umax) = rhs(theta, cfg)?;
    check_cfl(&g, dt, umax, cfg.cfl_number)?;
    let mut out = SpectralField::zeros(g);
    for (idx, c) in out.coeffs.iter_mut().enumerate() {
        let l = g.kmag(idx).powf(cfg.alpha);
        let num = 4.0 * theta.coeffs[idx] - prev.coeffs[idx] + 2.0 * dt * (2.0 * n0.coeffs[idx] - prev_n.coeffs[idx]);
        *c = num / (3.0 + 2.0 * dt * l);
    }
    Ok((out, n0))
}

/// One step. For `imex_bdf2` without history this is the first-order start step.
pub fn step(theta: &SpectralField, dt: f64, cfg: &SolverConfig) -> Result<SpectralField> {
    if !(dt > 0.0) {
        return Err(SqgError::InvalidParameter(format!("dt = {dt} must be positive")));
    }
    let out = match cfg.scheme {
        Scheme::IfRk4 => if_rk4(theta, dt, cfg)?,
        Scheme::ImexBdf2 => imex_euler(theta, dt, cfg)?.0,
    };
    Ok(out.with_time(theta.time_tag.unwrap_or(0.0) + dt))
}

/// Series recorded at snapshot times.
#[derive(Clone, Debug, Default)]
pub struct EvolutionRecord {
    pub times: Vec<f64>,
    pub steps: Vec<usize>,
    pub norm_series: Vec<(NormSpec, Vec<f64>)>,
    pub linf_series: Vec<f64>,
    pub l2_series: Vec<f64>,
    /// `||theta||_{L2}` after every step, starting with the initial value.
    pub step_l2: Vec<f64>,
    pub step_times: Vec<f64>,
    pub eta_series: Vec<(NormSpec, Vec<f64>)>,
    /// Norms of the analytic ansatz at the snapshot times.
    pub reference_series: Vec<(NormSpec, Vec<f64>)>,
    /// `||theta2(t)||_{L2}` of the reference ring.
    pub ring_l2_series: Vec<f64>,
    /// `||grad u[eta]||_inf + ||grad eta||_inf` at snapshots.
    pub bootstrap_series: Vec<f64>,
    pub bootstrap_bound: Option<f64>,
    /// First snapshot time where the bootstrap bound fails.
    pub tstar_flag: Option<f64>,
    pub snapshots: Vec<SpectralField>,
    pub final_state: Option<SpectralField>,
    pub aborted: Option<String>,
}

impl EvolutionRecord {
    pub fn series(&self, spec: &NormSpec) -> Option<&Vec<f64>> {
        self.norm_series.iter().find(|(s, _)| s == spec).map(|x| &x.1)
    }

    pub fn eta(&self, spec: &NormSpec) -> Option<&Vec<f64>> {
        self.eta_series.iter().find(|(s, _)| s == spec).map(|x| &x.1)
    }

    pub fn reference(&self, spec: &NormSpec) -> Option<&Vec<f64>> {
        self.reference_series.iter().find(|(s, _)| s == spec).map(|x| &x.1)
    }

    /// Converts an aborted run into an error.
    pub fn into_result(self) -> Result<Self> {
        match &self.aborted {
            Some(reason) => Err(SqgError::BlowUp { t: *self.times.last().unwrap_or(&0.0), reason: reason.clone() }),
            None => Ok(self),
        }
    }

    /// Largest relative increase of `||theta||_{L2}` over a single step.
    pub fn max_l2_increase(&self) -> f64 {
        self.step_l2.windows(2).map(|w| (w[1] - w[0]) / w[0].max(f64::MIN_POSITIVE)).fold(f64::MIN, f64::max)
    }

    /// Largest relative increase of `||theta||_inf` over the initial value.
    pub fn max_linf_excess(&self) -> f64 {
        let first = self.linf_series.first().copied().unwrap_or(0.0);
        self.linf_series.iter().map(|v| (v - first) / first.max(f64::MIN_POSITIVE)).fold(f64::MIN, f64::max)
    }
}

/// Options controlling what `evolve` records.
#[derive(Clone, Debug, Default)]
pub struct EvolveOptions<'a> {
    pub specs: Vec<NormSpec>,
    pub reference: Option<&'a AnsatzState>,
    pub reference_band: Option<Band>,
    pub keep_snapshots: bool,
}

struct Recorder<'a> {
    opts: &'a EvolveOptions<'a>,
    rec: EvolutionRecord,
}

impl Recorder<'_> {
    fn snapshot(&mut self, theta: &SpectralField, t: f64, step: usize) -> Result<()> {
        let phys = inverse(theta);
        let rec = &mut self.rec;
        rec.times.push(t);
        rec.steps.push(step);
        rec.linf_series.push(phys.max_abs());
        rec.l2_series.push(theta.l2_norm());
        for (i, spec) in self.opts.specs.iter().enumerate() {
            rec.norm_series[i].1.push(evaluate(theta, spec)?);
        }
        if let Some(state) = self.opts.reference {
            let band = self.opts.reference_band.unwrap_or(Band::Circular);
            let reference = state.dynamic_field(&theta.grid, t, band)?;
            let eta = theta.sub(&reference)?;
            for (i, spec) in self.opts.specs.iter().enumerate() {
                rec.eta_series[i].1.push(evaluate(&eta, spec)?);
                rec.reference_series[i].1.push(evaluate(&reference, spec)?);
            }
            rec.ring_l2_series.push(state.theta2_spectral(&theta.grid, t)?.l2_norm());
            let psi = apply_lambda(-1.0, &eta)?;
            let b = derivative_sup(&psi, 2) + derivative_sup(&eta, 1);
            rec.bootstrap_series.push(b);
            let bound = state.params.lambda.powf(1.0 + 2.0 / state.params.p - state.params.beta);
            rec.bootstrap_bound = Some(bound);
            if b > bound && rec.tstar_flag.is_none() {
                rec.tstar_flag = Some(t);
            }
        }
        if self.opts.keep_snapshots {
            rec.snapshots.push(theta.clone().with_time(t));
        }
        Ok(())
    }
}

fn healthy(theta: &SpectralField) -> bool {
    theta.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
}

/// Integrates from `theta0` to `cfg.t_end`. A non-finite state stops the run
/// and sets `aborted`; the record keeps everything up to the last healthy step.
pub fn evolve(theta0: &SpectralField, cfg: &SolverConfig, opts: &EvolveOptions) -> Result<EvolutionRecord> {
    cfg.validate()?;
    if !theta0.is_mean_zero() {
        return Err(SqgError::NonzeroMean { re: theta0.coeffs[0].re, im: theta0.coeffs[0].im });
    }
    for spec in &opts.specs {
        spec.validate()?;
    }
    let mut r = Recorder { opts, rec: EvolutionRecord::default() };
    r.rec.norm_series = opts.specs.iter().map(|s| (*s, Vec::new())).collect();
    if opts.reference.is_some() {
        r.rec.eta_series = r.rec.norm_series.clone();
        r.rec.reference_series = r.rec.norm_series.clone();
    }
    let grid = theta0.grid;
    let mut theta = theta0.clone();
    theta.remove_mean();
    let mut t = 0.0;
    let mut n = 0usize;
    r.snapshot(&theta, t, n)?;
    r.rec.step_l2.push(theta.l2_norm());
    r.rec.step_times.push(t);
    let mut history: Option<(SpectralField, SpectralField, f64)> = None;
    while t < cfg.t_end * (1.0 - 1e-14) {
        let mut dt = cfg.dt.min(cfg.t_end - t);
        if cfg.dt_policy == DtPolicy::Cfl && cfg.transport {
            dt = dt.min(cfl_limit(&grid, max_velocity(&theta)?, cfg.cfl_number));
        }
        let next = match cfg.scheme {
            Scheme::IfRk4 => if_rk4(&theta, dt, cfg)?,
            Scheme::ImexBdf2 => {
                // the two-step formula needs a constant step
                let (next, n0) = match &history {
                    Some((prev, prev_n, dt_prev)) if (dt_prev - dt).abs() <= 1e-12 * dt => {
                        imex_bdf2(&theta, prev, prev_n, dt, cfg)?
                    }
                    _ => imex_euler(&theta, dt, cfg)?,
                };
                history = Some((theta.clone(), n0, dt));
                next
            }
        };
        if !healthy(&next) {
            r.rec.aborted = Some(format!("non-finite state after step {} at t = {}", n + 1, t + dt));
            r.rec.final_state = Some(theta.with_time(t));
            return Ok(r.rec);
        }
        theta = next;
        t += dt;
        n += 1;
        r.rec.step_l2.push(theta.l2_norm());
        r.rec.step_times.push(t);
        let last = t >= cfg.t_end * (1.0 - 1e-14);
        if n % cfg.snapshot_stride == 0 || last {
            r.snapshot(&theta, t, n)?;
        }
    }
    r.rec.final_state = Some(theta.with_time(t));
    Ok(r.rec)
}

/// Adds norm series for `specs` computed from stored snapshots.
pub fn attach_diagnostics(mut record: EvolutionRecord, specs: &[NormSpec]) -> Result<EvolutionRecord> {
    for spec in specs {
        spec.validate()?;
        if record.series(spec).is_some() {
            continue;
        }
        if record.snapshots.len() != record.times.len() {
            return Err(SqgError::InvalidParameter(
                "diagnostics need the snapshots; evolve with keep_snapshots".into(),
            ));
        }
        let values = record.snapshots.iter().map(|s| evaluate(s, spec)).collect::<Result<Vec<_>>>()?;
        record.norm_series.push((*spec, values));
    }
    Ok(record)
}
