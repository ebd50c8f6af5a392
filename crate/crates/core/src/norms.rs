//! Fractional Sobolev and Besov norms on the periodic grid.
//!
//! `W^{s,p}` uses the Bessel potential `J^s`, `W-dot^{s,p}` the Riesz potential
//! `Lambda^s`; for `p = inf` only integer `s` is accepted and the norm is
//! built from pointwise derivative tensors. Besov norms use a smooth dyadic
//! partition `sum_q psi_q(xi) = 1` on `xi != 0`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SqgError};
use crate::spectral_core::{apply_bessel, apply_lambda, inverse, inverse_pair, PhysicalField, SpectralField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Sobolev,
    Besov,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub s: f64,
    pub p: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default = "default_true")]
    pub homogeneous: bool,
    #[serde(default = "default_family")]
    pub family: Family,
}

fn default_q() -> f64 {
    2.0
}
fn default_true() -> bool {
    true
}
fn default_family() -> Family {
    Family::Sobolev
}

impl NormSpec {
    pub fn sobolev(s: f64, p: f64, homogeneous: bool) -> Self {
        Self { s, p, q: 2.0, homogeneous, family: Family::Sobolev }
    }

    pub fn besov(s: f64, p: f64, q: f64) -> Self {
        Self { s, p, q, homogeneous: true, family: Family::Besov }
    }

    pub fn lp(p: f64) -> Self {
        Self::sobolev(0.0, p, true)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 || (self.p == 1.0 && self.family == Family::Besov)) {
            return Err(SqgError::InvalidParameter(format!("p = {} must exceed 1", self.p)));
        }
        if !(self.q >= 1.0) {
            return Err(SqgError::InvalidParameter(format!("q = {} must be >= 1", self.q)));
        }
        if self.family == Family::Sobolev && self.p.is_infinite() && self.s.fract() != 0.0 {
            return Err(SqgError::InvalidParameter(format!(
                "p = inf Sobolev norms need integer s, got {}",
                self.s
            )));
        }
        if self.family == Family::Sobolev && self.p.is_infinite() && self.s < 0.0 {
            return Err(SqgError::InvalidParameter("p = inf Sobolev norms need s >= 0".into()));
        }
        Ok(())
    }

    /// Short label for tables, e.g. `Wdot^{1,1.2}` or `Bdot^{0.5}_{2,2}`.
    pub fn label(&self) -> String {
        let fmt = |v: f64| if v.is_infinite() { "inf".to_string() } else { format!("{v}") };
        match self.family {
            Family::Sobolev => format!(
                "{}^{{{},{}}}",
                if self.homogeneous { "Wdot" } else { "W" },
                fmt(self.s),
                fmt(self.p)
            ),
            Family::Besov => format!(
                "{}^{{{}}}_{{{},{}}}",
                if self.homogeneous { "Bdot" } else { "B" },
                fmt(self.s),
                fmt(self.p),
                fmt(self.q)
            ),
        }
    }
}

/// Dispatches on the family.
pub fn evaluate(f: &SpectralField, spec: &NormSpec) -> Result<f64> {
    match spec.family {
        Family::Sobolev => sobolev_norm(f, spec),
        Family::Besov => besov_norm(f, spec),
    }
}

/// L^p norm of the physical field represented by `f`.
pub fn lp_norm(f: &SpectralField, p: f64) -> f64 {
    inverse(f).lp_norm(p)
}

fn binomial(k: u32, a: u32) -> f64 {
    (0..a).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64)
}

/// `sup_x |nabla^k f(x)|` with the Frobenius norm of the k-th derivative tensor.
pub fn derivative_sup(f: &SpectralField, k: u32) -> f64 {
    if k == 0 {
        return lp_norm(f, f64::INFINITY);
    }
    let g = f.grid;
    let i = Complex64::new(0.0, 1.0);
    let mut parts: Vec<(f64, PhysicalField)> = Vec::new();
    let specs: Vec<(u32, SpectralField)> = (0..=k)
        .map(|a| {
            let b = k - a;
            let mut out = SpectralField::zeros(g);
            for (idx, c) in f.coeffs.iter().enumerate() {
                let (k1, k2) = g.wavevector_odd(idx);
                out.coeffs[idx] = c * (i * k1).powu(a) * (i * k2).powu(b);
            }
            (a, out)
        })
        .collect();
    for pair in specs.chunks(2) {
        if pair.len() == 2 {
            let (x, y) = inverse_pair(&pair[0].1, &pair[1].1).expect("same grid");
            parts.push((binomial(k, pair[0].0), x));
            parts.push((binomial(k, pair[1].0), y));
        } else {
            parts.push((binomial(k, pair[0].0), inverse(&pair[0].1)));
        }
    }
    (0..g.len())
        .map(|j| parts.iter().map(|(w, p)| w * p.values[j] * p.values[j]).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Sobolev norm per `spec` (family must be Sobolev).
pub fn sobolev_norm(f: &SpectralField, spec: &NormSpec) -> Result<f64> {
    spec.validate()?;
    if spec.p.is_infinite() {
        let k = spec.s as u32;
        return Ok(if spec.homogeneous {
            derivative_sup(f, k)
        } else {
            (0..=k).map(|i| derivative_sup(f, i)).sum()
        });
    }
    let g = if spec.homogeneous { apply_lambda(spec.s, f)? } else { apply_bessel(spec.s, f) };
    Ok(lp_norm(&g, spec.p))
}

/// Rising smooth step on `[0, 1]` built from `exp(-1/t)`.
fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let e = |u: f64| (-1.0 / u).exp();
    e(t) / (e(t) + e(1.0 - t))
}

/// Multiplier of the dyadic block `q` at frequency magnitude `k`:
/// rises over `log2 k in [q-1, q]` and falls over `[q, q+1]`.
pub fn block_multiplier(q: i32, k: f64) -> f64 {
    if k <= 0.0 {
        return 0.0;
    }
    let u = k.log2() - q as f64;
    if u <= -1.0 || u >= 1.0 {
        0.0
    } else if u <= 0.0 {
        smooth_step(u + 1.0)
    } else {
        1.0 - smooth_step(u)
    }
}

#[derive(Clone, Debug)]
pub struct LPDecomposition {
    pub q_min: i32,
    pub blocks: Vec<SpectralField>,
}

impl LPDecomposition {
    pub fn shell(&self, i: usize) -> i32 {
        self.q_min + i as i32
    }

    pub fn reconstruct(&self) -> Option<SpectralField> {
        let mut it = self.blocks.iter();
        let first = it.next()?.clone();
        Some(it.fold(first, |acc, b| acc.add(b).expect("same grid")))
    }
}

/// Dyadic blocks covering every nonzero mode of the grid. The zero mode is
/// not part of any block.
pub fn lp_decompose(f: &SpectralField) -> LPDecomposition {
    let g = f.grid;
    let kmin = g.dk();
    let kmax = g.dk() * (g.n as f64 / 2.0) * 2f64.sqrt();
    let q_min = kmin.log2().floor() as i32;
    let q_max = kmax.log2().ceil() as i32 + 1;
    let blocks = (q_min..=q_max)
        .map(|q| {
            let mut b = SpectralField::zeros(g);
            for (idx, c) in f.coeffs.iter().enumerate().skip(1) {
                let m = block_multiplier(q, g.kmag(idx));
                if m != 0.0 {
                    b.coeffs[idx] = c * m;
                }
            }
            b
        })
        .collect();
    LPDecomposition { q_min, blocks }
}

/// Homogeneous Besov norm `|| 2^{qs} ||Delta_q f||_{L^p} ||_{l^q}`.
pub fn besov_norm(f: &SpectralField, spec: &NormSpec) -> Result<f64> {
    spec.validate()?;
    if !spec.homogeneous {
        return Err(SqgError::InvalidParameter("only homogeneous Besov norms are supported".into()));
    }
    let lp = lp_decompose(f);
    let mut terms = Vec::new();
    for (i, b) in lp.blocks.iter().enumerate() {
        if b.max_coeff() == 0.0 {
            continue;
        }
        let q = lp.shell(i) as f64;
        terms.push(2f64.powf(q * spec.s) * lp_norm(b, spec.p));
    }
    Ok(if spec.q.is_infinite() {
        terms.into_iter().fold(0.0, f64::max)
    } else {
        terms.iter().map(|t| t.powf(spec.q)).sum::<f64>().powf(1.0 / spec.q)
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct InterpolationReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub theta: f64,
}

/// Constant used by the interpolation predicate `ratio <= C`.
pub const INTERPOLATION_C: f64 = 10.0;

impl InterpolationReport {
    pub fn holds(&self) -> bool {
        self.ratio <= INTERPOLATION_C
    }
}

/// Evaluates both sides of
/// `||f||_{Wdot^{s,inf}} <= C ||f||^t_{Wdot^{s+d1+2/p,p}} ||f||^{1-t}_{Wdot^{s+d2+2/p,p}}`
/// with `t = d2/(d2-d1)`.
pub fn check_interpolation(f: &SpectralField, s: f64, d1: f64, d2: f64, p: f64) -> Result<InterpolationReport> {
    if !(d1 < 0.0 && d2 > 0.0) {
        return Err(SqgError::InvalidParameter(format!("need d1 < 0 < d2, got {d1}, {d2}")));
    }
    let theta = d2 / (d2 - d1);
    let lhs = sobolev_norm(f, &NormSpec::sobolev(s, f64::INFINITY, true))?;
    let a = sobolev_norm(f, &NormSpec::sobolev(s + d1 + 2.0 / p, p, true))?;
    let b = sobolev_norm(f, &NormSpec::sobolev(s + d2 + 2.0 / p, p, true))?;
    let rhs = a.powf(theta) * b.powf(1.0 - theta);
    Ok(InterpolationReport { lhs, rhs, ratio: lhs / rhs, theta })
}
