//! Small numerical helpers: Gauss-Legendre rules, Bessel kernels and
//! least-squares line fits.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss-Legendre rule on `[a, b]` with `panels` equal panels.
pub fn composite_gl(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(lo + 0.5 * h * (xi + 1.0));
            weights.push(0.5 * h * wi);
        }
    }
    (nodes, weights)
}

#[inline]
pub fn bessel_j0(x: f64) -> f64 {
    libm::j0(x)
}

#[inline]
pub fn bessel_j1(x: f64) -> f64 {
    libm::j1(x)
}

/// Coefficients of `J1(x)/x = sum_m a_m x^(2m)`.
fn phi_series_coeff(m: usize) -> f64 {
    let mut fact_m = 1.0;
    for i in 1..=m {
        fact_m *= i as f64;
    }
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    sign / (2f64.powi(2 * m as i32 + 1) * fact_m * fact_m * (m + 1) as f64)
}

/// `phi(x) = J1(x)/x` and its first three derivatives.
///
/// Closed forms cancel badly near the origin, so a power series is used
/// for `x < 1`.
pub fn phi_derivs(x: f64) -> [f64; 4] {
    if x < 1.0 {
        let mut out = [0.0; 4];
        for m in 0..12 {
            let a = phi_series_coeff(m);
            let e = 2 * m;
            for (j, o) in out.iter_mut().enumerate() {
                if e < j {
                    continue;
                }
                let mut c = a;
                for q in 0..j {
                    c *= (e - q) as f64;
                }
                *o += c * x.powi((e - j) as i32);
            }
        }
        return out;
    }
    let j0 = bessel_j0(x);
    let j1 = bessel_j1(x);
    let x2 = x * x;
    let x3 = x2 * x;
    let x4 = x3 * x;
    [
        j1 / x,
        j0 / x - 2.0 * j1 / x2,
        -j1 / x - 3.0 * j0 / x2 + 6.0 * j1 / x3,
        -j0 / x + 5.0 * j1 / x2 + 12.0 * j0 / x3 - 24.0 * j1 / x4,
    ]
}

/// Ordinary least-squares line `y = slope x + intercept`; returns
/// `(slope, intercept, max |residual|)`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let resid = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).abs())
        .fold(0.0, f64::max);
    (slope, intercept, resid)
}
