//! Independent numerical oracles shared by the integration tests.
//!
//! Nothing here calls into the library's own special functions or
//! quadrature, so agreement is evidence rather than tautology.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Adaptive Simpson on `[a, b]` with an absolute error target.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// `ln Gamma(k / 2)` for a positive integer `k`, by the exact recursion.
pub fn ln_gamma_half(k: u64) -> f64 {
    assert!(k > 0);
    let (mut acc, mut x) = if k.is_multiple_of(2) { (0.0, 1.0) } else { (0.5 * PI.ln(), 0.5) };
    while 2.0 * x < k as f64 {
        acc += x.ln();
        x += 1.0;
    }
    acc
}

/// Noncentral t density from its definition `T = (Z + mu) / sqrt(V / nu)`,
/// `V ~ chi^2_nu`, integrating over `s = sqrt(V)`.
pub fn noncentral_t_pdf_oracle(t: f64, nu: u64, mu: f64) -> f64 {
    let nuf = nu as f64;
    let log_norm = (2.0f64).ln() - 0.5 * (2.0 * PI).ln() - 0.5 * nuf.ln() - 0.5 * nuf * (2.0f64).ln() - ln_gamma_half(nu);
    let log_integrand = |s: f64| {
        if s <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let z = t * s / nuf.sqrt() - mu;
        -0.5 * z * z + nuf * s.ln() - 0.5 * s * s
    };
    // Locate the peak on a fine grid, then integrate the rescaled integrand
    // over the window where it is not negligible.
    let upper = nuf.sqrt() + mu.abs() + 60.0;
    let grid = 20_000;
    let (mut peak, mut peak_s) = (f64::NEG_INFINITY, 0.0);
    for i in 1..=grid {
        let s = upper * i as f64 / grid as f64;
        let v = log_integrand(s);
        if v > peak {
            peak = v;
            peak_s = s;
        }
    }
    let cutoff = peak - 60.0;
    let step = upper / grid as f64;
    let mut lo = peak_s;
    while lo > 0.0 && log_integrand(lo) > cutoff {
        lo -= step;
    }
    let mut hi = peak_s;
    while log_integrand(hi) > cutoff {
        hi += step;
    }
    let lo = lo.max(0.0);
    let scaled = |s: f64| (log_integrand(s) - peak).exp();
    // Split at the peak so each half is monotone-ish.
    let tol = 1e-15 * (hi - lo);
    let area = simpson(&scaled, lo, peak_s, tol) + simpson(&scaled, peak_s, hi, tol);
    (log_norm + peak).exp() * area
}

/// Total mass of a density on the real line, mapping `t = centre + scale * tan(theta)`.
pub fn total_mass<F: Fn(f64) -> f64>(pdf: F, centre: f64, scale: f64) -> f64 {
    let g = |theta: f64| {
        let c = theta.cos();
        if c <= 0.0 {
            return 0.0;
        }
        let t = centre + scale * theta.tan();
        pdf(t) * scale / (c * c)
    };
    let half = PI / 2.0;
    let eps = 1e-12;
    simpson(&g, -half + eps, 0.0, 1e-11) + simpson(&g, 0.0, half - eps, 1e-11)
}

/// Standard normal CDF via a continued-fraction-free series, independent of erfc.
pub fn normal_cdf(x: f64) -> f64 {
    // Integrate the density directly; accurate enough for test thresholds.
    let phi = |u: f64| (-0.5 * u * u).exp() / (2.0 * PI).sqrt();
    if x >= 0.0 {
        0.5 + simpson(&phi, 0.0, x, 1e-14)
    } else {
        0.5 - simpson(&phi, x, 0.0, 1e-14)
    }
}
