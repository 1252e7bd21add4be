//! Fixed and adaptive quadrature rules.

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights on `[lo, hi]`.
///
/// Roots of the Legendre polynomial are found by Newton iteration from the
/// Chebyshev-like initial guess; both nodes and weights are accurate to a few
/// ulps for the node counts used here (up to a few hundred).
pub fn gauss_legendre(n: usize, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let mut out = vec![(0.0, 0.0); n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut deriv = 0.0;
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            deriv = dp;
            let step = p / dp;
            x -= step;
            if step.abs() <= 1e-16 * x.abs().max(1.0) {
                let (_, dp) = legendre_with_derivative(n, x);
                deriv = dp;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * deriv * deriv);
        out[i] = (mid - half * x, half * w);
        out[n - 1 - i] = (mid + half * x, half * w);
    }
    out
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> (f64, f64) {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kron * half, ((kron - gauss) * half).abs())
}

/// Globally adaptive Gauss-Kronrod (7/15) integration of `f` over `[lo, hi]`.
///
/// Bisects the interval with the largest error estimate until the summed
/// estimate falls below `max(abs_tol, rel_tol * |integral|)`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    const MAX_INTERVALS: usize = 2000;
    let (v, e) = kronrod15(&f, lo, hi);
    let mut parts = vec![(lo, hi, v, e)];
    let mut total = v;
    let mut err = e;
    while err > abs_tol.max(rel_tol * total.abs()) {
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::Numeric(format!(
                "adaptive quadrature on [{lo}, {hi}] did not converge: estimate {total:e}, error {err:e}"
            )));
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .3.total_cmp(&b.1 .3))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (a, b, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (a + b);
        let left = kronrod15(&f, a, mid);
        let right = kronrod15(&f, mid, b);
        parts.push((a, mid, left.0, left.1));
        parts.push((mid, b, right.0, right.1));
        total = parts.iter().map(|p| p.2).sum();
        err = parts.iter().map(|p| p.3).sum();
    }
    if !total.is_finite() {
        return Err(Error::Numeric(format!("adaptive quadrature on [{lo}, {hi}] produced {total}")));
    }
    Ok(total)
}
