//! Numeric kernels: one-sample t statistics, central and noncentral Student t
//! log-densities, and equicorrelated multivariate normal sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use libm::{erfc, lgamma as ln_gamma};

use crate::error::{Error, Result};
use crate::quadrature::integrate_adaptive;

/// Magnitude assigned to a t statistic whose sample variance vanishes.
pub const T_CAP: f64 = 1e6;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// One-sample t statistic with its effective sample size and degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TStatistic {
    pub t: f64,
    pub n_t: u64,
    pub lambda: u64,
    /// Set when the sample variance was (numerically) zero or `|t|` hit [`T_CAP`].
    pub capped: bool,
}

/// t = mean / (sd / sqrt(n)) with the `n - 1` denominator standard deviation.
pub fn one_sample_t(ys: &[f64]) -> Result<TStatistic> {
    if ys.len() < 2 {
        return Err(Error::input(format!(
            "one-sample t needs at least 2 observations, got {}",
            ys.len()
        )));
    }
    if let Some(bad) = ys.iter().find(|y| !y.is_finite()) {
        return Err(Error::input(format!("non-finite observation {bad}")));
    }
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let ss: f64 = ys.iter().map(|y| (y - mean) * (y - mean)).sum();
    let var = ss / (n - 1.0);
    Ok(finish_t(ys.len() as u64, mean, var, ys.iter().map(|y| y * y).sum::<f64>() / n))
}

/// t statistic from running moments. Requires `n >= 2`.
pub(crate) fn t_from_moments(n: u64, sum: f64, sumsq: f64) -> TStatistic {
    debug_assert!(n >= 2);
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sumsq - sum * mean) / (nf - 1.0)).max(0.0);
    finish_t(n, mean, var, sumsq / nf)
}

fn finish_t(n: u64, mean: f64, var: f64, mean_square: f64) -> TStatistic {
    // Rounding in sum-of-squares leaves residue of order eps * E[y^2].
    let degenerate = var <= 64.0 * f64::EPSILON * mean_square;
    let (t, capped) = if degenerate {
        let t = if mean == 0.0 { 0.0 } else { mean.signum() * T_CAP };
        (t, true)
    } else {
        let t = mean / (var / n as f64).sqrt();
        if t.abs() > T_CAP {
            (t.signum() * T_CAP, true)
        } else {
            (t, false)
        }
    };
    TStatistic { t, n_t: n, lambda: n - 1, capped }
}

/// Log density of Student's t with `lambda` degrees of freedom.
pub fn central_t_logpdf(t: f64, lambda: u64) -> f64 {
    let nu = lambda as f64;
    ln_gamma(0.5 * (nu + 1.0))
        - ln_gamma(0.5 * nu)
        - 0.5 * (nu * std::f64::consts::PI).ln()
        - 0.5 * (nu + 1.0) * (t * t / nu).ln_1p()
}

/// Log density of the noncentral t distribution with `lambda` degrees of
/// freedom and noncentrality `mu`.
///
/// Uses the mixture representation
/// `f(t) = C(nu) exp(-mu^2/2 + a^2/2) (nu + t^2)^{-(nu+1)/2} I_nu(a)` with
/// `a = mu t / sqrt(nu + t^2)` and `I_nu(a) = int_0^inf y^nu exp(-(y-a)^2/2) dy`.
/// For `a >= 0` (and small negative `a`) the moment integral follows from a
/// positive-term three-term recurrence; otherwise it is integrated directly
/// around the mode of its log-concave integrand.
pub fn noncentral_t_logpdf(t: f64, lambda: u64, mu: f64) -> Result<f64> {
    if lambda == 0 {
        return Err(Error::config("noncentral t needs at least one degree of freedom"));
    }
    if !t.is_finite() || !mu.is_finite() {
        return Err(Error::input(format!("noncentral t density at t = {t}, mu = {mu}")));
    }
    if mu == 0.0 {
        return Ok(central_t_logpdf(t, lambda));
    }
    let nu = lambda as f64;
    let scale = nu + t * t;
    let a = mu * t / scale.sqrt();
    let log_c = 0.5 * nu * nu.ln()
        - 0.5 * std::f64::consts::PI.ln()
        - ln_gamma(0.5 * nu)
        - 0.5 * (nu - 1.0) * std::f64::consts::LN_2;
    let log_moment = log_shifted_moment(lambda, a)?;
    let value = log_c - 0.5 * mu * mu + 0.5 * a * a - 0.5 * (nu + 1.0) * scale.ln() + log_moment;
    if !value.is_finite() {
        return Err(Error::Numeric(format!(
            "noncentral t log-density not finite at t = {t}, lambda = {lambda}, mu = {mu}: {value}"
        )));
    }
    Ok(value)
}

/// `ln int_0^inf y^nu exp(-(y - a)^2 / 2) dy`.
pub(crate) fn log_shifted_moment(nu: u64, a: f64) -> Result<f64> {
    // For a < 0 the forward recurrence grows the dominant solution against
    // the wanted one; up to |a| sqrt(nu) = 6 the loss stays near 1e-13.
    if a >= 0.0 || -a * (nu as f64).sqrt() <= FORWARD_LIMIT {
        log_moment_recurrence(nu, a)
    } else {
        match backward_depth(nu, -a) {
            Some(top) => Ok(log_moment_backward(nu, -a, top)),
            None => log_moment_quadrature(nu, -a),
        }
    }
}

const FORWARD_LIMIT: f64 = 6.0;

/// Extra backward steps allowed per degree of freedom before falling back
/// to quadrature. Past the forward limit the depth never needs more than ~18.
const MAX_BACKWARD_STEPS_PER_DF: u64 = 20;

/// Starting index for the backward recurrence. With `a = -b < 0` the moments
/// are the minimal solution, and a starting error decays roughly like
/// `exp(-2 b (sqrt(top) - sqrt(nu)))`; ask for about 40 nats of decay.
fn backward_depth(nu: u64, b: f64) -> Option<u64> {
    let root = (nu as f64).sqrt() + 20.0 / b;
    let top = ((root * root).ceil() as u64).max(nu + 10);
    (top - nu <= MAX_BACKWARD_STEPS_PER_DF * nu + 100).then_some(top)
}

/// `ln J_nu` for `a = -b < 0` from `r_k = J_k / J_{k-1} = k / (r_{k+1} + b)`,
/// run down from `top` with the asymptotic ratio as the starting guess.
/// Every operation adds or divides positive numbers, so nothing cancels.
pub(crate) fn log_moment_backward(nu: u64, b: f64, top: u64) -> f64 {
    let k = (top + 1) as f64;
    let mut ratio = 0.5 * (-b + (b * b + 4.0 * k).sqrt());
    let mut log_acc = log_normal_cdf(-b) + LN_SQRT_2PI;
    let mut prod = 1.0f64;
    for k in (1..=top).rev() {
        ratio = k as f64 / (ratio + b);
        if k <= nu {
            prod *= ratio;
            if !(1e-150..=1e150).contains(&prod) {
                log_acc += prod.ln();
                prod = 1.0;
            }
        }
    }
    log_acc + prod.ln()
}

/// `ln Phi(x)`, switching to the asymptotic Mills-ratio series deep in the
/// lower tail where `Phi` itself underflows.
pub(crate) fn log_normal_cdf(x: f64) -> f64 {
    if x > -20.0 {
        return (0.5 * erfc(-x / std::f64::consts::SQRT_2)).ln();
    }
    let z = 1.0 / (x * x);
    // 1 - 1/x^2 + 3/x^4 - 15/x^6 + 105/x^8 - 945/x^10
    let series = 1.0 - z * (1.0 - 3.0 * z * (1.0 - 5.0 * z * (1.0 - 7.0 * z * (1.0 - 9.0 * z))));
    -0.5 * x * x - (-x).ln() - LN_SQRT_2PI + series.ln()
}

/// Recurrence on `J_k = int_0^inf y^k exp(-(y-a)^2/2) dy`:
/// `J_k = (k - 1) J_{k-2} + a J_{k-1}`, carried as ratios `J_k / J_{k-1}`.
fn log_moment_recurrence(nu: u64, a: f64) -> Result<f64> {
    let log_j0 = LN_SQRT_2PI + log_normal_cdf(a);
    let mut log_acc = log_j0;
    let mut prod = 1.0f64;
    // J_1 / J_0 = exp(-a^2/2) / J_0 + a
    let mut ratio = (-0.5 * a * a - log_j0).exp() + a;
    for k in 1..=nu {
        if k >= 2 {
            ratio = (k - 1) as f64 / ratio + a;
        }
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(Error::Numeric(format!(
                "moment recurrence broke down at k = {k} (nu = {nu}, a = {a}): ratio {ratio}"
            )));
        }
        prod *= ratio;
        if !(1e-150..=1e150).contains(&prod) {
            log_acc += prod.ln();
            prod = 1.0;
        }
    }
    Ok(log_acc + prod.ln())
}

/// Direct quadrature of `exp(nu ln y - (y + b)^2 / 2)` for `b > 0`, split at
/// the mode and normalised by the peak value.
fn log_moment_quadrature(nu: u64, b: f64) -> Result<f64> {
    let nu_f = nu as f64;
    let log_g = |y: f64| nu_f * y.ln() - 0.5 * (y + b) * (y + b);
    let mode = 0.5 * (-b + (b * b + 4.0 * nu_f).sqrt());
    let peak = log_g(mode);
    let width = 1.0 / (nu_f / (mode * mode) + 1.0).sqrt();
    // The integrand is log-concave with curvature at least 1, so ~50 nats
    // below the peak the remaining tail mass is negligible at f64 precision.
    let mut right = width;
    while log_g(mode + right) - peak > -50.0 {
        right *= 2.0;
    }
    let mut left = width;
    while left < mode && log_g(mode - left) - peak > -50.0 {
        left *= 2.0;
    }
    let lo = (mode - left).max(0.0);
    let f = |y: f64| if y <= 0.0 { 0.0 } else { (log_g(y) - peak).exp() };
    let abs_tol = 1e-14 * width;
    let mass = integrate_adaptive(f, lo, mode, abs_tol, 1e-13)?
        + integrate_adaptive(f, mode, mode + right, abs_tol, 1e-13)?;
    if mass.is_nan() || mass <= 0.0 {
        return Err(Error::Numeric(format!(
            "moment quadrature produced non-positive mass {mass} (nu = {nu}, b = {b})"
        )));
    }
    Ok(peak + mass.ln())
}

/// Multivariate normal with unit variances and common correlation `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquicorrelatedModel {
    mu: Vec<f64>,
    rho: f64,
}

impl EquicorrelatedModel {
    pub fn new(mu: Vec<f64>, rho: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::config(format!("correlation must lie in [0, 1), got {rho}")));
        }
        if mu.is_empty() {
            return Err(Error::config("equicorrelated model needs at least one coordinate"));
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("mean vector must be finite"));
        }
        Ok(Self { mu, rho })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn mean(&self) -> &[f64] {
        &self.mu
    }
}

/// Draws `mu + sqrt(rho) z0 1 + sqrt(1 - rho) z`, which has covariance
/// exactly `rho` off the diagonal and 1 on it.
pub fn sample_equicorrelated<R: Rng + ?Sized>(model: &EquicorrelatedModel, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; model.dim()];
    sample_equicorrelated_into(model, rng, &mut out);
    out
}

pub fn sample_equicorrelated_into<R: Rng + ?Sized>(
    model: &EquicorrelatedModel,
    rng: &mut R,
    out: &mut [f64],
) {
    debug_assert_eq!(out.len(), model.dim());
    let shared: f64 = rng.sample(StandardNormal);
    let common = model.rho.sqrt() * shared;
    let own = (1.0 - model.rho).sqrt();
    for (slot, &mu) in out.iter_mut().zip(&model.mu) {
        let z: f64 = rng.sample(StandardNormal);
        *slot = mu + common + own * z;
    }
}

/// Independent generator for Monte-Carlo iteration `index` under `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
