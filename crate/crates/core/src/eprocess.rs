//! Elementary e-processes, e-merging, e-to-p conversion and local e-tests.
//!
//! Every e-process is carried as a log e-value. Values handed to merging and
//! closed testing are exponentiated with the exponent clamped at
//! [`LOG_E_CLAMP`] so that sums over many hypotheses stay finite.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distributions::{central_t_logpdf, noncentral_t_logpdf, t_from_moments};
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

/// Largest log e-value that is exponentiated as-is.
pub const LOG_E_CLAMP: f64 = 700.0;

/// `exp(log_e)` with the exponent clamped at [`LOG_E_CLAMP`].
pub fn e_from_log(log_e: f64) -> f64 {
    log_e.min(LOG_E_CLAMP).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// Likelihood ratio of N(delta, 1) against N(0, 1), one observation at a time.
    GaussianLr,
    /// Noncentral-over-central t density ratio at a fixed standardized effect.
    TLr,
    /// t likelihood ratio mixed over a non-local moment prior.
    Mom,
}

impl FamilyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FamilyKind::GaussianLr => "gaussian_lr",
            FamilyKind::TLr => "t_lr",
            FamilyKind::Mom => "mom",
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gaussian_lr" => Ok(FamilyKind::GaussianLr),
            "t_lr" => Ok(FamilyKind::TLr),
            "mom" => Ok(FamilyKind::Mom),
            other => Err(Error::config(format!(
                "unknown e-process family '{other}' (expected gaussian_lr, t_lr or mom)"
            ))),
        }
    }
}

/// Support of the moment prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorSides {
    /// Positive bump only, matching one-sided nulls `mu <= 0`.
    #[default]
    OneSided,
    /// Symmetric bumps at `-delta_min` and `delta_min`.
    TwoSided,
}

impl FromStr for PriorSides {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "one_sided" => Ok(PriorSides::OneSided),
            "two_sided" => Ok(PriorSides::TwoSided),
            other => Err(Error::config(format!(
                "unknown prior support '{other}' (expected one_sided or two_sided)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EProcessFamily {
    pub kind: FamilyKind,
    /// Alternative standardized effect for `gaussian_lr` and `t_lr`.
    pub delta: f64,
    /// Minimal relevant effect for `mom`.
    pub delta_min: f64,
    /// Gauss-Legendre node count for `mom`.
    pub quadrature_nodes: usize,
    #[serde(default)]
    pub prior: PriorSides,
}

pub const DEFAULT_QUADRATURE_NODES: usize = 64;
pub const MIN_QUADRATURE_NODES: usize = 16;

impl EProcessFamily {
    pub fn gaussian_lr(delta: f64) -> Self {
        Self { kind: FamilyKind::GaussianLr, delta, ..Self::defaults() }
    }

    pub fn t_lr(delta: f64) -> Self {
        Self { kind: FamilyKind::TLr, delta, ..Self::defaults() }
    }

    pub fn mom(delta_min: f64) -> Self {
        Self { kind: FamilyKind::Mom, delta_min, ..Self::defaults() }
    }

    fn defaults() -> Self {
        Self {
            kind: FamilyKind::GaussianLr,
            delta: 0.5,
            delta_min: 0.5,
            quadrature_nodes: DEFAULT_QUADRATURE_NODES,
            prior: PriorSides::OneSided,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            FamilyKind::GaussianLr | FamilyKind::TLr => {
                if !(self.delta.is_finite() && self.delta > 0.0) {
                    return Err(Error::config(format!(
                        "{} needs delta > 0, got {}",
                        self.kind, self.delta
                    )));
                }
            }
            FamilyKind::Mom => {
                if !(self.delta_min.is_finite() && self.delta_min > 0.0) {
                    return Err(Error::config(format!(
                        "mom needs delta_min > 0, got {}",
                        self.delta_min
                    )));
                }
                if self.quadrature_nodes < MIN_QUADRATURE_NODES {
                    return Err(Error::config(format!(
                        "mom needs at least {MIN_QUADRATURE_NODES} quadrature nodes, got {}",
                        self.quadrature_nodes
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Running state of one elementary e-process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementaryState {
    pub n: u64,
    pub sum: f64,
    pub sumsq: f64,
    pub log_e: f64,
    /// The latest t statistic was capped because the sample variance vanished.
    #[serde(default)]
    pub degenerate: bool,
}

impl ElementaryState {
    pub const fn fresh() -> Self {
        Self { n: 0, sum: 0.0, sumsq: 0.0, log_e: 0.0, degenerate: false }
    }

    pub fn e_value(&self) -> f64 {
        e_from_log(self.log_e)
    }

    fn absorb(mut self, y: f64) -> Result<Self> {
        if !y.is_finite() {
            return Err(Error::input(format!("non-finite observation {y}")));
        }
        self.n += 1;
        self.sum += y;
        self.sumsq += y * y;
        Ok(self)
    }
}

impl Default for ElementaryState {
    fn default() -> Self {
        Self::fresh()
    }
}

pub fn init_eprocess(family: &EProcessFamily) -> Result<ElementaryState> {
    family.validate()?;
    Ok(ElementaryState::fresh())
}

/// Gaussian likelihood-ratio step: the log e-value is `delta * sum - n * delta^2 / 2`.
pub fn update_gaussian_lr(state: ElementaryState, y: f64, delta: f64) -> Result<ElementaryState> {
    let mut next = state.absorb(y)?;
    next.log_e = delta * next.sum - next.n as f64 * delta * delta / 2.0;
    Ok(next)
}

/// `ln [ L(t | sqrt(n_t) delta, lambda) / L(t | 0, lambda) ]`.
pub fn log_t_lr(t: f64, n_t: u64, lambda: u64, delta: f64) -> Result<f64> {
    if lambda < 1 || n_t < 2 {
        return Err(Error::input(format!(
            "t likelihood ratio needs n_t >= 2 and lambda >= 1, got n_t = {n_t}, lambda = {lambda}"
        )));
    }
    if delta == 0.0 {
        return Ok(0.0);
    }
    let mu = (n_t as f64).sqrt() * delta;
    Ok(noncentral_t_logpdf(t, lambda, mu)? - central_t_logpdf(t, lambda))
}

pub fn t_lr(t: f64, n_t: u64, lambda: u64, delta: f64) -> Result<f64> {
    log_t_lr(t, n_t, lambda, delta).map(e_from_log)
}

/// t likelihood-ratio step. Below two observations the e-value stays at 1.
pub fn update_t_lr(state: ElementaryState, y: f64, delta: f64) -> Result<ElementaryState> {
    let mut next = state.absorb(y)?;
    if next.n < 2 {
        return Ok(next);
    }
    let stat = t_from_moments(next.n, next.sum, next.sumsq);
    next.log_e = log_t_lr(stat.t, stat.n_t, stat.lambda, delta)?;
    next.degenerate = stat.capped;
    Ok(next)
}

/// Discretised moment prior on the standardized effect.
///
/// Density proportional to `delta^2 exp(-delta^2 / delta_min^2)`, whose modes
/// sit at `+-delta_min`, integrated with Gauss-Legendre on `(0, 6 delta_min]`
/// (mirrored for the two-sided variant) and normalised over the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MomPrior {
    deltas: Vec<f64>,
    log_weights: Vec<f64>,
}

impl MomPrior {
    pub fn new(delta_min: f64, nodes: usize, sides: PriorSides) -> Result<Self> {
        if !(delta_min.is_finite() && delta_min > 0.0) {
            return Err(Error::config(format!("mom needs delta_min > 0, got {delta_min}")));
        }
        if nodes < MIN_QUADRATURE_NODES {
            return Err(Error::config(format!(
                "mom needs at least {MIN_QUADRATURE_NODES} quadrature nodes, got {nodes}"
            )));
        }
        let rule = gauss_legendre(nodes, 0.0, 6.0 * delta_min);
        let mut deltas = Vec::with_capacity(nodes * 2);
        let mut weights = Vec::with_capacity(nodes * 2);
        for &(d, w) in &rule {
            let density = d * d * (-(d * d) / (delta_min * delta_min)).exp();
            deltas.push(d);
            weights.push(w * density);
            if sides == PriorSides::TwoSided {
                deltas.push(-d);
                weights.push(w * density);
            }
        }
        let total: f64 = weights.iter().sum();
        let log_weights = weights.iter().map(|w| (w / total).ln()).collect();
        Ok(Self { deltas, log_weights })
    }

    /// All prior mass on a single effect size.
    pub fn point_mass(delta: f64) -> Self {
        Self { deltas: vec![delta], log_weights: vec![0.0] }
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.deltas.iter().copied().zip(self.log_weights.iter().map(|lw| lw.exp()))
    }

    fn log_mixture(&self, t: f64, n: u64) -> Result<f64> {
        let lambda = n - 1;
        let central = central_t_logpdf(t, lambda);
        let sqrt_n = (n as f64).sqrt();
        let mut terms = Vec::with_capacity(self.deltas.len());
        for (&d, &lw) in self.deltas.iter().zip(&self.log_weights) {
            let lr = if d == 0.0 { 0.0 } else { noncentral_t_logpdf(t, lambda, sqrt_n * d)? - central };
            terms.push(lw + lr);
        }
        Ok(log_sum_exp(&terms))
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Moment-prior mixture step. Below two observations the e-value stays at 1.
pub fn update_mom(state: ElementaryState, y: f64, prior: &MomPrior) -> Result<ElementaryState> {
    let mut next = state.absorb(y)?;
    if next.n < 2 {
        return Ok(next);
    }
    let stat = t_from_moments(next.n, next.sum, next.sumsq);
    next.log_e = prior.log_mixture(stat.t, stat.n_t)?;
    next.degenerate = stat.capped;
    Ok(next)
}

/// A validated family together with any precomputed quadrature.
#[derive(Debug, Clone)]
pub struct EProcess {
    family: EProcessFamily,
    prior: Option<MomPrior>,
}

impl EProcess {
    pub fn new(family: EProcessFamily) -> Result<Self> {
        family.validate()?;
        let prior = match family.kind {
            FamilyKind::Mom => {
                Some(MomPrior::new(family.delta_min, family.quadrature_nodes, family.prior)?)
            }
            _ => None,
        };
        Ok(Self { family, prior })
    }

    pub fn family(&self) -> &EProcessFamily {
        &self.family
    }

    pub fn update(&self, state: ElementaryState, y: f64) -> Result<ElementaryState> {
        match (self.family.kind, &self.prior) {
            (FamilyKind::GaussianLr, _) => update_gaussian_lr(state, y, self.family.delta),
            (FamilyKind::TLr, _) => update_t_lr(state, y, self.family.delta),
            (FamilyKind::Mom, Some(prior)) => update_mom(state, y, prior),
            (FamilyKind::Mom, None) => unreachable!("mom process built without prior"),
        }
    }
}

/// One e-process per hypothesis, advanced together one observation row at a time.
#[derive(Debug, Clone)]
pub struct ProcessBank {
    process: EProcess,
    states: Vec<ElementaryState>,
}

impl ProcessBank {
    pub fn new(family: EProcessFamily, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::config("need at least one hypothesis"));
        }
        Ok(Self { process: EProcess::new(family)?, states: vec![ElementaryState::fresh(); m] })
    }

    /// Rebuilds a bank from persisted states; all must share one observation count.
    pub fn from_states(family: EProcessFamily, states: Vec<ElementaryState>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::config("need at least one hypothesis"));
        }
        let n = states[0].n;
        if states.iter().any(|s| s.n != n) {
            return Err(Error::input("persisted e-process states disagree on observation count"));
        }
        Ok(Self { process: EProcess::new(family)?, states })
    }

    pub fn m(&self) -> usize {
        self.states.len()
    }

    pub fn time(&self) -> u64 {
        self.states[0].n
    }

    pub fn family(&self) -> &EProcessFamily {
        self.process.family()
    }

    pub fn states(&self) -> &[ElementaryState] {
        &self.states
    }

    /// Consumes one observation per hypothesis. On error no state changes.
    pub fn update(&mut self, ys: &[f64]) -> Result<()> {
        if ys.len() != self.states.len() {
            return Err(Error::input(format!(
                "observation row has {} values, expected {}",
                ys.len(),
                self.states.len()
            )));
        }
        let next = self
            .states
            .iter()
            .zip(ys)
            .map(|(s, &y)| self.process.update(*s, y))
            .collect::<Result<Vec<_>>>()?;
        self.states = next;
        Ok(())
    }

    pub fn e_values(&self) -> Vec<f64> {
        self.states.iter().map(ElementaryState::e_value).collect()
    }
}

fn check_e_values(e: &[f64]) -> Result<()> {
    if e.is_empty() {
        return Err(Error::input("cannot merge an empty list of e-values"));
    }
    if let Some(bad) = e.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::input(format!("e-values must be finite and nonnegative, got {bad}")));
    }
    Ok(())
}

/// Arithmetic mean; valid for intersections under arbitrary dependence.
pub fn merge_average(e: &[f64]) -> Result<f64> {
    check_e_values(e)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

/// Product; valid only when the inputs are independent.
pub fn merge_product(e: &[f64]) -> Result<f64> {
    check_e_values(e)?;
    Ok(e.iter().product())
}

/// Level-`alpha` e-test: rejects iff `e >= 1/alpha`.
pub fn local_test(e: f64, alpha: f64) -> Result<bool> {
    check_alpha(alpha)?;
    if e.is_nan() || e < 0.0 {
        return Err(Error::input(format!("e-value must be nonnegative, got {e}")));
    }
    Ok(e >= 1.0 / alpha)
}

/// Rejects levels outside the open unit interval.
pub fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PProcessSeries {
    pub values: Vec<f64>,
}

/// `p[n] = min_{l <= n} min(1 / e[l], 1)`. Zero e-values contribute 1.
pub fn e_to_p_process(e_series: &[f64]) -> Result<PProcessSeries> {
    if let Some(bad) = e_series.iter().find(|v| v.is_nan() || **v < 0.0) {
        return Err(Error::input(format!("e-values must be nonnegative, got {bad}")));
    }
    let mut running = 1.0f64;
    let values = e_series
        .iter()
        .map(|&e| {
            running = running.min((1.0 / e).min(1.0));
            running
        })
        .collect();
    Ok(PProcessSeries { values })
}

/// Time-indexed e-values, one row of `m` per time; row 0 is all ones.
#[derive(Debug, Clone, PartialEq)]
pub struct EValueMatrix {
    m: usize,
    values: Vec<f64>,
}

impl EValueMatrix {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::config("need at least one hypothesis"));
        }
        Ok(Self { m, values: vec![1.0; m] })
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.m {
            return Err(Error::input(format!(
                "e-value row has {} entries, expected {}",
                row.len(),
                self.m
            )));
        }
        if let Some(bad) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::input(format!("e-values must be finite and nonnegative, got {bad}")));
        }
        self.values.extend_from_slice(row);
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of time points after time 0.
    pub fn horizon(&self) -> usize {
        self.values.len() / self.m - 1
    }

    pub fn row(&self, time: usize) -> &[f64] {
        &self.values[time * self.m..(time + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.m)
    }

    /// E-process path of hypothesis `i` (0-based), times 0..=horizon.
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.rows().map(|r| r[i]).collect()
    }
}
