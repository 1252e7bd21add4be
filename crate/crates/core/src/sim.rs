//! Monte-Carlo harness: subject-by-subject equicorrelated normal data, one
//! e-process per hypothesis, bounds for a grid of discovery sets, and
//! aggregation of validity (violation proportion) and power (mean bound).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_testing::{BoundSeries, BoundTracker, DiscoverySet, SortedEValues};
use crate::distributions::{sample_equicorrelated_into, substream, EquicorrelatedModel};
use crate::eprocess::{check_alpha, EProcessFamily, ProcessBank};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Number of hypotheses.
    pub m: usize,
    /// Number of false nulls; they occupy the highest indices.
    pub n_false: usize,
    /// Number of subjects (time points).
    pub horizon: usize,
    /// Mean of the false-null coordinates.
    pub mu_alt: f64,
    pub rho: f64,
    pub alpha: f64,
    /// Target true discovery proportions, one discovery set each.
    pub pi1_list: Vec<f64>,
    pub r_size: usize,
    pub iterations: usize,
    /// First reported time.
    pub burn_in: usize,
    pub family: EProcessFamily,
    pub ard: bool,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            m: 90,
            n_false: 45,
            horizon: 100,
            mu_alt: 1.0,
            rho: 0.2,
            alpha: 0.2,
            pi1_list: (1..=9).map(|k| k as f64 / 10.0).collect(),
            r_size: 30,
            iterations: 1000,
            burn_in: 11,
            family: EProcessFamily::mom(0.5),
            ard: false,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::config("m must be positive"));
        }
        if self.n_false > self.m {
            return Err(Error::config(format!("n_false = {} exceeds m = {}", self.n_false, self.m)));
        }
        if self.horizon == 0 {
            return Err(Error::config("N must be positive"));
        }
        if !self.mu_alt.is_finite() {
            return Err(Error::config("mu_alt must be finite"));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::config(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        check_alpha(self.alpha)?;
        if self.iterations == 0 {
            return Err(Error::config("iterations must be positive"));
        }
        if self.burn_in == 0 || self.burn_in > self.horizon {
            return Err(Error::config(format!(
                "burn_in must lie in [1, N = {}], got {}",
                self.horizon, self.burn_in
            )));
        }
        self.family.validate()?;
        build_discovery_sets(self).map(|_| ())
    }

    /// Number of false nulls placed in the set for target `pi1`.
    fn false_in_set(&self, pi1: f64) -> usize {
        (pi1 * self.r_size as f64).round() as usize
    }
}

/// One set per `pi1`: `round(pi1 * r_size)` false nulls and the rest true
/// nulls, lowest indices of each class first.
pub fn build_discovery_sets(config: &ScenarioConfig) -> Result<Vec<DiscoverySet>> {
    if config.r_size == 0 {
        return Err(Error::config("r_size must be positive"));
    }
    if config.pi1_list.is_empty() {
        return Err(Error::config("pi1_list is empty"));
    }
    let n_true = config.m.saturating_sub(config.n_false);
    let first_false = n_true + 1;
    config
        .pi1_list
        .iter()
        .map(|&pi1| {
            if !(pi1 > 0.0 && pi1 <= 1.0) {
                return Err(Error::config(format!("pi1 = {pi1} must lie in (0, 1]")));
            }
            let k = config.false_in_set(pi1);
            let trues = config.r_size - k.min(config.r_size);
            if k == 0 {
                return Err(Error::config(format!(
                    "pi1 = {pi1} puts no false nulls into a set of size {}",
                    config.r_size
                )));
            }
            if k > config.n_false || trues > n_true {
                return Err(Error::config(format!(
                    "pi1 = {pi1} needs {k} false and {trues} true nulls; only {} and {n_true} exist",
                    config.n_false
                )));
            }
            let indices = (1..=trues).chain(first_false..first_false + k).collect();
            DiscoverySet::new(format!("pi1={pi1}"), indices)
        })
        .collect()
}

/// Bound series for every set, from every iteration, covering times 0..=N.
#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub sets: Vec<DiscoverySet>,
    /// Number of true nulls in each set.
    pub true_tau: Vec<usize>,
    /// `iterations[i][j]` is the series of set `j` in iteration `i`.
    pub iterations: Vec<Vec<BoundSeries>>,
}

pub fn simulate(config: &ScenarioConfig) -> Result<SimulationRun> {
    config.validate()?;
    let sets = build_discovery_sets(config)?;
    let n_true = config.m - config.n_false;
    // Nulls are mu <= 0, so with mu_alt <= 0 every hypothesis is a true null.
    let true_tau = sets
        .iter()
        .map(|s| {
            if config.mu_alt > 0.0 {
                s.indices().iter().filter(|&&i| i <= n_true).count()
            } else {
                s.len()
            }
        })
        .collect();
    let mut mu = vec![0.0; config.m];
    mu[n_true..].iter_mut().for_each(|v| *v = config.mu_alt);
    let model = EquicorrelatedModel::new(mu, config.rho)?;
    let iterations = (0..config.iterations)
        .into_par_iter()
        .map(|i| run_iteration(config, &sets, &model, i as u64))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulationRun { sets, true_tau, iterations })
}

fn run_iteration(
    config: &ScenarioConfig,
    sets: &[DiscoverySet],
    model: &EquicorrelatedModel,
    index: u64,
) -> Result<Vec<BoundSeries>> {
    let mut rng = substream(config.seed, index);
    let mut bank = ProcessBank::new(config.family.clone(), config.m)?;
    let mut trackers = sets
        .iter()
        .map(|s| BoundTracker::new(s.clone(), config.m, config.alpha))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = vec![Vec::with_capacity(config.horizon + 1); sets.len()];
    let mut ys = vec![0.0; config.m];
    let mut e = vec![1.0; config.m];
    for time in 0..=config.horizon {
        if time > 0 {
            sample_equicorrelated_into(model, &mut rng, &mut ys);
            bank.update(&ys)?;
            e = bank.e_values();
        }
        let sorted = SortedEValues::new(&e)?;
        for (tracker, out) in trackers.iter_mut().zip(rows.iter_mut()) {
            out.push(tracker.observe_sorted(time, &sorted)?);
        }
    }
    Ok(sets
        .iter()
        .zip(rows)
        .map(|(s, r)| BoundSeries::from_rows(s.len(), &r, config.ard))
        .collect())
}

/// Fraction of iterations whose reported bound undercuts `true_tau`
/// (equivalently, whose TDP bound exceeds the true TDP), per time.
pub fn violation_proportion(bounds: &[&BoundSeries], true_tau: usize) -> Result<Vec<f64>> {
    let first = bounds.first().ok_or_else(|| Error::input("no iterations to aggregate"))?;
    let len = first.len();
    if bounds.iter().any(|b| b.len() != len) {
        return Err(Error::input("bound series have different horizons"));
    }
    let n = bounds.len() as f64;
    Ok((0..len)
        .map(|t| bounds.iter().filter(|b| b.reported_c()[t] < true_tau).count() as f64 / n)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsRow {
    pub time: usize,
    pub pi1: f64,
    pub violation_prop: f64,
    pub mean_bound: f64,
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

/// Linear-interpolation quantile of sorted data (R's type 7).
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl SimulationRun {
    pub fn metrics(&self, config: &ScenarioConfig) -> Result<MetricsTable> {
        if self.iterations.is_empty() {
            return Err(Error::input("no iterations to aggregate"));
        }
        let mut violations = Vec::with_capacity(self.sets.len());
        for (j, &tau) in self.true_tau.iter().enumerate() {
            let series: Vec<&BoundSeries> = self.iterations.iter().map(|it| &it[j]).collect();
            violations.push(violation_proportion(&series, tau)?);
        }
        let tdp: Vec<Vec<Vec<f64>>> = self
            .iterations
            .iter()
            .map(|it| it.iter().map(BoundSeries::reported_tdp).collect())
            .collect();
        let n = self.iterations.len() as f64;
        let mut rows = Vec::new();
        for time in config.burn_in..=config.horizon {
            for (j, &pi1) in config.pi1_list.iter().enumerate() {
                let mut values: Vec<f64> = tdp.iter().map(|it| it[j][time]).collect();
                let mean_bound = values.iter().sum::<f64>() / n;
                values.sort_by(f64::total_cmp);
                let row = MetricsRow {
                    time,
                    pi1,
                    violation_prop: violations[j][time],
                    mean_bound,
                    q10: quantile_sorted(&values, 0.1),
                    q50: quantile_sorted(&values, 0.5),
                    q90: quantile_sorted(&values, 0.9),
                };
                if [row.violation_prop, row.mean_bound, row.q10, row.q50, row.q90]
                    .iter()
                    .any(|v| !v.is_finite())
                {
                    return Err(Error::Numeric(format!(
                        "non-finite metric at time {time}, pi1 = {pi1}: {row:?}"
                    )));
                }
                rows.push(row);
            }
        }
        Ok(MetricsTable { rows })
    }
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<MetricsTable> {
    simulate(config)?.metrics(config)
}

/// First time each target is reached within `tol`, plus the worst violation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSummary {
    pub max_violation: f64,
    pub convergence: Vec<(f64, Option<usize>)>,
}

impl MetricsTable {
    pub fn summary(&self, pi1_list: &[f64], tol: f64) -> SimulationSummary {
        let max_violation = self.rows.iter().map(|r| r.violation_prop).fold(0.0, f64::max);
        let convergence = pi1_list
            .iter()
            .map(|&pi1| {
                let time = self
                    .rows
                    .iter()
                    .find(|r| r.pi1 == pi1 && (r.mean_bound - pi1).abs() <= tol)
                    .map(|r| r.time);
                (pi1, time)
            })
            .collect();
        SimulationSummary { max_violation, convergence }
    }

    pub fn at(&self, time: usize, pi1: f64) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.time == time && r.pi1 == pi1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            m: 12,
            n_false: 6,
            horizon: 20,
            mu_alt: 1.0,
            pi1_list: vec![0.25, 0.5, 0.75],
            r_size: 4,
            iterations: 8,
            burn_in: 3,
            family: EProcessFamily::gaussian_lr(0.5),
            ard: true,
            seed: 11,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn default_sets_have_requested_composition() {
        let sets = build_discovery_sets(&ScenarioConfig::default()).unwrap();
        assert_eq!(sets.len(), 9);
        let last = &sets[8];
        assert_eq!(last.len(), 30);
        assert_eq!(last.indices().iter().filter(|&&i| i > 45).count(), 27);
        assert_eq!(&last.indices()[..3], &[1, 2, 3]);
        assert_eq!(&last.indices()[3..6], &[46, 47, 48]);
    }

    #[test]
    fn half_and_half() {
        let cfg = ScenarioConfig { r_size: 10, pi1_list: vec![0.5], ..ScenarioConfig::default() };
        let sets = build_discovery_sets(&cfg).unwrap();
        assert_eq!(sets[0].indices().iter().filter(|&&i| i > 45).count(), 5);
    }

    #[test]
    fn unconstructible_sets_name_the_value() {
        let cfg = ScenarioConfig { r_size: 4, pi1_list: vec![0.1], ..ScenarioConfig::default() };
        let err = build_discovery_sets(&cfg).unwrap_err().to_string();
        assert!(err.contains("0.1"), "{err}");
        let cfg = ScenarioConfig { m: 30, n_false: 15, r_size: 30, ..ScenarioConfig::default() };
        let err = build_discovery_sets(&cfg).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("pi1 = 0.1"));
    }

    #[test]
    fn violation_examples() {
        let exact = BoundSeries::from_instantaneous(4, 0, vec![2, 2], false);
        assert_eq!(violation_proportion(&[&exact, &exact], 2).unwrap(), vec![0.0, 0.0]);
        let bad = BoundSeries::from_instantaneous(4, 0, vec![2, 1], false);
        assert_eq!(violation_proportion(&[&exact, &bad], 2).unwrap(), vec![0.0, 0.5]);
        assert!(violation_proportion(&[], 2).is_err());
    }

    #[test]
    fn quantiles_type7() {
        let v = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
        assert!((quantile_sorted(&v, 0.1) - 0.1).abs() < 1e-15);
        assert!((quantile_sorted(&[1.0, 3.0], 0.5) - 2.0).abs() < 1e-15);
        assert_eq!(quantile_sorted(&[4.0], 0.9), 4.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = small();
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), (cfg.horizon - cfg.burn_in + 1) * 3);
        assert_eq!(a.rows[0].time, 3);
    }

    #[test]
    fn all_null_bounds_stay_near_zero() {
        let cfg = ScenarioConfig { mu_alt: 0.0, iterations: 200, ..small() };
        let run = simulate(&cfg).unwrap();
        assert!(run.sets.iter().zip(&run.true_tau).all(|(s, &t)| s.len() == t));
        let table = run.metrics(&cfg).unwrap();
        let tol = cfg.alpha + 3.0 * (cfg.alpha * (1.0 - cfg.alpha) / 200.0).sqrt();
        assert!(table.rows.iter().all(|r| r.violation_prop <= tol));
        assert!(table.rows.iter().all(|r| r.mean_bound < 0.1));
    }

    #[test]
    fn ard_series_nondecreasing() {
        let run = simulate(&small()).unwrap();
        for it in &run.iterations {
            for s in it {
                assert!(s.reported_tdp().windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }
}
