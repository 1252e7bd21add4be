//! Randomised cross-check of the shortcut against exhaustive closed testing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::closed_testing::{brute_force_bound, shortcut_bound, DiscoverySet};
use crate::error::{Error, Result};

/// Largest `m` used for random instances.
pub const ORACLE_MAX_M: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleInstance {
    pub e: Vec<f64>,
    pub r: Vec<usize>,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub instance_index: usize,
    pub instance: OracleInstance,
    pub shortcut: usize,
    pub brute_force: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct OracleReport {
    pub checked: usize,
    pub mismatches: Vec<Mismatch>,
}

/// Draws `m` uniformly from `1..=max_m`, e-values log-uniform on
/// `[e^-3, e^5]`, a random nonempty `R` and `alpha` from {0.05, 0.2}.
///
/// With `ties`, half of the instances put every e-value exactly at `1/alpha`
/// and the rest mix exact ties with random values.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, max_m: usize, ties: bool) -> OracleInstance {
    let m = rng.random_range(1..=max_m);
    let alpha = if rng.random_bool(0.5) { 0.05 } else { 0.2 };
    let all_tied = ties && rng.random_bool(0.5);
    let e = (0..m)
        .map(|_| {
            if all_tied || (ties && rng.random_bool(0.5)) {
                1.0 / alpha
            } else {
                rng.random_range(-3.0f64..5.0).exp()
            }
        })
        .collect();
    let r = loop {
        let r: Vec<usize> = (1..=m).filter(|_| rng.random_bool(0.5)).collect();
        if !r.is_empty() {
            break r;
        }
    };
    OracleInstance { e, r, alpha }
}

pub fn check_instance(instance: &OracleInstance) -> Result<(usize, usize)> {
    let set = DiscoverySet::new("R", instance.r.clone())?;
    let (fast, _) = shortcut_bound(&instance.e, &set, instance.alpha)?;
    let slow = brute_force_bound(&instance.e, &set, instance.alpha)?;
    Ok((fast, slow))
}

pub fn run_oracle(instances: usize, seed: u64, max_m: usize, ties: bool) -> Result<OracleReport> {
    if max_m == 0 || max_m > ORACLE_MAX_M {
        return Err(Error::config(format!(
            "random oracle instances need 1 <= m <= {ORACLE_MAX_M}, got {max_m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport::default();
    for i in 0..instances {
        let instance = random_instance(&mut rng, max_m, ties);
        let (fast, slow) = check_instance(&instance)?;
        report.checked += 1;
        if fast != slow {
            report.mismatches.push(Mismatch { instance_index: i, instance, shortcut: fast, brute_force: slow });
        }
    }
    Ok(report)
}
