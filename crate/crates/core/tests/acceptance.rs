//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Tolerances are fixed constants below.

mod common;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use anytime_tdp::closed_testing::{brute_force_bound, shortcut_bound, DiscoverySet};
use anytime_tdp::distributions::{noncentral_t_logpdf, substream};
use anytime_tdp::eprocess::{e_to_p_process, init_eprocess, EProcess, EProcessFamily, FamilyKind};
use anytime_tdp::io::{default_columns, write_table};
use anytime_tdp::oracle::{check_instance, random_instance};
use anytime_tdp::sim::{simulate, ScenarioConfig};
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};
use rand::Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const ORACLE_INSTANCES: usize = 1000;
const ORACLE_TIME_LIMIT_S: f64 = 10.0;
const VALIDITY_ITERATIONS: usize = 500;
const VALIDITY_RUNTIME_LIMIT_S: f64 = 120.0;
const POWER_TIME: usize = 50;
const POWER_TOLERANCE: f64 = 0.05;
const VILLE_STREAMS: usize = 10_000;
const DENSITY_REL_TOL: f64 = 1e-8;
const MASS_TOL: f64 = 1e-6;
const RESUME_SPLITS: usize = 100;

fn main() {
    let criteria: [Criterion; 9] = [
        ("shortcut equals exhaustive closed testing", oracle_equivalence),
        ("worked instance", worked_instance),
        ("anytime validity of the scaled simulation", validity),
        ("convergence to the true TDP", power),
        ("ARD bounds are monotone", ard_monotone),
        ("Ville crossing frequency", ville),
        ("noncentral t accuracy", noncentral_t),
        ("e-to-p process", e_to_p),
        ("incremental resumption", resumption),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = check();
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let mut rng = substream(2024, 0);
    let mut mismatches = Vec::new();
    let mut large = 0;
    for k in 0..ORACLE_INSTANCES {
        // Every fourth instance is built around ties at the threshold.
        let inst = random_instance(&mut rng, 12, k % 4 == 3);
        large += usize::from(inst.e.len() >= 10);
        let (fast, slow) = check_instance(&inst).map_err(|e| e.to_string())?;
        if fast != slow {
            mismatches.push(format!("e={:?} R={:?} alpha={} shortcut={fast} brute={slow}", inst.e, inst.r, inst.alpha));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    if !mismatches.is_empty() {
        return Err(format!("{} mismatches, first: {}", mismatches.len(), mismatches[0]));
    }
    if secs >= ORACLE_TIME_LIMIT_S {
        return Err(format!("{ORACLE_INSTANCES} instances agree but took {secs:.2}s (limit {ORACLE_TIME_LIMIT_S}s)"));
    }
    Ok(format!(
        "{ORACLE_INSTANCES}/{ORACLE_INSTANCES} instances agree ({large} with m >= 10, a quarter tie-heavy) in {secs:.2}s (limit {ORACLE_TIME_LIMIT_S}s)"
    ))
}

fn worked_instance() -> Outcome {
    let e = [20.0, 8.0, 0.5, 10.0];
    let r = DiscoverySet::new("R", vec![1, 2]).map_err(|e| e.to_string())?;
    let (fast, trace) = shortcut_bound(&e, &r, 0.2).map_err(|e| e.to_string())?;
    let slow = brute_force_bound(&e, &r, 0.2).map_err(|e| e.to_string())?;
    let tdp_fast = 1.0 - fast as f64 / 2.0;
    let tdp_slow = 1.0 - slow as f64 / 2.0;
    let detail = format!("shortcut c={fast} (TDP {tdp_fast}), brute force c={slow} (TDP {tdp_slow}), k*={}, rhs={}", trace.k_star, trace.rhs);
    if fast == 1 && slow == 1 && tdp_fast == 0.5 && tdp_slow == 0.5 {
        Ok(detail)
    } else {
        Err(format!("expected c=1 and TDP 0.5; got {detail}"))
    }
}

fn scaled_config(mu_alt: f64, ard: bool) -> ScenarioConfig {
    ScenarioConfig {
        m: 30,
        n_false: 15,
        horizon: 100,
        mu_alt,
        rho: 0.2,
        alpha: 0.2,
        r_size: 10,
        iterations: VALIDITY_ITERATIONS,
        family: EProcessFamily::gaussian_lr(0.5),
        ard,
        seed: 20240501,
        ..ScenarioConfig::default()
    }
}

fn validity() -> Outcome {
    let config = scaled_config(1.0, false);
    let started = Instant::now();
    let run = simulate(&config).map_err(|e| e.to_string())?;
    let table = run.metrics(&config).map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    let limit = 0.2 + 2.5 * (0.2f64 * 0.8 / VALIDITY_ITERATIONS as f64).sqrt();
    let worst = table
        .rows
        .iter()
        .max_by(|a, b| a.violation_prop.total_cmp(&b.violation_prop))
        .ok_or("empty metrics table")?;
    let detail = format!(
        "max violation proportion {:.4} (pi1={}, time {}) over times {}..={} and {} sets, limit {limit:.4}; runtime {secs:.1}s (limit {VALIDITY_RUNTIME_LIMIT_S}s)",
        worst.violation_prop,
        worst.pi1,
        worst.time,
        config.burn_in,
        config.horizon,
        config.pi1_list.len()
    );
    if worst.violation_prop <= limit && secs <= VALIDITY_RUNTIME_LIMIT_S {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn power() -> Outcome {
    let config = scaled_config(1.5, true);
    let run = simulate(&config).map_err(|e| e.to_string())?;
    let table = run.metrics(&config).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let mut ok = true;
    for pi1 in [0.1, 0.5, 0.9] {
        let row = table.at(POWER_TIME, pi1).ok_or(format!("no metrics row for pi1={pi1}"))?;
        let gap = (row.mean_bound - pi1).abs();
        ok &= gap <= POWER_TOLERANCE;
        parts.push(format!("pi1={pi1}: mean bound {:.4} (gap {gap:.4})", row.mean_bound));
    }
    let detail = format!("at time {POWER_TIME}, tolerance {POWER_TOLERANCE}: {}", parts.join(", "));
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ard_monotone() -> Outcome {
    let mut checked = 0;
    let mut violations = 0;
    for mu_alt in [1.0, 1.5] {
        let config = scaled_config(mu_alt, true);
        let run = simulate(&config).map_err(|e| e.to_string())?;
        for iteration in &run.iterations {
            for series in iteration {
                let tdp = series.reported_tdp();
                checked += 1;
                if tdp.windows(2).any(|w| w[1] < w[0]) {
                    violations += 1;
                }
            }
        }
    }
    let detail = format!("{violations} decreasing series among {checked} (iterations x sets)");
    if violations == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ville() -> Outcome {
    let family = EProcessFamily::gaussian_lr(0.5);
    let process = EProcess::new(family.clone()).map_err(|e| e.to_string())?;
    let mut crossed = 0;
    for s in 0..VILLE_STREAMS {
        let mut rng = substream(777, s as u64);
        let mut state = init_eprocess(&family).map_err(|e| e.to_string())?;
        for _ in 0..100 {
            state = process.update(state, rng.sample(StandardNormal)).map_err(|e| e.to_string())?;
            if state.e_value() >= 5.0 {
                crossed += 1;
                break;
            }
        }
    }
    let frac = crossed as f64 / VILLE_STREAMS as f64;
    let limit = 0.2 + 3.0 * (0.2f64 * 0.8 / VILLE_STREAMS as f64).sqrt();
    let detail = format!("{crossed}/{VILLE_STREAMS} null streams reached e >= 5 by time 100 ({frac:.4}, limit {limit:.4})");
    if frac <= limit {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn noncentral_t() -> Outcome {
    let mut worst_rel = (0.0, 0u64, 0.0, 0.0);
    let mut worst_mass = (0.0, 0u64, 0.0);
    for lambda in [1u64, 5, 30] {
        for mu in [0.0, 1.0, 3.0] {
            for k in -40..=40 {
                let t = k as f64 * 0.25;
                let got = noncentral_t_logpdf(t, lambda, mu).map_err(|e| e.to_string())?.exp();
                let want = common::noncentral_t_pdf_oracle(t, lambda, mu);
                let rel = (got - want).abs() / want;
                if rel.is_nan() || rel > worst_rel.0 {
                    worst_rel = (rel, lambda, mu, t);
                }
            }
            let mass = common::total_mass(|t| noncentral_t_logpdf(t, lambda, mu).unwrap().exp(), mu, 1.0 + mu);
            let err = (mass - 1.0).abs();
            if err.is_nan() || err > worst_mass.0 {
                worst_mass = (err, lambda, mu);
            }
        }
    }
    let detail = format!(
        "worst relative error {:.2e} (lambda={}, mu={}, t={}; limit {DENSITY_REL_TOL:e}), worst |mass - 1| {:.2e} (lambda={}, mu={}; limit {MASS_TOL:e})",
        worst_rel.0, worst_rel.1, worst_rel.2, worst_rel.3, worst_mass.0, worst_mass.1, worst_mass.2
    );
    if worst_rel.0 <= DENSITY_REL_TOL && worst_mass.0 <= MASS_TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn e_to_p() -> Outcome {
    let mut runner = TestRunner::new(ProptestConfig { cases: 2000, failure_persistence: None, ..ProptestConfig::default() });
    let strategy = prop::collection::vec(
        prop_oneof![4 => (-6.0f64..9.0).prop_map(f64::exp), 1 => Just(0.0), 1 => Just(1.0), 1 => Just(f64::MAX)],
        1..300,
    );
    runner
        .run(&strategy, |e| {
            let p = e_to_p_process(&e).map_err(|err| TestCaseError::fail(err.to_string()))?.values;
            prop_assert_eq!(p.len(), e.len());
            let mut running_max = 0.0f64;
            for n in 0..e.len() {
                running_max = running_max.max(e[n]);
                prop_assert!(p[n] > 0.0 && p[n] <= 1.0, "p[{}] = {} outside (0, 1]", n, p[n]);
                prop_assert_eq!(p[n], (1.0 / running_max).min(1.0));
                if n > 0 {
                    prop_assert!(p[n] <= p[n - 1], "increase at {}", n);
                }
            }
            Ok(())
        })
        .map(|_| "2000 random e-series: nonincreasing, in (0, 1], equal to min(1, 1/running max)".to_string())
        .map_err(|e| e.to_string())
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_anytime-tdp")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} exited with {}: {}", out.status, String::from_utf8_lossy(&out.stderr)))
    }
}

fn write_input(path: &Path, times: std::ops::Range<usize>, rows: &[Vec<f64>]) -> Result<(), String> {
    let mut buf = Vec::new();
    let times: Vec<u64> = times.map(|t| t as u64).collect();
    let m = rows.first().map_or(0, Vec::len);
    write_table(&mut buf, &default_columns(m), &times, rows).map_err(|e| e.to_string())?;
    fs::write(path, buf).map_err(|e| e.to_string())
}

fn resumption() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let sets = d.join("sets.txt");
    let mut rng = substream(31337, 0);
    let mut by_mode = [0usize; 4];
    for split in 0..RESUME_SPLITS {
        let m = rng.random_range(2..=8);
        let n = rng.random_range(3..=40);
        let cut = rng.random_range(1..n);
        let variant = split % 4;
        by_mode[variant] += 1;
        let shift: f64 = rng.random_range(-0.5..1.5);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..m)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        if variant == 3 { (0.8 * z + shift).exp() } else { z + shift }
                    })
                    .collect()
            })
            .collect();
        fs::write(&sets, format!("all:1-{m}\nfirst:1\nrest:2-{m}\n")).map_err(|e| e.to_string())?;
        let (input_flag, family_args): (&str, Vec<&str>) = match variant {
            0 => ("--observations", vec!["--family", FamilyKind::GaussianLr.as_str(), "--delta", "0.5"]),
            1 => ("--observations", vec!["--family", FamilyKind::TLr.as_str(), "--delta", "0.7"]),
            2 => ("--observations", vec!["--family", FamilyKind::Mom.as_str(), "--delta-min", "0.4", "--nodes", "16"]),
            _ => ("--evalues", vec![]),
        };
        let full_in = d.join("full.csv");
        let head_in = d.join("head.csv");
        let tail_in = d.join("tail.csv");
        write_input(&full_in, 1..n + 1, &rows).map_err(|e| format!("split {split}: {e}"))?;
        write_input(&head_in, 1..cut + 1, &rows[..cut])?;
        write_input(&tail_in, cut + 1..n + 1, &rows[cut..])?;
        let full_out = d.join("full_out.csv");
        let split_out = d.join("split_out.csv");
        let state = d.join("state.json");
        let _ = fs::remove_file(&split_out);

        let mut common_args = vec!["--alpha", "0.2", "--sets", sets.to_str().unwrap(), "--ard"];
        common_args.extend(&family_args);
        let mut full = vec!["bound", input_flag, full_in.to_str().unwrap(), "-o", full_out.to_str().unwrap()];
        full.extend(&common_args);
        run_cli(&full)?;
        let mut head = vec![
            "bound",
            input_flag,
            head_in.to_str().unwrap(),
            "-o",
            split_out.to_str().unwrap(),
            "--state-out",
            state.to_str().unwrap(),
        ];
        head.extend(&common_args);
        run_cli(&head)?;
        let tail = vec![
            "bound",
            input_flag,
            tail_in.to_str().unwrap(),
            "-o",
            split_out.to_str().unwrap(),
            "--resume",
            state.to_str().unwrap(),
        ];
        run_cli(&tail)?;
        let a = fs::read(&full_out).map_err(|e| e.to_string())?;
        let b = fs::read(&split_out).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!(
                "split {split} (variant {variant}, m={m}, n={n}, cut={cut}): resumed output differs from the uninterrupted run"
            ));
        }
    }
    Ok(format!(
        "{RESUME_SPLITS} random splits byte-identical (gaussian_lr {}, t_lr {}, mom {}, e-value input {})",
        by_mode[0], by_mode[1], by_mode[2], by_mode[3]
    ))
}
