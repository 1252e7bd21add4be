//! Command-line front end.
//!
//! Exit codes: 0 success, 1 input error, 2 configuration error, 3 internal
//! numeric error, 4 oracle mismatch.

use std::fs::{self, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};

use crate::closed_testing::{BoundRow, BoundTracker, DiscoverySet, SortedEValues};
use crate::eprocess::{e_to_p_process, EProcessFamily, FamilyKind, PriorSides, ProcessBank};
use crate::error::{Error, Result};
use crate::io::{
    read_scenario_file, read_sets_file, read_table_file, write_bound_row, write_metrics, write_raw_bounds,
    write_table, InputMode, NumericTable, SetState, Snapshot, BOUND_HEADER, SNAPSHOT_FORMAT, SNAPSHOT_VERSION,
};
use crate::oracle::run_oracle;
use crate::sim::simulate;

pub const EXIT_ORACLE_MISMATCH: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "anytime-tdp", version, about = "Anytime-valid simultaneous TDP lower bounds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute bounds for discovery sets from observations or e-values.
    Bound(BoundArgs),
    /// Run a Monte-Carlo scenario and write validity/power metrics.
    Simulate(SimulateArgs),
    /// Cross-check the shortcut against exhaustive closed testing.
    Oracle(OracleArgs),
    /// Convert an e-value matrix into per-hypothesis p-processes.
    Convert(ConvertArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("input").required(true).args(["observations", "evalues"])))]
pub struct BoundArgs {
    /// Raw observations, `time,h1,...,hm`, one subject per row.
    #[arg(long)]
    pub observations: Option<PathBuf>,
    /// Precomputed e-values, `time,h1,...,hm`.
    #[arg(long)]
    pub evalues: Option<PathBuf>,
    /// Output CSV (stdout if omitted). Appended to when resuming.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_parser = parse_family)]
    pub family: Option<FamilyKind>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long = "delta-min")]
    pub delta_min: Option<f64>,
    /// Quadrature nodes for the mom family.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Moment prior support for the mom family: one_sided or two_sided.
    #[arg(long, value_parser = parse_prior)]
    pub prior: Option<PriorSides>,
    /// Discovery sets, one `label:1,2,5-9` per line.
    #[arg(long)]
    pub sets: Option<PathBuf>,
    /// Report running-minimum (accept-to-reject) bounds in the summary.
    #[arg(long)]
    pub ard: bool,
    /// Continue from a state file written by `--state-out`.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Write the state after the last processed row.
    #[arg(long = "state-out")]
    pub state_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Metrics CSV (stdout if omitted).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Also dump per-iteration bounds to this CSV.
    #[arg(long)]
    pub raw: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 1000)]
    pub instances: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long = "max-m", default_value_t = crate::oracle::ORACLE_MAX_M)]
    pub max_m: usize,
    /// Draw adversarial instances with e-values exactly at 1/alpha.
    #[arg(long)]
    pub ties: bool,
    /// Where to dump mismatching instances as JSON.
    #[arg(long)]
    pub reproducer: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub evalues: PathBuf,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

fn parse_family(s: &str) -> std::result::Result<FamilyKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_prior(s: &str) -> std::result::Result<PriorSides, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Runs a parsed command and returns the process exit status.
pub fn run(cli: Cli) -> u8 {
    let outcome = match &cli.command {
        Command::Bound(a) => cmd_bound(a).map(|_| 0),
        Command::Simulate(a) => cmd_simulate(a).map(|_| 0),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Convert(a) => cmd_convert(a).map(|_| 0),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn create_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Running configuration of a `bound` invocation.
struct BoundSession {
    mode: InputMode,
    m: usize,
    alpha: f64,
    ard: bool,
    bank: Option<ProcessBank>,
    trackers: Vec<BoundTracker>,
    last_time: Option<u64>,
}

impl BoundSession {
    fn fresh(args: &BoundArgs, mode: InputMode, m: usize) -> Result<Self> {
        let alpha = args.alpha.ok_or_else(|| Error::config("--alpha is required"))?;
        crate::eprocess::check_alpha(alpha)?;
        let sets = match &args.sets {
            Some(p) => read_sets_file(p)?,
            None => return Err(Error::config("--sets is required")),
        };
        let bank = match mode {
            InputMode::Observations => {
                let family = family_from_args(args)?
                    .ok_or_else(|| Error::config("--family is required with --observations"))?;
                Some(ProcessBank::new(family, m)?)
            }
            InputMode::Evalues => {
                if args.family.is_some() {
                    return Err(Error::config("--family only applies to --observations input"));
                }
                None
            }
        };
        let trackers = trackers_for(&sets, m, alpha)?;
        Ok(Self { mode, m, alpha, ard: args.ard, bank, trackers, last_time: None })
    }

    fn resume(args: &BoundArgs, mode: InputMode, snap: Snapshot) -> Result<Self> {
        if snap.mode != mode {
            return Err(Error::config(format!(
                "state was written for {:?} input, not {:?}",
                snap.mode, mode
            )));
        }
        if let Some(alpha) = args.alpha {
            if alpha != snap.alpha {
                return Err(Error::config(format!("--alpha {alpha} differs from state alpha {}", snap.alpha)));
            }
        }
        if args.ard && !snap.ard {
            return Err(Error::config("--ard given but the state was written without it"));
        }
        let snap_sets = snap
            .sets
            .iter()
            .map(|s| DiscoverySet::new(s.label.clone(), s.indices.clone()))
            .collect::<Result<Vec<_>>>()?;
        if let Some(p) = &args.sets {
            if read_sets_file(p)? != snap_sets {
                return Err(Error::config("--sets differ from the discovery sets in the state"));
            }
        }
        let trackers = snap_sets
            .into_iter()
            .zip(&snap.sets)
            .map(|(set, st)| BoundTracker::new(set, snap.m, snap.alpha)?.with_running_min(st.running_min))
            .collect::<Result<Vec<_>>>()?;
        let bank = match mode {
            InputMode::Observations => {
                let family = snap.family.clone().ok_or_else(|| Error::input("state has no e-process family"))?;
                check_family_flags(args, &family)?;
                if snap.hypotheses.len() != snap.m {
                    return Err(Error::input("state hypothesis count does not match m"));
                }
                let bank = ProcessBank::from_states(family, snap.hypotheses.clone())?;
                if bank.time() != snap.last_time {
                    return Err(Error::input("state observation count does not match last_time"));
                }
                Some(bank)
            }
            InputMode::Evalues => {
                if args.family.is_some() {
                    return Err(Error::config("--family only applies to --observations input"));
                }
                None
            }
        };
        Ok(Self {
            mode,
            m: snap.m,
            alpha: snap.alpha,
            ard: snap.ard,
            bank,
            trackers,
            last_time: Some(snap.last_time),
        })
    }

    fn expected_first_time(&self) -> Option<u64> {
        match (self.last_time, self.mode) {
            (Some(t), _) => Some(t + 1),
            (None, InputMode::Observations) => Some(1),
            // fresh e-value input may start at 0 (all ones) or 1
            (None, InputMode::Evalues) => None,
        }
    }

    fn process(&mut self, table: &NumericTable) -> Result<Vec<(usize, BoundRow)>> {
        if table.m() != self.m {
            return Err(Error::input(format!("input has {} hypotheses, expected {}", table.m(), self.m)));
        }
        if let Some(&first) = table.times.first() {
            let ok = match self.expected_first_time() {
                Some(t) => first == t,
                None => first <= 1,
            };
            if !ok {
                return Err(Error::input(format!(
                    "input starts at time {first}, expected {}",
                    self.expected_first_time().map_or("0 or 1".to_string(), |t| t.to_string())
                )));
            }
        }
        let mut out = Vec::with_capacity(table.rows.len() * self.trackers.len());
        for (&time, row) in table.times.iter().zip(&table.rows) {
            let e = match &mut self.bank {
                Some(bank) => {
                    bank.update(row).map_err(|e| Error::input(format!("time {time}: {e}")))?;
                    bank.e_values()
                }
                None => {
                    if let Some(bad) = row.iter().find(|v| **v < 0.0) {
                        return Err(Error::input(format!("time {time}: negative e-value {bad}")));
                    }
                    if time == 0 && row.iter().any(|&v| v != 1.0) {
                        return Err(Error::input("time 0 e-values must all equal 1"));
                    }
                    row.clone()
                }
            };
            let sorted = SortedEValues::new(&e)?;
            for (j, tracker) in self.trackers.iter_mut().enumerate() {
                out.push((j, tracker.observe_sorted(time as usize, &sorted)?));
            }
            self.last_time = Some(time);
        }
        Ok(out)
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            format: SNAPSHOT_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            mode: self.mode,
            m: self.m,
            alpha: self.alpha,
            ard: self.ard,
            family: self.bank.as_ref().map(|b| b.family().clone()),
            last_time: self.last_time.unwrap_or(0),
            hypotheses: self.bank.as_ref().map(|b| b.states().to_vec()).unwrap_or_default(),
            sets: self
                .trackers
                .iter()
                .map(|t| SetState {
                    label: t.set().label().to_string(),
                    indices: t.set().indices().to_vec(),
                    running_min: t.running_min(),
                })
                .collect(),
        }
    }
}

fn trackers_for(sets: &[DiscoverySet], m: usize, alpha: f64) -> Result<Vec<BoundTracker>> {
    let mut labels = std::collections::HashSet::new();
    sets.iter()
        .map(|s| {
            if !labels.insert(s.label()) {
                return Err(Error::input(format!("duplicate discovery set label '{}'", s.label())));
            }
            BoundTracker::new(s.clone(), m, alpha)
        })
        .collect()
}

fn family_from_args(args: &BoundArgs) -> Result<Option<EProcessFamily>> {
    let Some(kind) = args.family else {
        if args.delta.is_some() || args.delta_min.is_some() || args.nodes.is_some() || args.prior.is_some() {
            return Err(Error::config("family parameters given without --family"));
        }
        return Ok(None);
    };
    let mut family = match kind {
        FamilyKind::GaussianLr => EProcessFamily::gaussian_lr(args.delta.unwrap_or(0.5)),
        FamilyKind::TLr => EProcessFamily::t_lr(args.delta.unwrap_or(0.5)),
        FamilyKind::Mom => EProcessFamily::mom(args.delta_min.unwrap_or(0.5)),
    };
    if let Some(n) = args.nodes {
        family.quadrature_nodes = n;
    }
    if let Some(p) = args.prior {
        family.prior = p;
    }
    family.validate()?;
    Ok(Some(family))
}

fn check_family_flags(args: &BoundArgs, family: &EProcessFamily) -> Result<()> {
    let clash = |what: &str| Err(Error::config(format!("{what} differs from the e-process family in the state")));
    if args.family.is_some_and(|k| k != family.kind) {
        return clash("--family");
    }
    if args.delta.is_some_and(|d| d != family.delta) {
        return clash("--delta");
    }
    if args.delta_min.is_some_and(|d| d != family.delta_min) {
        return clash("--delta-min");
    }
    if args.nodes.is_some_and(|n| n != family.quadrature_nodes) {
        return clash("--nodes");
    }
    if args.prior.is_some_and(|p| p != family.prior) {
        return clash("--prior");
    }
    Ok(())
}

pub fn cmd_bound(args: &BoundArgs) -> Result<()> {
    let (mode, path) = match (&args.observations, &args.evalues) {
        (Some(p), None) => (InputMode::Observations, p),
        (None, Some(p)) => (InputMode::Evalues, p),
        _ => return Err(Error::config("give exactly one of --observations or --evalues")),
    };
    let table = read_table_file(path)?;
    let mut session = match &args.resume {
        Some(state) => BoundSession::resume(args, mode, Snapshot::load(state)?)?,
        None => BoundSession::fresh(args, mode, table.m())?,
    };
    let rows = session.process(&table)?;

    let resuming = args.resume.is_some();
    let mut out: Box<dyn Write> = match &args.output {
        Some(p) if resuming => {
            let file = OpenOptions::new().create(true).append(true).open(p)?;
            let empty = file.metadata()?.len() == 0;
            let mut w = BufWriter::new(file);
            if empty {
                writeln!(w, "{BOUND_HEADER}")?;
            }
            Box::new(w)
        }
        other => {
            let mut w = create_output(other.as_deref())?;
            if !resuming {
                writeln!(w, "{BOUND_HEADER}")?;
            }
            w
        }
    };
    for (j, row) in &rows {
        write_bound_row(&mut out, session.trackers[*j].set().label(), row)?;
    }
    out.flush()?;

    if let Some(p) = &args.state_out {
        session.snapshot().save(p)?;
    }
    let n_sets = session.trackers.len();
    for (j, row) in rows.iter().rev().take(n_sets).rev() {
        let (tdp, kind) = if session.ard { (row.tdp_ard, "ard") } else { (row.tdp_inst, "instantaneous") };
        eprintln!(
            "{}: time {}, TDP lower bound {tdp} ({kind})",
            session.trackers[*j].set().label(),
            row.time
        );
    }
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut config = read_scenario_file(&args.scenario)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let run = simulate(&config)?;
    let table = run.metrics(&config)?;
    let mut out = create_output(args.output.as_deref())?;
    write_metrics(&mut out, &table)?;
    out.flush()?;
    if let Some(raw) = &args.raw {
        let mut w = BufWriter::new(fs::File::create(raw)?);
        write_raw_bounds(&mut w, &run, config.burn_in)?;
        w.flush()?;
    }
    let summary = table.summary(&config.pi1_list, 0.05);
    let conv: Vec<String> = summary
        .convergence
        .iter()
        .map(|(pi1, t)| format!("{pi1}@{}", t.map_or("never".to_string(), |t| t.to_string())))
        .collect();
    eprintln!(
        "max violation proportion {} (alpha {}); convergence within 0.05: {}",
        summary.max_violation,
        config.alpha,
        conv.join(" ")
    );
    Ok(())
}

pub fn cmd_oracle(args: &OracleArgs) -> Result<u8> {
    let report = run_oracle(args.instances, args.seed, args.max_m, args.ties)?;
    if report.mismatches.is_empty() {
        eprintln!("{} instances checked, 0 mismatches", report.checked);
        return Ok(0);
    }
    for mm in &report.mismatches {
        eprintln!(
            "mismatch at instance {}: e = {:?}, R = {:?}, alpha = {}, shortcut = {}, brute force = {}",
            mm.instance_index, mm.instance.e, mm.instance.r, mm.instance.alpha, mm.shortcut, mm.brute_force
        );
    }
    eprintln!("{} instances checked, {} mismatches", report.checked, report.mismatches.len());
    if let Some(p) = &args.reproducer {
        let text = serde_json::to_string_pretty(&report.mismatches)
            .map_err(|e| Error::Numeric(format!("cannot serialise reproducer: {e}")))?;
        fs::write(p, text + "\n")?;
    }
    Ok(EXIT_ORACLE_MISMATCH)
}

pub fn cmd_convert(args: &ConvertArgs) -> Result<()> {
    let table = read_table_file(&args.evalues)?;
    let m = table.m();
    let mut columns = Vec::with_capacity(m);
    for i in 0..m {
        let series: Vec<f64> = table.rows.iter().map(|r| r[i]).collect();
        let p = e_to_p_process(&series).map_err(|e| Error::input(format!("column {}: {e}", table.columns[i])))?;
        columns.push(p.values);
    }
    for (i, col) in columns.iter().enumerate() {
        let ok = col.iter().all(|&p| p > 0.0 && p <= 1.0) && col.windows(2).all(|w| w[1] <= w[0]);
        if !ok {
            return Err(Error::Numeric(format!("p-process for column {} violates its invariants", table.columns[i])));
        }
    }
    let rows: Vec<Vec<f64>> = (0..table.rows.len()).map(|t| columns.iter().map(|c| c[t]).collect()).collect();
    let mut out = create_output(args.output.as_deref())?;
    write_table(&mut out, &table.columns, &table.times, &rows)?;
    out.flush()?;
    Ok(())
}
