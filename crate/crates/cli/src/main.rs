//! `rlslab`: command-line front end for the RLS balls-into-bins lab.
//!
//! Every subcommand exits with status 0 only if all of its checks pass.

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rlslab::adversary::{dominance_experiment, exact_destructive_dominance, Horizon};
use rlslab::bounds::{phase1_schedule, validity_checks, BoundKind};
use rlslab::harness::{
    emit, parse_count, run_batch, scaling_fit, write_csv, Batch, ExperimentSpec, OutputFormat,
    Scenario,
};
use rlslab::oracle::{expected_absorption_time, validate_simulator, write_csv as write_oracle_csv};
use rlslab::sampling::{derive_seed, RngStream};
use rlslab::{AdversarySchedule, ExactChain, ProtocolVariant};

#[derive(Parser)]
#[command(
    name = "rlslab",
    version,
    about = "Randomized Local Search balls-into-bins lab"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch on one or more (n, m) cells and write one row per run.
    Run(BatchArgs),
    /// Like `run`, and also fit the mean balancing time against ln n.
    Sweep {
        #[command(flatten)]
        batch: BatchArgs,
        /// Fail unless the fit reaches this R^2.
        #[arg(long)]
        min_r2: Option<f64>,
    },
    /// Exact expected balancing times from every sorted state.
    Oracle {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: u64,
        #[arg(long, default_value = "nonstrict")]
        variant: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Couple the plain process with an adversarial one and check dominance.
    Couple {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: u64,
        /// none, revert, pileup:<s>, random:<seed>:<rate> or script:<path>
        #[arg(long, default_value = "pileup:10")]
        schedule: String,
        #[arg(long, default_value = "10000", value_parser = count)]
        steps: u64,
        #[arg(long, default_value = "100", value_parser = count)]
        runs: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "all_in_one")]
        scenario: String,
        #[arg(long, default_value = "nonstrict")]
        variant: String,
        /// Also compare exact expected times before and after every
        /// destructive move (small instances only).
        #[arg(long)]
        exact: bool,
    },
    /// Check tail bounds against Monte Carlo estimates and phase schedules.
    Bounds {
        /// all, chernoff, binomial, exp, geom or schedule
        #[arg(long, default_value = "all")]
        check: String,
        #[arg(long, default_value = "1e6", value_parser = count)]
        samples: u64,
        /// Random parameter sets per bound.
        #[arg(long, default_value = "10", value_parser = count)]
        sets: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare simulated mean balancing times with the exact oracle.
    ///
    /// Lists of equal length are paired; otherwise every n is combined with
    /// every m.
    Validate {
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        m: Vec<u64>,
        #[arg(long, default_value = "50000", value_parser = count)]
        runs: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "nonstrict")]
        variant: String,
        /// Largest tolerated |z| per state.
        #[arg(long, default_value_t = 3.0)]
        z: f64,
    },
}

fn count(s: &str) -> Result<u64, String> {
    parse_count("count", s).map_err(|e| e.to_string())
}

#[derive(Args)]
struct BatchArgs {
    /// Experiment file with `key = value` lines; flags override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    /// Comma separated list.
    #[arg(long)]
    n: Option<String>,
    /// Comma separated list of counts or expressions (`n^2`, `4*n`, `n/2`).
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    runs: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    schedule: Option<String>,
    /// Marker at which each run stops.
    #[arg(long)]
    stop: Option<String>,
    #[arg(long)]
    max_events: Option<String>,
    #[arg(long)]
    max_clock: Option<String>,
    /// Output file; rows go to stdout as CSV if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or jsonl
    #[arg(long)]
    format: Option<String>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Do not fail when runs hit a cap.
    #[arg(long)]
    allow_truncated: bool,
}

impl BatchArgs {
    fn spec(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.spec {
            Some(path) => ExperimentSpec::load(path)?,
            None => ExperimentSpec::default(),
        };
        let flags = [
            ("scenario", &self.scenario),
            ("n", &self.n),
            ("m", &self.m),
            ("runs", &self.runs),
            ("seed", &self.seed),
            ("variant", &self.variant),
            ("schedule", &self.schedule),
            ("stop", &self.stop),
            ("max_events", &self.max_events),
            ("max_clock", &self.max_clock),
            ("format", &self.format),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                spec.set(key, v).with_context(|| format!("--{key}"))?;
            }
        }
        if let Some(out) = &self.out {
            spec.out = Some(out.clone());
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set {kv}: expected KEY=VALUE"))?;
            spec.set(k.trim(), v.trim())?;
        }
        Ok(spec)
    }
}

fn execute_batch(args: &BatchArgs) -> Result<(ExperimentSpec, Batch, bool)> {
    let spec = args.spec()?;
    let batch = run_batch(&spec)?;
    match &spec.out {
        Some(path) => emit(&batch.records, spec.format, path)?,
        None => match spec.format {
            OutputFormat::Csv => write_csv(&batch.records, io::stdout().lock())?,
            OutputFormat::JsonLines => {
                rlslab::harness::write_json_lines(&batch.records, io::stdout().lock())?
            }
        },
    }
    let mut ok = true;
    for s in &batch.summaries {
        eprint!("{s}");
        if s.truncated > 0 && !args.allow_truncated {
            eprintln!("  FAIL: {} truncated runs", s.truncated);
            ok = false;
        }
    }
    Ok((spec, batch, ok))
}

fn cmd_sweep(batch: &BatchArgs, min_r2: Option<f64>) -> Result<bool> {
    let (spec, result, mut ok) = execute_batch(batch)?;
    let mut points = Vec::new();
    for s in &result.summaries {
        if let Some(st) = s.marker(spec.stop) {
            points.push((s.n, st.mean));
        }
    }
    match scaling_fit(&points) {
        Ok(fit) => {
            eprintln!(
                "fit {}: mean = {:.6} + {:.6} ln n, R^2 = {:.6}",
                spec.stop.column(),
                fit.a,
                fit.b,
                fit.r2
            );
            if let Some(min) = min_r2 {
                if fit.r2 < min {
                    eprintln!("FAIL: R^2 {:.6} below {min}", fit.r2);
                    ok = false;
                }
            }
        }
        Err(e) => {
            eprintln!("no fit: {e}");
            ok &= min_r2.is_none();
        }
    }
    Ok(ok)
}

fn cmd_oracle(n: usize, m: u64, variant: &str, out: Option<PathBuf>) -> Result<bool> {
    let variant = ProtocolVariant::parse(variant)?;
    let chain = ExactChain::build(n, m, variant)?;
    let times = expected_absorption_time(&chain)?;
    match out {
        Some(path) => write_oracle_csv(&chain, &times, &path)?,
        None => {
            let mut w = io::stdout().lock();
            writeln!(w, "state,exit_rate,expected_time")?;
            for (i, s) in chain.states().iter().enumerate() {
                writeln!(w, "{s},{},{}", chain.transitions(i).exit_rate, times[i])?;
            }
        }
    }
    // The other variant must give the same times.
    let other = match variant {
        ProtocolVariant::NonStrict => ProtocolVariant::Strict,
        ProtocolVariant::Strict => ProtocolVariant::NonStrict,
    };
    let alt = expected_absorption_time(&ExactChain::build(n, m, other)?)?;
    let diff = times
        .iter()
        .zip(&alt)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    eprintln!(
        "{} states; max |E_{} - E_{}| = {diff:.3e}",
        chain.states().len(),
        variant.name(),
        other.name()
    );
    Ok(diff <= 1e-10)
}

#[allow(clippy::too_many_arguments)]
fn cmd_couple(
    n: usize,
    m: u64,
    schedule: &str,
    steps: u64,
    runs: u64,
    seed: u64,
    scenario: &str,
    variant: &str,
    exact: bool,
) -> Result<bool> {
    let schedule = AdversarySchedule::parse(schedule)?;
    let variant = ProtocolVariant::parse(variant)?;
    let scenario = Scenario::parse(scenario)?;
    let mut rng = RngStream::new(derive_seed(seed, &[n as u64, m]), u64::MAX);
    let start = scenario.generate(n, m, &mut rng)?;
    let horizon = Horizon {
        time: f64::INFINITY,
        max_steps: steps,
    };
    let r = dominance_experiment(&start, &schedule, horizon, runs as usize, seed, variant);
    eprintln!(
        "start {start}, schedule {schedule}: {} runs, {} steps checked, {} destructive moves, \
         max depth {}, equal discrepancy at {} steps",
        r.runs, r.events_checked, r.adversarial_moves, r.max_depth, r.equal_events
    );
    eprintln!(
        "violations: closeness {}, dominance {}, hitting order {}",
        r.closeness_violations, r.dominance_violations, r.hitting_order_violations
    );
    if let Some(v) = &r.first_violation {
        eprintln!("first violation: {v}");
    }
    let mut ok = r.passes();
    if exact {
        let e = exact_destructive_dominance(n, m, variant, 1e-10)?;
        eprintln!(
            "exact: {} (state, move) pairs, {} with shorter expected time",
            e.pairs_checked,
            e.violations.len()
        );
        for (c, mv, before, after) in e.violations.iter().take(5) {
            eprintln!("  {c} {mv}: {before} -> {after}");
        }
        ok &= e.violations.is_empty();
    }
    Ok(ok)
}

fn cmd_bounds(check: &str, samples: u64, sets: u64, seed: u64) -> Result<bool> {
    let mut kinds = Vec::new();
    let mut schedule = false;
    match check {
        "all" => {
            kinds.extend(BoundKind::ALL);
            schedule = true;
        }
        "schedule" => schedule = true,
        other => kinds.push(BoundKind::parse(other)?),
    }
    let mut ok = true;
    for kind in kinds {
        let checks = validity_checks(kind, sets, samples, seed)?;
        let bad = checks.iter().filter(|c| !c.passes(3.0)).count();
        for c in &checks {
            println!("{} {c}", if c.passes(3.0) { "ok  " } else { "FAIL" });
        }
        eprintln!("{}: {} sets, {bad} failures", kind.name(), checks.len());
        ok &= bad == 0;
    }
    if schedule {
        let mut rng = RngStream::new(derive_seed(seed, &[u64::MAX]), 0);
        let mut violations = 0;
        for _ in 0..sets.max(1000) {
            let n = 2 + rng.below(1 << 24) as usize;
            let ln = (n as f64).ln();
            let avg = 16.0 * ln * (1.0 + 1e-9 + rng.unit() * 10f64.powf(6.0 * rng.unit()));
            let s = phase1_schedule(n, avg)?;
            for v in s.violations() {
                println!("FAIL schedule n={n} avg={avg}: {v}");
                violations += 1;
            }
        }
        eprintln!(
            "schedule: {} parameter sets, {violations} violations",
            sets.max(1000)
        );
        ok &= violations == 0;
    }
    Ok(ok)
}

fn cmd_validate(
    n: &[usize],
    m: &[u64],
    runs: u64,
    seed: u64,
    variant: &str,
    z: f64,
) -> Result<bool> {
    let variant = ProtocolVariant::parse(variant)?;
    let cells: Vec<(usize, u64)> = if n.len() == m.len() {
        n.iter().copied().zip(m.iter().copied()).collect()
    } else {
        n.iter()
            .flat_map(|&a| m.iter().map(move |&b| (a, b)))
            .collect()
    };
    if cells.is_empty() {
        bail!("no (n, m) cells");
    }
    let mut ok = true;
    println!("n,m,state,exact,mean,std_err,z");
    for (n, m) in cells {
        let r = validate_simulator(n, m, runs as usize, seed, variant)?;
        for row in &r.rows {
            println!(
                "{n},{m},{},{},{},{},{:.3}",
                row.state, row.exact, row.mean, row.std_err, row.z
            );
        }
        let pass = r.passes(z);
        eprintln!(
            "n={n} m={m}: {} states, max |z| = {:.3} {}",
            r.rows.len(),
            r.max_abs_z(),
            if pass { "ok" } else { "FAIL" }
        );
        ok &= pass;
    }
    Ok(ok)
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("RLSLAB_THREADS") {
        let threads: usize = v
            .trim()
            .parse()
            .with_context(|| format!("RLSLAB_THREADS={v} is not a number"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring thread pool")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    configure_threads()?;
    match cli.command {
        Command::Run(args) => execute_batch(&args).map(|(_, _, ok)| ok),
        Command::Sweep { batch, min_r2 } => cmd_sweep(&batch, min_r2),
        Command::Oracle { n, m, variant, out } => cmd_oracle(n, m, &variant, out),
        Command::Couple {
            n,
            m,
            schedule,
            steps,
            runs,
            seed,
            scenario,
            variant,
            exact,
        } => cmd_couple(
            n, m, &schedule, steps, runs, seed, &scenario, &variant, exact,
        ),
        Command::Bounds {
            check,
            samples,
            sets,
            seed,
        } => cmd_bounds(&check, samples, sets, seed),
        Command::Validate {
            n,
            m,
            runs,
            seed,
            variant,
            z,
        } => cmd_validate(&n, &m, runs, seed, &variant, z),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use rlslab::Marker;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_spec_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.txt");
        std::fs::write(&path, "n = 8\nm = 32\nruns = 3\nseed = 1\n").unwrap();
        let cli = Cli::try_parse_from([
            "rlslab",
            "run",
            "--spec",
            path.to_str().unwrap(),
            "--runs",
            "5",
            "--set",
            "seed=9",
        ])
        .unwrap();
        let Command::Run(args) = cli.command else {
            panic!("not run")
        };
        let spec = args.spec().unwrap();
        assert_eq!((spec.runs, spec.seed, spec.n.clone()), (5, 9, vec![8]));
        assert_eq!(spec.stop, Marker::Perfect);
    }

    #[test]
    fn counts_accept_scientific_notation() {
        assert_eq!(count("1e6").unwrap(), 1_000_000);
        assert!(count("1.5").is_err());
    }
}
