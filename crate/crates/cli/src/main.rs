//! `seedbank`: simulation campaigns, exact tables and the acceptance suite.

mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use seedbank::campaign::{
    self, exact_report, laws_report, sampling_report, simulate_campaign, simulate_report,
    write_rows_csv, CampaignError, LawsConfig, SimulateConfig, EXACT_CAP,
};
use seedbank::model::{ModelParams, Variant};
use seedbank::report::Format;
use seedbank::rng::RngSpec;
use seedbank::sampling;
use seedbank::simulator::{simulate_counts_with, SimOptions, StopCondition, TerminalReason};
use seedbank::verify::{self, VerifyOptions, CRITERIA};

use config::{ConfigFile, Resolver};

#[derive(Parser, Debug)]
#[command(name = "seedbank", version, about = "Seed bank coalescent toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo replicates of the block-counting chain.
    Simulate(SimulateArgs),
    /// Exact expectations, balance residual and the law of N(gamma).
    Exact(ExactArgs),
    /// Sampling formula against enumeration, urn and conditioned simulation.
    Sampling(SamplingArgs),
    /// Distances of the stopping-time functionals to their limit laws.
    Laws(LawsArgs),
    /// Runs the acceptance suite; exit code 1 on any failure.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Flat key=value file; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    reps: Option<u64>,
    /// Mutation rate on active branches (and on dormant ones unless
    /// --mu-inactive is given).
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    mu_inactive: Option<f64>,
    /// absorption, first-deactivation, first-activation, plants:K or time:T.
    #[arg(long)]
    stop: Option<String>,
    /// standard or bounded (with --bound-m).
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    bound_m: Option<u32>,
    /// Maximum events per replicate (default 50 n + 10^6).
    #[arg(long)]
    event_budget: Option<u64>,
    /// Aggregate report destination (default: stderr).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Full event log of replicate 0 as CSV.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[arg(long, hide = true)]
    perturb_activation: Option<f64>,
}

#[derive(Args, Debug)]
struct ExactArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<u32>,
    /// Comma-separated sample sizes.
    #[arg(long)]
    n_grid: Option<String>,
    /// Largest n accepted.
    #[arg(long)]
    cap: Option<u32>,
    /// Writes the exact law of N(gamma) at the largest n as CSV.
    #[arg(long)]
    pmf: Option<PathBuf>,
    /// Writes the table of E[A], E[I] or E[sigma] over all states at the
    /// largest n (plant-time, seed-time, elapsed-time).
    #[arg(long, value_name = "FUNCTIONAL")]
    table: Option<String>,
    #[arg(long, hide = true)]
    perturb_activation: Option<f64>,
}

#[derive(Args, Debug)]
struct SamplingArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<u32>,
    /// Number of old blocks; required with --law and --expectations.
    #[arg(long)]
    k: Option<u32>,
    /// Urn draws per k (0 skips the urn).
    #[arg(long)]
    reps: Option<u64>,
    /// Conditioned partition runs per convention (0 skips them).
    #[arg(long)]
    conditioned: Option<u64>,
    /// Print the exact law over A(k, n) instead of the report.
    #[arg(long)]
    law: bool,
    /// Print E[O_j | k] and E[R_j | k] instead of the report.
    #[arg(long)]
    expectations: bool,
}

#[derive(Args, Debug)]
struct LawsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    n_grid: Option<String>,
    #[arg(long)]
    reps: Option<u64>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated groups or numbers: balance, oracle, ngamma, gamma,
    /// theta, lemma, lengths, mutation, sampling, repro.
    #[arg(long)]
    only: Option<String>,
    #[arg(long, hide = true)]
    perturb_activation: Option<f64>,
}

/// Failures mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Acceptance,
}

impl From<CampaignError> for Failure {
    fn from(e: CampaignError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Exact(a) => exact(a),
        Command::Sampling(a) => sampling_cmd(a),
        Command::Laws(a) => laws(a),
        Command::Verify(a) => verify_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Acceptance) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn resolver(common: &Common) -> Result<Resolver, Failure> {
    let file = match &common.config {
        Some(path) => ConfigFile::load(path).map_err(Failure::Usage)?,
        None => ConfigFile::default(),
    };
    Ok(Resolver::new(file))
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn parse_format(s: &str) -> Result<Format, String> {
    match s {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        other => Err(format!("unknown format {other:?} (expected csv or json)")),
    }
}

fn parse_stop(s: &str) -> Result<StopCondition, String> {
    let (head, arg) = match s.split_once(':') {
        Some((h, a)) => (h, Some(a)),
        None => (s, None),
    };
    match (head, arg) {
        ("absorption", None) => Ok(StopCondition::Absorption),
        ("first-deactivation", None) => Ok(StopCondition::FirstDeactivation),
        ("first-activation", None) => Ok(StopCondition::FirstActivation),
        ("plants", Some(k)) => k
            .parse()
            .map(StopCondition::PlantsReach)
            .map_err(|e| format!("bad plant level {k:?}: {e}")),
        ("time", Some(t)) => t
            .parse()
            .map(StopCondition::TimeHorizon)
            .map_err(|e| format!("bad time horizon {t:?}: {e}")),
        _ => Err(format!(
            "unknown stop condition {s:?} (expected absorption, first-deactivation, first-activation, plants:K or time:T)"
        )),
    }
}

fn parse_grid(s: &str) -> Result<Vec<u32>, String> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            // allow 1e6-style entries
            t.parse::<u32>().or_else(|_| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.fract() == 0.0 && *v >= 0.0 && *v <= f64::from(u32::MAX))
                    .map(|v| v as u32)
                    .ok_or_else(|| format!("bad sample size {t:?} in grid"))
            })
        })
        .collect()
}

struct Base {
    c1: f64,
    c2: f64,
    seed: u64,
    threads: Option<usize>,
    format: Format,
}

fn base(common: &Common, r: &Resolver) -> Result<Base, Failure> {
    let threads = r.get(common.threads, "threads")?;
    if threads == Some(0) {
        return Err(Failure::Usage("--threads must be at least 1".into()));
    }
    let format = match r.get(common.format.clone(), "format")? {
        Some(f) => parse_format(&f).map_err(Failure::Usage)?,
        None => Format::Csv,
    };
    Ok(Base {
        c1: r.get(common.c1, "c1")?.unwrap_or(1.0),
        c2: r.get(common.c2, "c2")?.unwrap_or(1.0),
        seed: r.get(common.seed, "seed")?.unwrap_or(1),
        threads,
        format,
    })
}

fn positive_n(n: Option<u32>, min: u32, what: &str) -> Result<u32, Failure> {
    match n {
        None => Err(Failure::Usage(format!("--n is required for {what}"))),
        Some(n) if n < min => Err(Failure::Usage(format!("--n must be at least {min} for {what} (got {n})"))),
        Some(n) => Ok(n),
    }
}

fn simulate(a: SimulateArgs) -> Outcome {
    let r = resolver(&a.common)?;
    let b = base(&a.common, &r)?;
    let n = positive_n(r.get(a.n, "n")?, 1, "simulate")?;
    let reps = r.get(a.reps, "reps")?.unwrap_or(100);
    if reps == 0 {
        return Err(Failure::Usage("--reps must be at least 1".into()));
    }
    let mu = r.get(a.mu, "mu")?.unwrap_or(0.0);
    let mu_inactive = r.get(a.mu_inactive, "mu-inactive")?.unwrap_or(mu);
    let stop = match r.get(a.stop, "stop")? {
        Some(s) => parse_stop(&s).map_err(Failure::Usage)?,
        None => StopCondition::Absorption,
    };
    let bound = r.get(a.bound_m, "bound-m")?;
    let variant = match (r.get(a.variant, "variant")?.as_deref(), bound) {
        (None | Some("standard"), None) => Variant::Standard,
        (Some("standard"), Some(_)) => {
            return Err(Failure::Usage("--bound-m needs --variant bounded".into()))
        }
        (None | Some("bounded"), Some(m)) => Variant::Bounded(m),
        (Some("bounded"), None) => return Err(Failure::Usage("--variant bounded needs --bound-m".into())),
        (Some(v), _) => return Err(Failure::Usage(format!("unknown variant {v:?}"))),
    };
    let perturb = r.get(a.perturb_activation, "perturb-activation")?.unwrap_or(0.0);
    let params = ModelParams::with_mutation(b.c1, b.c2, mu, mu_inactive)
        .map_err(|e| Failure::Usage(e.to_string()))?
        .with_activation_perturbation(perturb);
    let options = SimOptions {
        event_budget: r.get(a.event_budget, "event-budget")?,
    };
    let cfg = SimulateConfig {
        n,
        reps,
        params,
        variant,
        stop,
        seed: b.seed,
        threads: b.threads,
        options,
    };
    let rows = simulate_campaign(&cfg)?;
    for row in rows.iter().filter(|r| r.terminal_reason == TerminalReason::EventBudgetExceeded) {
        eprintln!("warning: replicate {} exceeded the event budget", row.replicate);
    }
    let mut out = output(&r.get(a.common.out, "out")?)?;
    match b.format {
        Format::Csv => write_rows_csv(&mut out, &rows)?,
        Format::Json => campaign::write_rows_json(&mut out, &rows)?,
    }
    out.flush()?;
    let report = simulate_report(&cfg, &rows)?;
    match r.get(a.report, "report")? {
        Some(path) => {
            let mut f = output(&Some(path))?;
            report.write(&mut f, b.format)?;
            f.flush()?;
        }
        None => report.write(io::stderr().lock(), Format::Csv)?,
    }
    if let Some(path) = r.get(a.trajectory, "trajectory")? {
        let traj = simulate_counts_with(n, 0, &params, variant, stop, RngSpec::new(b.seed, 0), options)
            .map_err(|e| Failure::Usage(e.to_string()))?;
        let mut f = output(&Some(path))?;
        traj.write_csv(&mut f)?;
        f.flush()?;
    }
    Ok(())
}

fn grid(n: Option<u32>, g: Option<String>, default: &[u32]) -> Result<Vec<u32>, Failure> {
    match (n, g) {
        (Some(_), Some(_)) => Err(Failure::Usage("give either --n or --n-grid".into())),
        (Some(n), None) => Ok(vec![n]),
        (None, Some(s)) => parse_grid(&s).map_err(Failure::Usage),
        (None, None) if !default.is_empty() => Ok(default.to_vec()),
        (None, None) => Err(Failure::Usage("--n or --n-grid is required".into())),
    }
}

fn exact(a: ExactArgs) -> Outcome {
    let r = resolver(&a.common)?;
    let b = base(&a.common, &r)?;
    let ns = grid(r.get(a.n, "n")?, r.get(a.n_grid, "n-grid")?, &[])?;
    if let Some(&bad) = ns.iter().find(|&&n| n < 2) {
        return Err(Failure::Usage(format!("sample sizes must be at least 2 (got {bad})")));
    }
    let cap = r.get(a.cap, "cap")?.unwrap_or(EXACT_CAP);
    let perturb = r.get(a.perturb_activation, "perturb-activation")?.unwrap_or(0.0);
    let params = ModelParams::new(b.c1, b.c2)
        .map_err(|e| Failure::Usage(e.to_string()))?
        .with_activation_perturbation(perturb);
    let report = exact_report(&ns, &params, cap)?;
    let mut out = output(&r.get(a.common.out, "out")?)?;
    report.write(&mut out, b.format)?;
    out.flush()?;
    let top = *ns.iter().max().expect("non-empty grid");
    if let Some(path) = r.get(a.pmf, "pmf")? {
        let mut f = output(&Some(path))?;
        campaign::write_n_gamma_pmf_csv(&mut f, top, b.c1)?;
        f.flush()?;
    }
    if let Some(name) = r.get(a.table, "table")? {
        let functional = match name.as_str() {
            "plant-time" => seedbank::exact::Functional::PlantTime,
            "seed-time" => seedbank::exact::Functional::SeedTime,
            "elapsed-time" => seedbank::exact::Functional::ElapsedTime,
            other => return Err(Failure::Usage(format!("unknown functional {other:?}"))),
        };
        let table = seedbank::exact::expectations(top, &params, functional)
            .map_err(CampaignError::from)?;
        let mut out = io::stdout().lock();
        table.write_csv(&mut out)?;
    }
    Ok(())
}

fn sampling_cmd(a: SamplingArgs) -> Outcome {
    let r = resolver(&a.common)?;
    let b = base(&a.common, &r)?;
    let n = r.get(a.n, "n")?.unwrap_or(8);
    if n == 0 {
        return Err(Failure::Usage("--n must be at least 1".into()));
    }
    let k = r.get(a.k, "k")?;
    let mut out = output(&r.get(a.common.out, "out")?)?;
    if a.law || a.expectations {
        let k = k.ok_or_else(|| Failure::Usage("--k is required with --law or --expectations".into()))?;
        if k > n {
            return Err(Failure::Usage(format!("--k must be at most n = {n}")));
        }
        if a.law {
            campaign::write_sampling_law(&mut out, k, n, b.c1)?;
        } else {
            sampling::write_expectations_csv(&mut out, k, n, b.c1)?;
        }
        out.flush()?;
        return Ok(());
    }
    if n > 8 {
        return Err(Failure::Usage(format!("enumeration paths need n <= 8 (got {n})")));
    }
    let params = ModelParams::new(b.c1, b.c2).map_err(|e| Failure::Usage(e.to_string()))?;
    let draws = r.get(a.reps, "reps")?.unwrap_or(100_000);
    let conditioned = r.get(a.conditioned, "conditioned")?.unwrap_or(100_000);
    let report = sampling_report(n, &params, draws, conditioned, b.seed, b.threads)?;
    report.write(&mut out, b.format)?;
    out.flush()?;
    Ok(())
}

fn laws(a: LawsArgs) -> Outcome {
    let r = resolver(&a.common)?;
    let b = base(&a.common, &r)?;
    let ns = grid(r.get(a.n, "n")?, r.get(a.n_grid, "n-grid")?, &[1_000, 10_000, 100_000])?;
    if let Some(&bad) = ns.iter().find(|&&n| n < 2) {
        return Err(Failure::Usage(format!("sample sizes must be at least 2 (got {bad})")));
    }
    let reps = r.get(a.reps, "reps")?.unwrap_or(10_000);
    if reps == 0 {
        return Err(Failure::Usage("--reps must be at least 1".into()));
    }
    let params = ModelParams::new(b.c1, b.c2).map_err(|e| Failure::Usage(e.to_string()))?;
    let cfg = LawsConfig {
        reps,
        params,
        seed: b.seed,
        threads: b.threads,
    };
    let report = laws_report(&ns, &cfg)?;
    let mut out = output(&r.get(a.common.out, "out")?)?;
    report.write(&mut out, b.format)?;
    out.flush()?;
    Ok(())
}

fn verify_cmd(a: VerifyArgs) -> Outcome {
    let r = resolver(&a.common)?;
    let b = base(&a.common, &r)?;
    let ids: Vec<u8> = match r.get(a.only, "only")? {
        Some(list) => list
            .split(',')
            .map(|t| verify::lookup(t).ok_or_else(|| Failure::Usage(format!("unknown criterion {t:?}"))))
            .collect::<Result<_, _>>()?,
        None => CRITERIA.iter().map(|c| c.id).collect(),
    };
    let opts = VerifyOptions {
        threads: b.threads,
        perturb_activation: r.get(a.perturb_activation, "perturb-activation")?.unwrap_or(0.0),
    };
    let out_path = r.get(a.common.out, "out")?;
    let mut report = seedbank::report::Report::default();
    let mut all = true;
    for id in ids {
        let o = verify::run_criterion(id, &opts)?;
        println!("{}", o.line());
        all &= o.pass;
        report.extend(o.report);
    }
    if out_path.is_some() {
        let mut out = output(&out_path)?;
        report.write(&mut out, b.format)?;
        out.flush()?;
    }
    if all {
        Ok(())
    } else {
        Err(Failure::Acceptance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stop_parsing() {
        assert_eq!(parse_stop("absorption"), Ok(StopCondition::Absorption));
        assert_eq!(parse_stop("plants:5"), Ok(StopCondition::PlantsReach(5)));
        assert_eq!(parse_stop("time:0.5"), Ok(StopCondition::TimeHorizon(0.5)));
        assert!(parse_stop("plants").is_err());
        assert!(parse_stop("sometime").is_err());
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("30, 300,3000"), Ok(vec![30, 300, 3000]));
        assert_eq!(parse_grid("1e3,1e6"), Ok(vec![1000, 1_000_000]));
        assert!(parse_grid("1.5").is_err());
    }
}
