use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use histories_harness::config::{ExperimentConfig, Kind};
use histories_harness::output::write_run;
use histories_harness::suites::{run, RunOptions};

#[derive(Parser)]
#[command(name = "histories", version, about = "Run history-measure experiments and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Operator-level identities on a schedule or model.
    Verify(Common),
    /// Sample trajectories and measure purification.
    Sample(Common),
    /// Exact and empirical ergodic decomposition.
    Disintegrate(Common),
    /// Homomorphism, dual-map, 0-1 law, singularity, extremality and moment checks.
    #[command(alias = "theorem-checks")]
    Checks(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: `output.dir` from the config, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
    /// Treat soft checks as hard.
    #[arg(long)]
    strict: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Verify(a) => (Kind::Verify, a),
        Command::Sample(a) => (Kind::Sample, a),
        Command::Disintegrate(a) => (Kind::Disintegrate, a),
        Command::Checks(a) => (Kind::Checks, a),
    };
    match execute(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(kind: Kind, args: Common) -> Result<bool, Box<dyn std::error::Error>> {
    if let Some(jobs) = args.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global()?;
    }
    let config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let options = RunOptions { kind, seed: args.seed, strict: args.strict };
    let output = run(&config, &options)?;
    let dir = args
        .out
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    write_run(&dir, &output)?;

    let report = &output.report;
    for c in &report.checks {
        let status = if c.passed { "ok" } else if c.hard || report.strict { "FAIL" } else { "warn" };
        println!("{status:>4}  {:<24} {:e} {} {:e}  {}", c.name, c.residual, comparison(c), c.tolerance, c.detail);
    }
    let failures = report.failures();
    println!(
        "{}: {} checks, {} failed; results in {}",
        report.command,
        report.checks.len(),
        failures.len(),
        dir.display()
    );
    Ok(failures.is_empty())
}

fn comparison(c: &histories_harness::report::CheckResult) -> &'static str {
    match c.comparison {
        histories_harness::report::Comparison::AtMost => "<=",
        histories_harness::report::Comparison::AtLeast => ">=",
    }
}
