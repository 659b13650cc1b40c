//! `formation`: run close-formation scenarios and property suites.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 runtime or
//! simulation error, 3 property failure.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use formation_core::checks::{run_suite, Suite};
use formation_core::sim::{csv, metrics, Override, Scenario, Simulation};

#[derive(Debug, Parser)]
#[command(
    name = "formation",
    version,
    about = "Cooperative close-formation flight simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario and write log.csv, metrics.json and scenario.cfg.
    Run {
        /// Scenario file.
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory, created if missing.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Dotted-key override, e.g. `controller.Kp.x=0.5`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Write every N-th step to the CSV log.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        decimate: u64,
        /// Seed for stochastic disturbance kinds.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a property suite: graph, filter, ude, conversions, closedloop or all.
    Check {
        #[arg(value_parser = parse_suite)]
        suite: Suite,
    },
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse()
}

/// A failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl ToString) -> Self {
        Self {
            code: 1,
            message: message.to_string(),
        }
    }

    fn runtime(message: impl ToString) -> Self {
        Self {
            code: 2,
            message: message.to_string(),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

fn cmd_run(
    scenario: &Path,
    out: &Path,
    set: &[String],
    decimate: usize,
    seed: Option<u64>,
) -> Result<(), Failure> {
    let mut overrides = set
        .iter()
        .map(|s| Override::parse(s))
        .collect::<Result<Vec<_>, _>>()
        .map_err(Failure::validation)?;
    if let Some(seed) = seed {
        overrides.push(Override::parse(&format!("seed={seed}")).map_err(Failure::validation)?);
    }
    let sc = Scenario::load(scenario, &overrides)
        .map_err(|e| Failure::validation(format!("{}: {e}", scenario.display())))?;
    sc.metrics
        .check_window(sc.steps() as f64 * sc.dt, sc.dt)
        .map_err(|e| Failure::validation(format!("metrics.window: {e}")))?;
    let sim = Simulation::new(sc.clone()).map_err(Failure::validation)?;

    fs::create_dir_all(out).map_err(|e| Failure::runtime(format!("{}: {e}", out.display())))?;
    write_file(&out.join("scenario.cfg"), &sc.to_toml_string())?;

    log::info!("running `{}` for {} steps", sc.name, sc.steps());
    let log = sim.run().map_err(Failure::runtime)?;
    let summary = metrics::summarize(&log, &sc.metrics).map_err(Failure::runtime)?;

    let csv_path = out.join("log.csv");
    let file = File::create(&csv_path)
        .map_err(|e| Failure::runtime(format!("{}: {e}", csv_path.display())))?;
    csv::write_log(&log, decimate, BufWriter::new(file))
        .map_err(|e| Failure::runtime(format!("{}: {e}", csv_path.display())))?;
    write_file(&out.join("metrics.json"), &summary.to_json())?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_check(suite: Suite) -> Result<(), Failure> {
    let results = run_suite(suite);
    let failed = results.iter().filter(|r| !r.passed).count();
    for r in &results {
        println!(
            "{} {}: {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure {
            code: 3,
            message: format!("{failed} properties failed"),
        })
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run {
            scenario,
            out,
            set,
            decimate,
            seed,
        } => cmd_run(&scenario, &out, &set, decimate as usize, seed),
        Command::Check { suite } => cmd_check(suite),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
