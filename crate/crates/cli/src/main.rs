use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pbesim_core::io::{diagnose, simulate, RawConfig, ReportKind};
use pbesim_core::model::{scenario_description, scenario_names, scenario_params};

#[derive(Parser)]
#[command(name = "pbesim", version, about = "Stochastic particle simulation of population balance equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run replicas described by a config file; flags override its values.
    Simulate(SimulateArgs),
    /// Compute a report from an output directory.
    Diagnose {
        #[arg(value_enum)]
        report: Report,
        /// Output directory of a previous `simulate` run.
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Inspect the scenario presets.
    Scenarios {
        #[command(subcommand)]
        action: ScenariosAction,
    },
}

#[derive(Subcommand)]
enum ScenariosAction {
    /// List presets with their parameters and defaults.
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum Report {
    Moments,
    Coagulation,
    Uniformity,
    FictitiousTime,
}

impl From<Report> for ReportKind {
    fn from(r: Report) -> Self {
        match r {
            Report::Moments => ReportKind::Moments,
            Report::Coagulation => ReportKind::Coagulation,
            Report::Uniformity => ReportKind::Uniformity,
            Report::FictitiousTime => ReportKind::FictitiousTime,
        }
    }
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    particles: Option<u64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    replicas: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or ndjson
    #[arg(long)]
    format: Option<String>,
    /// deterministic or exponential
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    debug_trace: bool,
    #[arg(long)]
    exact_rates: bool,
}

fn run_simulate(a: SimulateArgs) -> Result<bool, String> {
    let text = std::fs::read_to_string(&a.config).map_err(|e| format!("{}: {e}", a.config.display()))?;
    let mut raw = RawConfig::parse(&text).map_err(|e| format!("{}: {e}", a.config.display()))?;
    let overrides: [(&str, &str, Option<String>); 10] = [
        ("simulation", "seed", a.seed.map(|v| v.to_string())),
        ("simulation", "particles", a.particles.map(|v| v.to_string())),
        ("simulation", "t_end", a.t_end.map(|v| v.to_string())),
        ("simulation", "mode", a.mode),
        ("run", "replicas", a.replicas.map(|v| v.to_string())),
        ("run", "out", a.out.map(|v| v.display().to_string())),
        ("run", "format", a.format),
        ("run", "workers", a.workers.map(|v| v.to_string())),
        ("run", "debug_trace", a.debug_trace.then(|| "true".into())),
        ("run", "exact_rates", a.exact_rates.then(|| "true".into())),
    ];
    for (section, key, value) in overrides {
        if let Some(v) = value {
            raw.set(section, key, v);
        }
    }
    let cfg = raw.resolve().map_err(|e| e.to_string())?;
    let summary = simulate(&cfg).map_err(|e| e.to_string())?;
    println!(
        "{} of {} replicas completed into {}",
        summary.completed,
        cfg.replicas,
        summary.out.display()
    );
    for (i, e) in &summary.failed {
        eprintln!("replica {i} failed: {e}");
    }
    if summary.violations > 0 {
        eprintln!("{} invariant violations recorded in replica_stats.csv", summary.violations);
    }
    Ok(summary.failed.is_empty() && summary.violations == 0)
}

fn run_diagnose(report: Report, input: PathBuf) -> Result<bool, String> {
    let r = diagnose(report.into(), &input).map_err(|e| e.to_string())?;
    println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.kind.as_str(), r.summary);
    Ok(r.passed)
}

fn list_scenarios() -> std::io::Result<()> {
    let mut out = std::io::stdout().lock();
    for name in scenario_names() {
        writeln!(out, "{name}: {}", scenario_description(name).unwrap_or(""))?;
        for (k, v) in scenario_params(name).unwrap_or(&[]) {
            writeln!(out, "    {k} = {v}")?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let outcome = match Cli::parse().command {
        Command::Simulate(a) => run_simulate(a),
        Command::Diagnose { report, input } => run_diagnose(report, input),
        Command::Scenarios {
            action: ScenariosAction::List,
        } => {
            // a closed pipe is not an error for a listing
            let _ = list_scenarios();
            Ok(true)
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
