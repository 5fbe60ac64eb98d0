use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use curvflow_core::experiments::{
    fit_decay_rate, gradient_check, identity_suite, report_dir, run_scenario, RunStatus, ScenarioConfig,
};
use curvflow_core::flow::FlowTrace;

/// Environment variable naming the directory that holds per-scenario output folders.
const OUTPUT_ROOT_VAR: &str = "CURVFLOW_OUTPUT_ROOT";
const DEFAULT_OUTPUT_ROOT: &str = "runs";

#[derive(Parser)]
#[command(name = "curvflow", version, about = "Quadratic-curvature gradient flow on warped 4-spheres")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the flow for a scenario and write its artifacts.
    Run { config: PathBuf },
    /// Run the identity and refinement-order suite at N and 2N.
    Check { config: PathBuf },
    /// Compare finite differences of F with the assembled gradient.
    Gradcheck {
        config: PathBuf,
        #[arg(long, default_value_t = 10)]
        directions: usize,
    },
    /// Fit the exponential decay rate of the traceless Ricci norm.
    Fit {
        trace: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        window: f64,
    },
    /// Summarise the artifacts of a finished run.
    Report {
        dir: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        window: f64,
    },
}

fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(path).with_context(|| format!("reading config {}", path.display()))?;
    if cfg.outputs.is_none() {
        let root = std::env::var_os(OUTPUT_ROOT_VAR).map_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT), PathBuf::from);
        let stem = path.file_stem().map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned());
        cfg.outputs = Some(root.join(stem));
    }
    Ok(cfg)
}

fn pass_fail(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(RunStatus::ConfigError as u8)
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run { config } => {
            let cfg = load_config(&config)?;
            let outcome = run_scenario(&cfg);
            if let Some(dir) = &outcome.outputs {
                println!("outputs: {}", dir.display());
            }
            match outcome.status {
                RunStatus::Completed => println!("{}", outcome.message),
                _ => eprintln!("error: {}", outcome.message),
            }
            Ok(ExitCode::from(outcome.status as u8))
        }
        Command::Check { config } => {
            let report = identity_suite(&load_config(&config)?)?;
            print!("{}", report.table());
            for name in report.failing() {
                eprintln!("failed: {name}");
            }
            Ok(pass_fail(report.passed()))
        }
        Command::Gradcheck { config, directions } => {
            let report = gradient_check(&load_config(&config)?, directions)?;
            print!("{}", report.table());
            Ok(pass_fail(report.passed()))
        }
        Command::Fit { trace, window } => {
            let trace = FlowTrace::read_csv(&trace).with_context(|| format!("reading {}", trace.display()))?;
            let fit = fit_decay_rate(&trace, window)?;
            println!("eta = {}\nr_squared = {}\nwindow_start = {}", fit.eta, fit.r_squared, fit.window_start);
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { dir, window } => {
            print!("{}", report_dir(&dir, window)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(RunStatus::ConfigError as u8)
        }
    }
}
