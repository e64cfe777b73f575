//! Command-line driver for cavity particle-creation runs.

use clap::{Args, Parser, Subcommand};
use dcasimir::harness::{self, ConvergenceReport, DetuneReport, RunOutput};
use dcasimir::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "dcasimir", version, about = "Particle creation in a 1-D cavity with a moving wall")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one configuration and emit the observable series.
    Run(CommonArgs),
    /// Repeat a run over the sweep.k_max cut-offs and report stability.
    Converge(CommonArgs),
    /// Run one simulation per sweep.delta_n detuning and measure periods.
    Detune(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Run configuration file (flat key = value lines).
    #[arg(long, short)]
    config: PathBuf,

    /// Override a configuration key, e.g. --set modes.k_max=40 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,

    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(args: &CommonArgs) -> Result<RunConfig, String> {
    let mut cfg = RunConfig::from_file(&args.config).map_err(|e| e.to_string())?;
    for assignment in &args.sets {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| format!("--set expects KEY=VALUE, got '{assignment}'"))?;
        cfg.apply_override(key.trim(), value.trim())
            .map_err(|e| e.to_string())?;
    }
    if let Some(dir) = &args.out {
        cfg.output.dir = Some(dir.clone());
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn describe_run(label: &str, output: &RunOutput) -> bool {
    if let Some(rec) = output.final_record() {
        println!(
            "{label}: t = {:.4}, N = {:.7}, E = {:.7}, max|d_k| = {:.3e}{}",
            rec.t,
            rec.n_total,
            rec.e_total,
            rec.max_abs_d,
            if output.completed { "" } else { "  [INCOMPLETE]" }
        );
    } else {
        println!("{label}: no checkpoints produced  [INCOMPLETE]");
    }
    if let Some(failure) = &output.failure {
        eprintln!("{label}: integration failed: {failure}");
    }
    output.completed
}

fn cmd_run(cfg: &RunConfig) -> Result<bool, String> {
    let output = harness::run_single(cfg).map_err(|e| e.to_string())?;
    Ok(describe_run("run", &output))
}

fn cmd_converge(cfg: &RunConfig) -> Result<bool, String> {
    let report: ConvergenceReport = harness::run_convergence(cfg).map_err(|e| e.to_string())?;
    let mut ok = true;
    for (k, run) in report.k_max_values.iter().zip(&report.runs) {
        ok &= describe_run(&format!("k_max = {k}"), run);
    }
    let unstable: Vec<usize> = report
        .table
        .iter()
        .filter(|row| !row.stable)
        .map(|row| row.mode)
        .collect();
    println!(
        "convergence at t = {}: total variation {:.3e} (threshold {:.1e})",
        report.probe_t, report.total_variation, report.stability_threshold
    );
    if unstable.is_empty() {
        println!("all {} reported modes stable", report.table.len());
    } else {
        println!("unstable modes: {unstable:?}");
    }
    match report.recommended_k_max {
        Some(k) => println!("recommended k_max: {k}"),
        None => println!("recommended k_max: none (increase the sweep)"),
    }
    Ok(ok)
}

fn cmd_detune(cfg: &RunConfig) -> Result<bool, String> {
    let report: DetuneReport = harness::run_detuning_sweep(cfg).map_err(|e| e.to_string())?;
    let mut ok = true;
    for point in &report.points {
        ok &= describe_run(
            &format!("delta_n = {} (gamma = {:.3})", point.delta_n, point.gamma),
            &point.output,
        );
        if let (Some(measured), Some(predicted)) = (point.measured_period, point.predicted_period)
        {
            println!(
                "  period: measured {measured:.2}, predicted {predicted:.2}, amplitude {:.4e}",
                point.amplitude.unwrap_or(f64::NAN)
            );
        }
        if let Some(reason) = &point.period_failure {
            eprintln!("  period detection failed: {reason}");
            ok = false;
        }
    }
    if let Some(alpha) = report.alpha {
        println!("amplitude power law: N(t0/2) ~ (delta_n)^{alpha:.3}");
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, run): (&CommonArgs, fn(&RunConfig) -> Result<bool, String>) = match &cli.command {
        Command::Run(args) => (args, cmd_run),
        Command::Converge(args) => (args, cmd_converge),
        Command::Detune(args) => (args, cmd_detune),
    };
    let cfg = match load_config(args) {
        Ok(cfg) => cfg,
        Err(message) => {
            eprintln!("error: {message}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
