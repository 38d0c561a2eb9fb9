//! `cotow simulate` runs scenario files and writes series, metrics and plots.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cotow_core::sim::{emit_outputs, parse_scenario, run_simulation, ScenarioConfig};

const OUT_ENV: &str = "COTOW_OUT";

#[derive(Parser)]
#[command(name = "cotow", version, about = "Cable-towed load simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenario files; each runs on its own thread.
    Simulate(SimulateArgs),
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(required = true)]
    scenarios: Vec<PathBuf>,
    /// Output root. Each scenario writes to `<root>/<file stem>`. Falls back
    /// to `output.dir` in the scenario, then `$COTOW_OUT`, then `./out`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override the integrator step in seconds.
    #[arg(long, value_name = "S")]
    dt: Option<f64>,
    /// Override the simulated horizon in seconds.
    #[arg(long, value_name = "S")]
    horizon: Option<f64>,
    #[arg(long)]
    no_plots: bool,
    /// Parse and validate only.
    #[arg(long)]
    validate_only: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Outcome {
    Ok = 0,
    Invalid = 2,
    Numerical = 3,
}

fn load(path: &Path, args: &SimulateArgs) -> Result<ScenarioConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read: {e}"))?;
    let mut cfg = parse_scenario(&text).map_err(|e| e.to_string())?;
    if args.dt.is_none() && args.horizon.is_none() {
        return Ok(cfg);
    }
    if let Some(dt) = args.dt {
        cfg.integrator.dt = dt;
    }
    if let Some(h) = args.horizon {
        cfg.integrator.horizon = h;
    }
    // Revalidate the overridden scenario through its canonical text.
    parse_scenario(&cfg.to_canonical()).map_err(|e| e.to_string())
}

fn output_dir(path: &Path, cfg: &ScenarioConfig, args: &SimulateArgs) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "scenario".into(), |s| s.to_os_string());
    let root = args
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    root.join(stem)
}

fn run_one(path: &Path, args: &SimulateArgs) -> (Outcome, String) {
    let name = path.display();
    let cfg = match load(path, args) {
        Ok(cfg) => cfg,
        Err(e) => return (Outcome::Invalid, format!("{name}: {e}")),
    };
    if args.validate_only {
        return (Outcome::Ok, format!("{name}: valid"));
    }
    let rec = match run_simulation(&cfg) {
        Ok(rec) => rec,
        Err(e) => return (Outcome::Numerical, format!("{name}: {e}")),
    };
    let dir = output_dir(path, &cfg, args);
    match emit_outputs(&rec, &cfg, &dir, cfg.output.plots && !args.no_plots) {
        Ok(_) => {
            let m = &rec.metrics;
            let mut msg = format!(
                "{name}: {} steps, rms lateral error {:.3e} m, final {:.3e} m, min tension {:.3e} N -> {}",
                rec.rows.len() - 1,
                m.rms_lateral_error_m,
                m.final_lateral_error_m,
                m.min_tension_n,
                dir.display()
            );
            for e in rec.events.iter().filter(|e| e.is_warning()) {
                msg.push_str(&format!("\n  warning at t = {:.3} s: {:?}", e.t, e.kind));
            }
            (Outcome::Ok, msg)
        }
        Err(e) => (Outcome::Invalid, format!("{name}: cannot write {}: {e}", dir.display())),
    }
}

fn main() -> ExitCode {
    let Command::Simulate(args) = Cli::parse().command;
    let results: Vec<(Outcome, String)> = std::thread::scope(|s| {
        let handles: Vec<_> = args.scenarios.iter().map(|p| s.spawn(|| run_one(p, &args))).collect();
        handles.into_iter().map(|h| h.join().unwrap_or((Outcome::Numerical, "worker panicked".into()))).collect()
    });
    let mut worst = Outcome::Ok;
    for (outcome, msg) in &results {
        if *outcome == Outcome::Ok {
            println!("{msg}");
        } else {
            eprintln!("{msg}");
        }
        worst = worst.max(*outcome);
    }
    ExitCode::from(worst as u8)
}
