//! `cpg`: runs the spiking CPG experiments and writes their CSV outputs.

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cpg_core::config::{ExperimentConfig, DEFAULT_CONFIG};
use cpg_core::experiments::{
    cmd_burst_trace, cmd_gait, cmd_rtf, cmd_speed_dynamic, cmd_speed_sweep, write_outputs, OutputFile,
};

#[derive(Parser)]
#[command(name = "cpg", version, about = "Astrocyte-gated spiking CPG for hexapod locomotion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file (defaults to the built-in configuration).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (defaults to `out_dir` from the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configuration's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Paces every control tick to its wall-clock budget.
    #[arg(long)]
    realtime: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Compartment traces of one bursting neuron under the configured stimulus.
    BurstTrace(Common),
    /// Motor raster, servo angles and phase annotations for one gait cycle.
    Gait(Common),
    /// Speed response to a piecewise-constant input rate.
    SpeedDynamic(Common),
    /// Average speed across input rates and trials.
    SpeedSweep(Common),
    /// Real-time factor of the closed loop.
    Rtf(Common),
    /// Prints the built-in default configuration.
    DefaultConfig,
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf), String> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| e.to_string())?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if common.realtime {
        cfg.bridge.realtime = true;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    let out = common.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<(), String> {
    let common = match &cli.command {
        Command::DefaultConfig => {
            return report(|w| write!(w, "{DEFAULT_CONFIG}"));
        }
        Command::BurstTrace(c)
        | Command::Gait(c)
        | Command::SpeedDynamic(c)
        | Command::SpeedSweep(c)
        | Command::Rtf(c) => c.clone(),
    };
    let (cfg, out) = load(&common)?;
    let err = |e: cpg_core::CpgError| e.to_string();
    let (files, summary): (Vec<OutputFile>, String) = match cli.command {
        Command::BurstTrace(_) => {
            let o = cmd_burst_trace(&cfg).map_err(err)?;
            (o.files, format!("{} bursts", o.metrics.n_bursts))
        }
        Command::Gait(_) => {
            let o = cmd_gait(&cfg).map_err(err)?;
            let phases: Vec<String> = o
                .phases
                .iter()
                .map(|p| format!("phase {} [{}, {})", p.phase, p.start_step, p.end_step))
                .collect();
            (o.files, format!("gait cycle {:?}: {}", o.cycle, phases.join(", ")))
        }
        Command::SpeedDynamic(_) => {
            let o = cmd_speed_dynamic(&cfg).map_err(err)?;
            let segs: Vec<String> = o
                .segments
                .iter()
                .map(|s| format!("{} Hz: {:.4} m/s", s.rate_hz, s.mean_speed))
                .collect();
            (o.files, segs.join(", "))
        }
        Command::SpeedSweep(_) => {
            let o = cmd_speed_sweep(&cfg).map_err(err)?;
            let rows: Vec<String> = o.rows.iter().map(|r| format!("{} Hz: {:.4} m/s", r.rate_hz, r.mean)).collect();
            (o.files, rows.join(", "))
        }
        Command::Rtf(_) => {
            let o = cmd_rtf(&cfg).map_err(err)?;
            (
                o.files,
                format!(
                    "mean rtf {:.4}, throughput ratio {:.1}, overruns {}",
                    o.summary.mean_rtf, o.summary.throughput_ratio, o.metrics.overruns
                ),
            )
        }
        Command::DefaultConfig => unreachable!(),
    };
    write_outputs(&out, &files).map_err(|e| format!("writing {}: {e}", out.display()))?;
    report(|w| {
        writeln!(w, "{summary}")?;
        for f in &files {
            writeln!(w, "wrote {}", out.join(&f.name).display())?;
        }
        Ok(())
    })
}

/// Writes to stdout; a closed pipe (e.g. `| head`) ends output quietly.
fn report(f: impl FnOnce(&mut io::StdoutLock) -> io::Result<()>) -> Result<(), String> {
    match f(&mut io::stdout().lock()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(format!("writing to stdout: {e}")),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
