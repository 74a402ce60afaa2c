mod config;
mod server;

use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::thread;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use crossbeam_channel::unbounded;
use log::info;
use vinebot_core::calibration::CalibrationProfile;
use vinebot_core::io::{self, ResultRow, SessionReport};
use vinebot_core::replay::{calibrate_trace, run_replay};
use vinebot_core::service::{run_loop, InputMode, RealTimeTicker, Session};
use vinebot_core::synth::{operator_profile, run_scripted, synth_calibration_trace, SynthOptions};
use vinebot_core::task::{DropScatter, TargetId};

use crate::config::FileConfig;

#[derive(Parser)]
#[command(name = "vinebot", version, about = "Gesture teleoperation of a simulated growing robot")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the live 66 Hz session and accept TCP or WebSocket clients.
    Serve {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long, value_enum, default_value_t = Mode::Marker)]
        mode: Mode,
        /// Calibration profile; required in marker mode.
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Replay a marker trace through the pipeline.
    Replay {
        trace: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        target: TargetId,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Build a calibration profile from a sweep trace. The first frame is
    /// taken as the neutral pose.
    Calibrate {
        trace: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run scripted-operator trials and write traces, command logs and a report.
    RunScripted {
        /// T1, T2, T3 or all.
        #[arg(long, default_value = "all")]
        target: String,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Marker noise half-width in metres.
        #[arg(long)]
        noise: Option<f64>,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Aggregate `results.csv` in a directory into `report.csv`.
    Report { dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Marker,
    Proxy,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VINEBOT_LOG", "info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve {
            port,
            bind,
            mode,
            profile,
            config,
        } => serve(&bind, port, mode, profile.as_deref(), config.as_deref()),
        Command::Replay {
            trace,
            profile,
            target,
            out,
            config,
        } => replay(&trace, &profile, target, &out, config.as_deref()),
        Command::Calibrate { trace, out, config } => calibrate(&trace, &out, config.as_deref()),
        Command::RunScripted {
            target,
            trials,
            seed,
            noise,
            out,
            config,
        } => scripted(&target, trials, seed, noise, &out, config.as_deref()),
        Command::Report { dir } => report(&dir),
    }
}

fn serve(bind: &str, port: u16, mode: Mode, profile: Option<&Path>, config: Option<&Path>) -> Result<()> {
    let config = FileConfig::load(config)?;
    let (mode, profile) = match (mode, profile) {
        (Mode::Marker, None) => bail!("marker mode needs --profile"),
        (Mode::Marker, Some(p)) => (InputMode::Marker, read_profile(p)?),
        (Mode::Proxy, Some(p)) => (InputMode::Proxy, read_profile(p)?),
        (Mode::Proxy, None) => (InputMode::Proxy, CalibrationProfile::default()),
    };
    let mut session = Session::new(config.robot, profile, mode);
    if let Some(coeff) = config.task.drop_scatter {
        session = session.with_scatter(DropScatter::new(coeff, config.task.scatter_seed));
    }
    let listener = TcpListener::bind((bind, port)).with_context(|| format!("binding {bind}:{port}"))?;
    let addr = listener.local_addr()?;
    println!("listening on {addr}");
    info!("serving in {mode:?} mode");
    let (tx, rx) = unbounded();
    thread::spawn(move || server::accept_loop(listener, tx));
    let stats = run_loop(&mut session, &rx, &mut RealTimeTicker::new());
    info!("stopped after {} ticks, slowest {:?}", stats.ticks, stats.max_tick);
    Ok(())
}

fn read_profile(path: &Path) -> Result<CalibrationProfile> {
    io::read_profile(path).with_context(|| format!("reading profile {}", path.display()))
}

fn replay(trace: &Path, profile: &Path, target: TargetId, out: &Path, config: Option<&Path>) -> Result<()> {
    let config = FileConfig::load(config)?;
    let trace = io::read_trace(trace).with_context(|| format!("reading trace {}", trace.display()))?;
    let profile = read_profile(profile)?;
    let output = run_replay(&trace, &profile, target, &config.robot);
    fs::create_dir_all(out)?;
    io::write_command_log(&out.join("commands.csv"), &output.log)?;
    println!("{} commands written to {}", output.log.len(), out.join("commands.csv").display());
    let result = output.result.context("trace ended before the trial finished")?;
    fs::write(out.join("result.json"), serde_json::to_string_pretty(&result)? + "\n")?;
    io::write_results(&out.join("results.csv"), &[ResultRow::new(1, &result)])?;
    match (result.failed, result.tpe_cm) {
        (false, Some(tpe)) => println!("placed on {target}: TPE {tpe:.2} cm in {:.2} s", result.tct_total_s),
        _ => println!(
            "failed: {}",
            result.failure_reason.map_or("unknown".to_string(), |r| r.to_string())
        ),
    }
    Ok(())
}

fn calibrate(trace: &Path, out: &Path, config: Option<&Path>) -> Result<()> {
    let config = FileConfig::load(config)?;
    let trace = io::read_trace(trace).with_context(|| format!("reading trace {}", trace.display()))?;
    let profile = calibrate_trace(&trace, &config.robot)?;
    io::write_profile(out, &profile)?;
    println!(
        "profile written to {}: x [{:.3}, {:.3}] y [{:.3}, {:.3}] z [{:.3}, {:.3}] deadband [{:.3}, {:.3}]",
        out.display(),
        profile.x_left,
        profile.x_right,
        profile.y_low,
        profile.y_high,
        profile.z_back,
        profile.z_front,
        profile.db_l,
        profile.db_u
    );
    Ok(())
}

fn parse_targets(spec: &str) -> Result<Vec<TargetId>> {
    if spec.eq_ignore_ascii_case("all") {
        return Ok(TargetId::ALL.to_vec());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<TargetId>().map_err(|e| anyhow::anyhow!("{e}")))
        .collect()
}

fn scripted(target: &str, trials: usize, seed: u64, noise: Option<f64>, out: &Path, config: Option<&Path>) -> Result<()> {
    let config = FileConfig::load(config)?;
    let targets = parse_targets(target)?;
    let mut options = SynthOptions {
        config: config.robot,
        ..SynthOptions::default()
    };
    if let Some(noise) = noise {
        options.noise = noise;
    }
    fs::create_dir_all(out)?;
    io::write_profile(&out.join("profile.txt"), &operator_profile())?;
    io::write_trace(&out.join("calibration.jsonl"), &synth_calibration_trace(seed, options.noise))?;

    let runs = run_scripted(&targets, trials, seed, &options)?;
    let mut results = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let stem = format!("trial_{:02}_{}", i + 1, run.target);
        io::write_trace(&out.join(format!("{stem}.jsonl")), &run.trace)?;
        io::write_command_log(&out.join(format!("{stem}.commands.csv")), &run.replay.log)?;
        match &run.replay.result {
            Ok(r) => results.push(r.clone()),
            Err(e) => bail!("trial {} toward {} did not finish: {e}", i + 1, run.target),
        }
    }
    let rows: Vec<_> = results.iter().enumerate().map(|(i, r)| ResultRow::new(i + 1, r)).collect();
    io::write_results(&out.join("results.csv"), &rows)?;
    let report = io::emit_report(&results, &out.join("report.csv"))?;
    print_summary(&report);
    Ok(())
}

fn report(dir: &Path) -> Result<()> {
    let path = dir.join("results.csv");
    let rows = io::read_results(&path).with_context(|| format!("reading {}", path.display()))?;
    let report = SessionReport::from_rows(rows)?;
    report.write(&dir.join("report.csv"))?;
    print_summary(&report);
    Ok(())
}

fn print_summary(report: &SessionReport) {
    println!(
        "{} trials, {} placed, success rate {:.1}%",
        report.rows.len(),
        report.successes,
        100.0 * report.success_rate
    );
    if let (Some(mean), Some(median)) = (report.mean_tpe_cm, report.median_tpe_cm) {
        println!("TPE mean {mean:.3} cm, median {median:.3} cm");
    }
    for bin in &report.histogram {
        println!("  [{:.1}, {:.1}) cm  {}", bin.lo_cm, bin.hi_cm, bin.count);
    }
}
