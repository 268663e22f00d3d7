mod config;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use kerrsync::integrator::{integrate, Trajectory};
use kerrsync::measures::SteadyStats;
use kerrsync::model::MeanState;
use kerrsync::parallel::default_workers;
use kerrsync::presets::CALIBRATION_BANNER;
use kerrsync::sweep::{format_float, run_sweep, write_csv, GridError};
use kerrsync::validation::{run_validation, ValidationOptions};
use serde_json::json;

use crate::config::{read_config, resolve, ConfigFile, RunConfig, SEED_ENV};

#[derive(Parser)]
#[command(name = "kerrsync", version, about = "Synchronization of two coupled Kerr optomechanical cavities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and write trajectory.csv and summary.json.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a parameter grid and write sweep.csv and sweep_meta.json.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// Worker threads; defaults to the number of cores.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the oracle checks and write validation.json.
    Validate {
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

/// Failure classes mapped onto the exit-code contract.
enum Failure {
    Config(anyhow::Error),
    Numerical(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

fn load(config: Option<&Path>, preset: Option<&str>) -> Result<RunConfig> {
    if config.is_none() && preset.is_none() {
        anyhow::bail!("one of --config or --preset is required");
    }
    let file = match config {
        Some(path) => read_config(path)?,
        None => ConfigFile::default(),
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    let cfg = resolve(preset, file, env_seed.as_deref())?;
    if cfg.preset.is_some() {
        eprintln!("{CALIBRATION_BANNER}");
    }
    Ok(cfg)
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let f = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(())
}

const TRAJECTORY_HEADER: [&str; 11] = [
    "t", "q1", "p1", "re_a1", "im_a1", "q2", "p2", "re_a2", "im_a2", "S_q", "S_c",
];

fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(TRAJECTORY_HEADER)?;
    for i in 0..traj.len() {
        let mut rec = Vec::with_capacity(11);
        rec.push(format_float(traj.times[i]));
        rec.extend(traj.means[i].0.iter().map(|&v| format_float(v)));
        rec.push(format_float(traj.sync_q[i]));
        rec.push(format_float(traj.sync_c[i]));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn simulate(config: Option<&Path>, preset: Option<&str>, out: &Path) -> Result<(), Failure> {
    let cfg = load(config, preset)?;
    prepare_out(out)?;
    let v0 = cfg.initial_covariance.build(cfg.seed);
    let started = Instant::now();
    let (traj, error) = match integrate(&MeanState(cfg.initial_mean), &v0, &cfg.params, &cfg.integrator) {
        Ok(t) => (t, None),
        Err(e) => (*e.partial, Some(e.kind.to_string())),
    };
    let elapsed = started.elapsed().as_secs_f64();
    write_trajectory(&out.join("trajectory.csv"), &traj)?;

    let stats = match SteadyStats::from_trajectory(&traj, cfg.window_fraction) {
        Ok(s) => Some(s),
        Err(e) => {
            eprintln!("steady statistics unavailable: {e}");
            None
        }
    };
    let summary = json!({
        "stats": stats,
        "converged": error.is_none(),
        "error": error,
        "samples": traj.len(),
        "window_fraction": cfg.window_fraction,
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "version": kerrsync::VERSION,
        "config": cfg,
        "elapsed_seconds": elapsed,
    });
    write_json(&out.join("summary.json"), &summary)?;

    if let Some(s) = &stats {
        println!(
            "S_q = {:.6}  S_c = {:.6e}  amp q1/q2 = {:.3}/{:.3}  phase lag = {}",
            s.sync_q_mean,
            s.sync_c_mean,
            s.amp_q1,
            s.amp_q2,
            s.phase_lag.map_or("n/a".into(), |l| format!("{l:.3}"))
        );
    }
    match error {
        Some(e) => Err(Failure::Numerical(format!("integration failed: {e}; partial trajectory written"))),
        None => Ok(()),
    }
}

fn sweep(config: Option<&Path>, preset: Option<&str>, workers: Option<usize>, out: &Path) -> Result<(), Failure> {
    let cfg = load(config, preset)?;
    let grid = cfg.grid();
    grid.validate().map_err(|e| match e {
        GridError::NoAxes => anyhow::anyhow!("no swept parameters"),
        e => anyhow::Error::new(e).context("invalid sweep grid"),
    })?;
    prepare_out(out)?;
    let workers = workers.unwrap_or_else(default_workers).max(1);
    eprintln!("{} points x {} seed(s) on {workers} worker(s)", grid.point_count(), grid.seeds);

    let started = Instant::now();
    let result = run_sweep(&grid, workers).map_err(|e| anyhow::Error::new(e).context("invalid sweep grid"))?;
    let elapsed = started.elapsed().as_secs_f64();

    let path = out.join("sweep.csv");
    let f = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
    write_csv(&result, BufWriter::new(f)).context("writing sweep.csv")?;

    let converged = result.rows.iter().filter(|r| r.converged).count();
    let meta = json!({
        "grid": grid,
        "columns": result.columns,
        "points": result.rows.len(),
        "converged_points": converged,
        "seed": cfg.seed,
        "seeds": cfg.seeds,
        "sync_q_seed_spread": result.rows.iter().map(|r| r.sync_q_spread).collect::<Vec<_>>(),
        "sync_q_seed_spread_max": result.max_sync_q_spread(),
        "preset": cfg.preset,
        "config_hash": cfg.hash(),
        "version": kerrsync::VERSION,
        "workers": workers,
        "elapsed_seconds": elapsed,
    });
    write_json(&out.join("sweep_meta.json"), &meta)?;
    println!("{converged}/{} points converged in {elapsed:.1} s", result.rows.len());
    Ok(())
}

fn validate(out: &Path) -> Result<(), Failure> {
    prepare_out(out)?;
    let report = run_validation(&ValidationOptions::default());
    for c in &report.checks {
        println!(
            "{} {:<17} measured {:.4e}  {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.detail
        );
    }
    let value = json!({
        "passed": report.passed,
        "checks": report.checks,
        "version": kerrsync::VERSION,
    });
    write_json(&out.join("validation.json"), &value)?;
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Numerical("validation failed".into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Simulate { config, preset, out } => simulate(config.as_deref(), preset.as_deref(), out),
        Command::Sweep {
            config,
            preset,
            workers,
            out,
        } => sweep(config.as_deref(), preset.as_deref(), *workers, out),
        Command::Validate { out } => validate(out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
