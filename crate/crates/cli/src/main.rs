use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::{info, warn};

use semiwave::config::{FigureKind, SweepPoint};
use semiwave::replay::{fd_forward, ReplaySettings};
use semiwave::report::{self, SummaryRow};
use semiwave::{load_config, run, Config, Status};

#[derive(Parser)]
#[command(name = "semiwave", version, about = "Boundary null controls for the semilinear wave equation")]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one algorithm and write the iteration table, control and figures.
    Solve {
        #[arg(short, long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Simulate the equation with finite differences, optionally driven by a
    /// control file, and report the final energy.
    Replay {
        #[arg(short, long)]
        config: PathBuf,
        /// Two-column `t,v` file written by `solve`.
        #[arg(long)]
        control: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run every combination of the sweep lists and write a summary table.
    Sweep {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Re-render figures from the CSV files in a directory.
    Figure {
        #[arg(short, long, default_value = "out")]
        dir: PathBuf,
    },
}

/// Outcome of a subcommand that ran to completion.
enum Outcome {
    Ok,
    Diverged,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Diverged) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::Solve { config, output } => solve(&load(&config, output)?),
        Command::Replay {
            config,
            control,
            output,
        } => replay(&load(&config, output)?, control.as_deref()),
        Command::Sweep { config, output } => sweep(&load(&config, output)?),
        Command::Figure { dir } => figure(&dir),
    }
}

fn load(path: &Path, output: Option<PathBuf>) -> Result<Config> {
    let mut cfg = load_config(path).with_context(|| format!("reading config {}", path.display()))?;
    if let Some(out) = output {
        cfg.output_dir = out;
    }
    Ok(cfg)
}

fn svg(kind: FigureKind, points: &[(f64, f64)], dir: &Path) -> Result<()> {
    if points.is_empty() {
        warn!("nothing to plot for {}", kind.name());
        return Ok(());
    }
    let path = dir.join(format!("{}.svg", kind.name()));
    report::write_svg(kind, points, &path)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn solve(cfg: &Config) -> Result<Outcome> {
    let run_cfg = cfg.run_config();
    let rep = run(&run_cfg).context("solver failed")?;
    let dir = &cfg.output_dir;
    report::write_csv(&rep, &dir.join("run.csv"))?;
    report::write_control(&rep.v, &dir.join("control.csv"))?;
    let profile = rep.y.space_profile();
    report::write_series(&profile, &dir.join("norm_t.csv"))?;
    for &kind in &cfg.figures {
        let points = match kind {
            FigureKind::NormT => profile.clone(),
            FigureKind::ControlT => rep.v.samples(),
            _ => report::figure_series(kind, &rep.records),
        };
        svg(kind, &points, dir)?;
    }
    let last = rep.last();
    println!(
        "{} {} after {} iterations: sqrt(2E)={} |y|={} |v|={}",
        rep.algorithm,
        rep.status,
        last.k,
        report::sci(last.sqrt2e),
        report::sci(last.norm_y),
        report::sci(last.norm_v)
    );
    Ok(if rep.status == Status::Converged {
        Outcome::Ok
    } else {
        Outcome::Diverged
    })
}

fn replay(cfg: &Config, control: Option<&Path>) -> Result<Outcome> {
    let signal = match control {
        Some(p) => {
            if !p.exists() {
                bail!("control file {} does not exist", p.display());
            }
            Some(report::read_control(p).with_context(|| format!("reading control {}", p.display()))?)
        }
        None => None,
    };
    let run_cfg = cfg.run_config();
    let data = &run_cfg.data;
    let res = fd_forward(
        &|x| data.u0(x),
        &|x| data.u1(x),
        signal.as_ref(),
        &run_cfg.nonlinearity,
        ReplaySettings::new(cfg.replay_m, cfg.replay_cfl, cfg.t_final),
    )?;
    let dir = &cfg.output_dir;
    report::write_series(&res.history, &dir.join("replay_norm_t.csv"))?;
    if cfg.figures.contains(&FigureKind::NormT) {
        report::write_svg(FigureKind::NormT, &res.history, &dir.join("replay_norm_t.svg"))?;
    }
    let e = res.final_energy();
    println!(
        "final energy {} ({})",
        report::sci(e.value),
        if e.relative { "relative" } else { "absolute, zero data" }
    );
    Ok(Outcome::Ok)
}

fn sweep(cfg: &Config) -> Result<Outcome> {
    let points: Vec<SweepPoint> = cfg.sweep_points();
    let dir = &cfg.output_dir;
    let mut rows = Vec::with_capacity(points.len());
    for p in points {
        let rep = run(&cfg.run_config_for(p))
            .with_context(|| format!("{} with c_f={} c_u0={}", p.algorithm, p.c_f, p.c_u0))?;
        let name = format!("{}_cf{}_cu0{}.csv", p.algorithm.tag().to_lowercase(), p.c_f, p.c_u0);
        report::write_csv(&rep, &dir.join("runs").join(name))?;
        let row = SummaryRow::from_report(p.c_f, p.c_u0, &rep);
        println!(
            "{} c_f={} c_u0={}: {} k*={}",
            row.algorithm,
            p.c_f,
            p.c_u0,
            row.status,
            row.k_star.map_or("-".into(), |k| k.to_string())
        );
        rows.push(row);
    }
    report::write_summary(&rows, &dir.join("summary.csv"))?;
    Ok(if rows.iter().all(|r| r.status == Status::Converged) {
        Outcome::Ok
    } else {
        Outcome::Diverged
    })
}

fn figure(dir: &Path) -> Result<Outcome> {
    let run_csv = dir.join("run.csv");
    let mut any = false;
    if run_csv.exists() {
        let (records, _) = report::read_csv(&run_csv)?;
        for kind in [FigureKind::ErrorVsK, FigureKind::LambdaVsK] {
            svg(kind, &report::figure_series(kind, &records), dir)?;
        }
        any = true;
    }
    let control = dir.join("control.csv");
    if control.exists() {
        let sig = report::read_control(&control)?;
        let pts: Vec<(f64, f64)> = sig.times().iter().copied().zip(sig.values().iter().copied()).collect();
        svg(FigureKind::ControlT, &pts, dir)?;
        any = true;
    }
    let norm = dir.join("norm_t.csv");
    if norm.exists() {
        svg(FigureKind::NormT, &report::read_series(&norm)?, dir)?;
        any = true;
    }
    if !any {
        bail!("no run.csv, control.csv or norm_t.csv in {}", dir.display());
    }
    Ok(Outcome::Ok)
}
