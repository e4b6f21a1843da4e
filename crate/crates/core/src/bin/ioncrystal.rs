use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ioncrystal::scenario::tasks::{render_task, trap_task, FitTask, ReactTask, RempdTask, SpectrumTask};
use ioncrystal::scenario::{validate, Config, Output, Scenario, Severity};
use ioncrystal::{Error, Result};

#[derive(Parser)]
#[command(name = "ioncrystal", version, about = "Ion Coulomb crystal simulations from scenario configs")]
struct Cli {
    /// Scenario config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print trap properties per species
    Trap,
    /// Execute the schedule
    Run,
    /// Check a config without running it
    Validate,
    /// Motional spectrum from [spectrum]
    Spectrum,
    /// Simulated CCD image from [image]
    Render,
    /// Image fit from [fit]
    Fit,
    /// Chemistry from [react]
    React,
    /// REMPD kinetics from [rempd]
    Rempd,
}

fn load(cli: &Cli) -> Result<(Config, PathBuf)> {
    let path = cli.config.as_ref().ok_or_else(|| Error::InvalidParameter("--config <path> is required".into()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((Config::load(path)?, base))
}

fn finish(out: &Output, dir: &Path) -> Result<()> {
    let written = out.write(dir)?;
    eprintln!("wrote {} files to {}", written.len(), dir.display());
    Ok(())
}

fn execute(cli: &Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    }
    let (config, base) = load(cli)?;
    match cli.command {
        Command::Validate => {
            let text = std::fs::read_to_string(cli.config.as_ref().unwrap())?;
            let diags = validate(&text);
            for d in &diags {
                println!("{d}");
            }
            if diags.iter().any(|d| d.severity == Severity::Error) {
                return Ok(ExitCode::FAILURE);
            }
            if diags.is_empty() {
                println!("ok");
            }
        }
        Command::Trap => {
            let (out, text) = trap_task(&config)?;
            print!("{text}");
            finish(&out, &cli.out_dir)?;
        }
        Command::Run => {
            let sc = Scenario::from_config(&config, cli.seed)?;
            for w in sc.warnings() {
                eprintln!("warning: {w}");
            }
            finish(&sc.run()?, &cli.out_dir)?;
        }
        Command::Spectrum => {
            let mut task = SpectrumTask::from_config(&config)?;
            if let Some(s) = cli.seed {
                task.scenario.seed = s;
            }
            let (spectrum, out) = task.run()?;
            for p in &spectrum.peaks {
                println!("peak {:.6e} Hz  height {:.4e}", p.frequency, p.height);
            }
            for f in &spectrum.flags {
                eprintln!("warning: {f}");
            }
            finish(&out, &cli.out_dir)?;
        }
        Command::Render => {
            let (_, out, text) = render_task(&config, cli.seed)?;
            print!("{text}");
            finish(&out, &cli.out_dir)?;
        }
        Command::Fit => {
            let mut task = FitTask::from_config(&config)?;
            if let Some(s) = cli.seed {
                task.scenario.seed = s;
                task.model.seed = s;
            }
            let (_, out, text) = task.run(&base)?;
            print!("{text}");
            finish(&out, &cli.out_dir)?;
        }
        Command::React => {
            let mut task = ReactTask::from_config(&config)?;
            if let Some(s) = cli.seed {
                task.scenario.seed = s;
            }
            let (_, _, out, text) = task.run()?;
            print!("{text}");
            finish(&out, &cli.out_dir)?;
        }
        Command::Rempd => {
            let (out, text) = RempdTask::from_config_at(&config, &base)?.run()?;
            print!("{text}");
            finish(&out, &cli.out_dir)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            let file = cli.config.as_ref().map_or(String::new(), |p| format!("{}: ", p.display()));
            eprintln!("error: {file}{e}");
            ExitCode::FAILURE
        }
    }
}
