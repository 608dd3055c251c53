use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use noma_access::harness::{
    cmd_benchmark, cmd_calibrate, cmd_convergence, cmd_phy_table, cmd_simulate, CommandOutput, ExperimentSpec,
    HarnessError,
};
use noma_access::ConfigError;

const WORKERS_ENV: &str = "NOMA_SIM_WORKERS";

#[derive(Parser)]
#[command(name = "noma-sim", version, about = "Clustered NOMA random-access simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment description (TOML). Defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// CSV destination; an SVG chart is written next to it. Defaults to stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Base master seed (overrides run.seed).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Frames per run (overrides run.frames).
    #[arg(long, global = true, value_name = "N")]
    frames: Option<u64>,
    /// Worker threads. NOMA_SIM_WORKERS takes precedence.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Run the learning agent over the λ sweep and replications.
    Simulate,
    /// Exhaustive-search throughput benchmark per λ.
    Benchmark,
    /// Physical-layer detection probabilities per (n1, n2).
    PhyTable,
    /// Windowed throughput over time, averaged over replications.
    Convergence,
    /// Noise bandwidth that matches the lone-C1 success target.
    Calibrate,
}

fn load_spec(cli: &Cli) -> Result<ExperimentSpec, HarnessError> {
    let mut spec = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
            ExperimentSpec::from_toml(&text)?
        }
        None => ExperimentSpec::default(),
    };
    if let Some(seed) = cli.seed {
        spec.run.seed = seed;
    }
    if let Some(frames) = cli.frames {
        spec.run.frames = frames;
    }
    spec.validate()?;
    Ok(spec)
}

fn worker_count(cli: &Cli) -> Result<usize, HarnessError> {
    let n = match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| ConfigError::new(WORKERS_ENV, format!("expected a positive integer, got `{v}`")))?,
        Err(_) => cli
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
    };
    if n == 0 {
        return Err(ConfigError::new("workers", "must be at least 1").into());
    }
    Ok(n)
}

fn write(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|e| HarnessError::Io(format!("cannot write {}: {e}", path.display())))
}

fn emit(cli: &Cli, spec: &ExperimentSpec, out: CommandOutput) -> Result<(), HarnessError> {
    match &cli.out {
        Some(path) => {
            write(path, &out.csv)?;
            if let Some(svg) = &out.svg {
                write(&path.with_extension("svg"), svg)?;
            }
        }
        None => print!("{}", out.csv),
    }
    if let Some(dir) = &spec.run.policy_out {
        let dir = Path::new(dir);
        if !out.files.is_empty() {
            std::fs::create_dir_all(dir)
                .map_err(|e| HarnessError::Io(format!("cannot create {}: {e}", dir.display())))?;
        }
        for (name, contents) in &out.files {
            write(&dir.join(name), contents)?;
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    let spec = load_spec(cli)?;
    let workers = worker_count(cli)?;
    let out = match cli.command {
        Command::Simulate => cmd_simulate(&spec, workers)?,
        Command::Benchmark => cmd_benchmark(&spec, workers)?,
        Command::PhyTable => cmd_phy_table(&spec, workers)?,
        Command::Convergence => cmd_convergence(&spec, workers)?,
        Command::Calibrate => cmd_calibrate(&spec)?,
    };
    emit(cli, &spec, out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
