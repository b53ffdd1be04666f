use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use subharmonic_lab::config::ExperimentConfig;
use subharmonic_lab::pipeline::{emit_plot_data, run_lemmas, run_until, RunStatus, Stage};
use subharmonic_lab::Error;

/// Approximate subharmonic growth profiles by log-moduli of entire functions
/// and study the exceptional sets where the approximation fails.
#[derive(Parser)]
#[command(name = "subharm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config and SUBHARM_OUTPUT_DIR.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for field evaluation.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Atomize the Riesz measure and write cells.csv.
    Atomize(Common),
    /// Evaluate the error field on the grid.
    Field(Common),
    /// Flag samples where the error exceeds the budget.
    Scan(Common),
    /// Cover the flagged samples by disks.
    Cover(Common),
    /// Run through the band table and write report.json.
    Report(Common),
    /// Run the growth-lemma batteries only.
    Lemmas(Common),
    /// Full pipeline including lemma batteries.
    Run(Common),
    /// Derive plotting tables from an existing report.json.
    PlotData(Common),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 2,
        Error::CapViolation { .. } => 4,
        Error::Io(_) => 1,
        _ => 3,
    }
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf), Error> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.resolved_output_dir());
    Ok((cfg, out))
}

fn plot_data(out: &Path) -> Result<(), Error> {
    let text = std::fs::read_to_string(out.join("report.json"))?;
    let report: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::InsufficientData(format!("report.json: {e}")))?;
    emit_plot_data(&report, out)
}

fn execute(command: Command) -> Result<RunStatus, Error> {
    let (common, stage) = match command {
        Command::Atomize(c) => (c, Some(Stage::Atomize)),
        Command::Field(c) => (c, Some(Stage::Field)),
        Command::Scan(c) => (c, Some(Stage::Scan)),
        Command::Cover(c) => (c, Some(Stage::Cover)),
        Command::Report(c) => (c, Some(Stage::Report)),
        Command::Run(c) => (c, Some(Stage::Run)),
        Command::Lemmas(c) => (c, None),
        Command::PlotData(c) => {
            let (_, out) = load(&c)?;
            plot_data(&out)?;
            return Ok(RunStatus::Pass);
        }
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config { field: "threads".into(), reason: e.to_string() })?;
    }
    let (cfg, out) = load(&common)?;
    match stage {
        Some(stage) => {
            let outcome = run_until(&cfg, &out, stage)?;
            if stage == Stage::Run {
                plot_data(&out)?;
            }
            Ok(outcome.status)
        }
        None => Ok(run_lemmas(&cfg, &out)?.0),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(status) => {
            if status != RunStatus::Pass {
                eprintln!("subharm: run finished with status {}, see report.json", status.name());
            }
            ExitCode::from(status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("subharm: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
