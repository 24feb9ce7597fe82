use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hydrosentinel_cli::pipeline::{self, Context};
use hydrosentinel_cli::{report, CliError, Experiment};

#[derive(Parser, Debug)]
#[command(version, about = "Sensor placement, ChebNet training and leak detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Run only this seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the artifact directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the healthy dataset and the leak scenario
    GenData(Common),
    /// Compute sensor placements
    Place(Common),
    /// Train reconstructors and predictors
    Train(Common),
    /// Calibrate thresholds and raise alarms
    Detect(Common),
    /// Summarize all artifacts
    Report(Common),
    /// Every stage in order
    Run(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::GenData(c)
            | Command::Place(c)
            | Command::Train(c)
            | Command::Detect(c)
            | Command::Report(c)
            | Command::Run(c) => c,
        }
    }
}

fn execute(command: &Command) -> Result<(), CliError> {
    let common = command.common();
    let mut exp = Experiment::load(&common.config)?;
    if let Some(seed) = common.seed {
        exp.restrict_seed(seed);
    }
    if let Some(out) = &common.out {
        exp.output_dir = out.clone();
    }
    let ctx = Context::new(exp)?;
    match command {
        Command::GenData(_) => pipeline::gen_data(&ctx),
        Command::Place(_) => pipeline::place(&ctx).map(drop),
        Command::Train(_) => pipeline::train(&ctx),
        Command::Detect(_) => pipeline::detect_stage(&ctx),
        Command::Report(_) => report::report(&ctx).map(|_| {
            if let Ok(text) = std::fs::read_to_string(ctx.exp.output_dir.join(report::REPORT_TEXT)) {
                print!("{text}");
            }
        }),
        Command::Run(_) => pipeline::run_all(&ctx).map(drop),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}
