use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use keydecode::pipeline::{run_all, run_stage, Ctx, Overrides, PipelineConfig, Stage};
use keydecode::signal::Device;

#[derive(Parser)]
#[command(name = "keydecode", version, about = "Keystroke decoding from synthetic M/EEG recordings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Share of training sentences to train on.
    #[arg(long, global = true)]
    train_fraction: Option<f64>,
    /// Language-model weight in the fusion.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    beam: Option<usize>,
    #[arg(long, global = true, value_enum)]
    device: Option<DeviceArg>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Use upstream artifacts even if their configuration hash differs.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    Generate,
    Preprocess,
    Split,
    TrainLm,
    Train,
    Decode,
    Evaluate,
    Analyze,
    RunAll,
}

#[derive(ValueEnum, Clone, Copy)]
enum DeviceArg {
    Eeg,
    Meg,
}

fn run(cli: &Cli) -> keydecode::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        train_fraction: cli.train_fraction,
        alpha: cli.alpha,
        beam: cli.beam,
        device: cli.device.map(|d| match d {
            DeviceArg::Eeg => Device::Eeg,
            DeviceArg::Meg => Device::Meg,
        }),
    });
    let ctx = Ctx {
        out: &cli.out,
        cfg: &cfg,
        force: cli.force,
    };
    let stage = match cli.command {
        Command::Generate => Stage::Generate,
        Command::Preprocess => Stage::Preprocess,
        Command::Split => Stage::Split,
        Command::TrainLm => Stage::TrainLm,
        Command::Train => Stage::Train,
        Command::Decode => Stage::Decode,
        Command::Evaluate => Stage::Evaluate,
        Command::Analyze => Stage::Analyze,
        Command::RunAll => {
            run_all(ctx)?;
            return Ok(());
        }
    };
    run_stage(stage, ctx)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
