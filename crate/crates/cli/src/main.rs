use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use damic_cli::{run, Command, Invocation};
use damic_core::damic::TrainingMode;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CommandArg {
    Generate,
    Pretrain,
    Train,
    Evaluate,
    Ablation,
}

/// Deep clustering with a mixture of autoencoders.
#[derive(Debug, Parser)]
#[command(name = "damic", version)]
struct Args {
    #[arg(value_enum)]
    command: CommandArg,
    /// Flat `key = value` run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `mode` (full, pretrain_only, joint_only_random_init, reconstruction_only).
    #[arg(long, value_parser = clap::builder::ValueParser::new(|s: &str| s.parse::<TrainingMode>()))]
    mode: Option<TrainingMode>,
    /// Overrides `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Allow writing into a non-empty output directory.
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let command = match args.command {
        CommandArg::Generate => Command::Generate,
        CommandArg::Pretrain => Command::Pretrain,
        CommandArg::Train => Command::Train,
        CommandArg::Evaluate => Command::Evaluate,
        CommandArg::Ablation => Command::Ablation,
    };
    let inv = Invocation {
        command,
        config: args.config,
        seed: args.seed,
        mode: args.mode,
        out: args.out,
        force: args.force,
    };
    match run(&inv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
