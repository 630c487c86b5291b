use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cyclevc::commands::{cmd_convert, cmd_evaluate, cmd_gradcheck, ConvertOptions, Direction};
use cyclevc::synth_cmd::cmd_synth;
use cyclevc::train::{cmd_train, TrainOptions};
use cyclevc::{log_level, Failure, LOG_ENV};

#[derive(Parser)]
#[command(name = "cyclevc", version, about = "Non-parallel conversion of mel-cepstral feature trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dir {
    Xy,
    Yx,
}

#[derive(Subcommand)]
enum Command {
    /// Train both generators and discriminators from a run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `out_dir` in the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Resume from this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Convert a feature file, or every `.mcp` file in a directory.
    Convert {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        direction: Dir,
        /// Output file, or output directory for a directory input.
        #[arg(long)]
        out: PathBuf,
        /// Also write `<name>.diff.mcp`, the converted minus source features.
        #[arg(long)]
        differential: bool,
        input: PathBuf,
    },
    /// Per-utterance MCD and MSD of converted files against targets.
    Evaluate {
        converted: PathBuf,
        target: PathBuf,
        /// Pairing manifest: `name` or `converted_name target_name` per line.
        pairing: PathBuf,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of every differentiable op.
    Gradcheck {
        #[arg(long, hide = true)]
        corrupt_backward: Option<String>,
    },
    /// Write a synthetic two-speaker corpus with its ground-truth map.
    Synth {
        /// Synth spec file; defaults apply when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Train {
            config,
            out,
            seed,
            checkpoint,
        } => cmd_train(&TrainOptions {
            config,
            out,
            seed,
            resume: checkpoint,
        })
        .map(drop),
        Command::Convert {
            checkpoint,
            direction,
            out,
            differential,
            input,
        } => cmd_convert(&ConvertOptions {
            checkpoint,
            input,
            direction: match direction {
                Dir::Xy => Direction::Xy,
                Dir::Yx => Direction::Yx,
            },
            out,
            differential,
        })
        .map(drop),
        Command::Evaluate {
            converted,
            target,
            pairing,
            out,
        } => cmd_evaluate(&converted, &target, &pairing, out.as_deref()).map(drop),
        Command::Gradcheck { corrupt_backward } => cmd_gradcheck(corrupt_backward.as_deref()).map(drop),
        Command::Synth { config, out, seed } => cmd_synth(config.as_deref(), &out, seed).map(drop),
    }
}

fn main() -> ExitCode {
    let level = match log_level(std::env::var(LOG_ENV).ok().as_deref()) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(Failure::VALIDATION as u8);
        }
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(Failure::VALIDATION as u8);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code as u8)
        }
    }
}
