use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gelenet_cli::CommonArgs;

/// Salient object detection experiments: synthetic data, training,
/// inference, evaluation, and ablation sweeps.
#[derive(Parser)]
#[command(name = "gelenet", version, about)]
struct Cli {
    /// Experiment config file (flat key = value lines, include supported)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides out_dir from the config)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed override
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Built-in preset applied before the config file
    #[arg(long, global = true, value_parser = ["desk", "paper"])]
    preset: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoint, loss trace, and metrics
    Train,
    /// Run a checkpoint over images and write saliency PNGs
    Infer {
        /// Checkpoint produced by train
        #[arg(long)]
        checkpoint: PathBuf,
        /// Also export attention maps and the correlation heatmap
        #[arg(long)]
        debug_maps: bool,
        /// Image files or directories of PNGs
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Score saliency predictions against ground truth masks
    Eval {
        /// Directory of prediction PNGs
        #[arg(long)]
        pred: PathBuf,
        /// Ground truth: a directory of mask PNGs or a manifest file
        #[arg(long)]
        gt: PathBuf,
    },
    /// Finite-difference checks for every module
    Gradcheck {
        /// Maximum allowed relative error
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
    },
    /// Train a list of model variants and tabulate their metrics
    Ablate {
        /// Comma-separated variant names (see docs; "pairwise" expands)
        #[arg(long, value_delimiter = ',', required = true)]
        variants: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = CommonArgs {
        config: cli.config,
        out: cli.out,
        seed: cli.seed,
        preset: cli.preset,
    };
    let result = match &cli.command {
        Command::Train => gelenet_cli::cmd_train(&common),
        Command::Infer {
            checkpoint,
            debug_maps,
            images,
        } => gelenet_cli::cmd_infer(&common, checkpoint, images, *debug_maps),
        Command::Eval { pred, gt } => gelenet_cli::cmd_eval(&common, pred, gt),
        Command::Gradcheck { tolerance } => gelenet_cli::cmd_gradcheck(&common, *tolerance),
        Command::Ablate { variants } => gelenet_cli::cmd_ablate(&common, variants),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
