//! `roomlayout`: generate synthetic datasets, propose and refine layout
//! candidates, train the scorer, run inference and evaluate predictions.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use roomlayout::pipeline::{self, Manifest, PipelineConfig};
use roomlayout::scoring::ScorerParams;
use roomlayout::{Error, Result};

#[derive(Parser)]
#[command(
    name = "roomlayout",
    version,
    about = "Generic room layout estimation from layout feature maps"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML configuration file; unknown keys are rejected.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration value, e.g. `--set proposal.boundary_threshold=0.4`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample synthetic scenes (maps, ground-truth layouts, photos, manifest).
    Generate {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        walls_min: usize,
        #[arg(long, default_value_t = 6)]
        walls_max: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the candidate set of every image to `<out>/candidates/`.
    Propose {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the scorer and write its parameters.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Select a layout per image; writes `<out>/predictions/`.
    Infer {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_name = "FILE")]
        params: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also draw the selected layouts into `<out>/overlays/`.
        #[arg(long)]
        overlays: bool,
    },
    /// Compare predictions with the ground truth and write a CSV report.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory holding `<id>.json` (and optionally `<id>.ranked.json`).
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

fn run(cli: Cli) -> Result<()> {
    let cfg = PipelineConfig::load(cli.global.config.as_deref(), &cli.global.overrides)?;
    match cli.command {
        Command::Generate {
            n,
            walls_min,
            walls_max,
            out,
        } => {
            let m = pipeline::generate(n, walls_min, walls_max, &cfg, &out)?;
            println!("generated {} scenes into {}", m.entries.len(), out.display());
        }
        Command::Propose { manifest, out } => {
            let m = Manifest::load(&manifest)?;
            let counts = pipeline::propose_dataset(&m, &cfg, &out)?;
            let total: usize = counts.iter().sum();
            println!("{} images, {total} candidates", counts.len());
        }
        Command::Train { manifest, out } => {
            let m = Manifest::load(&manifest)?;
            let params = pipeline::train_dataset(&m, &cfg)?;
            params.save(&out)?;
            println!("wrote {}", out.display());
        }
        Command::Infer {
            manifest,
            params,
            out,
            overlays,
        } => {
            let m = Manifest::load(&manifest)?;
            let params = ScorerParams::load(&params).map_err(|e| named(e, &params))?;
            let layouts = pipeline::infer_dataset(&m, &cfg, &params, &out, overlays)?;
            println!("{} predictions in {}", layouts.len(), out.join("predictions").display());
        }
        Command::Evaluate {
            manifest,
            predictions,
            out,
        } => {
            let m = Manifest::load(&manifest)?;
            let report = pipeline::evaluate_dataset(&m, &predictions, &cfg)?;
            if let Some(path) = out {
                report.save_csv(&path)?;
            }
            print!("{}", report.summary());
        }
        Command::Config => print!("{}", cfg.to_toml()),
    }
    Ok(())
}

/// Adds the path to errors that do not carry one yet.
fn named(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { .. } => e,
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
