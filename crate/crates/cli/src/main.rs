use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use udrn::Result;
use udrn_cli::commands::{cmd_evaluate, cmd_plot, cmd_sweep, cmd_synth, cmd_train};
use udrn_cli::{exit_code, RunConfig};

#[derive(Parser)]
#[command(name = "udrn", version, about = "Joint feature selection and 2-D embedding with gated MLPs")]
struct Cli {
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write all artifacts.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override the root seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (defaults to io.output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the configured data.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render an embedding CSV as an SVG scatter plot.
    Plot {
        /// Embedding CSV with z0,z1 and an optional label column.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional config supplying [plot] settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a synthetic dataset described by the [synthetic] section.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train once per augmentation (kind, strength) cell.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &std::path::Path, seed: Option<u64>) -> Result<RunConfig> {
    let cfg = RunConfig::load(path)?;
    Ok(match seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn run(cli: Cli) -> Result<()> {
    let progress = !cli.quiet;
    match cli.command {
        Command::Train { config, seed, out } => {
            let cfg = load(&config, seed)?;
            let out = out.unwrap_or_else(|| cfg.io.output_dir.clone());
            let outcome = cmd_train(&cfg, &out, progress)?;
            println!("{}", serde_json::to_string_pretty(&outcome.metrics)?);
        }
        Command::Evaluate { checkpoint, config, out } => {
            let cfg = load(&config, None)?;
            let metrics = cmd_evaluate(&checkpoint, &cfg, out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&metrics)?);
        }
        Command::Plot { input, out, config } => {
            let cfg = match config {
                Some(c) => load(&c, None)?,
                None => RunConfig::default(),
            };
            cmd_plot(&input, &out, &cfg)?;
        }
        Command::Synth { config, seed, out } => {
            let mut cfg = match config {
                Some(c) => load(&c, None)?,
                None => RunConfig::default(),
            };
            if cfg.synthetic.is_none() {
                cfg.synthetic = Some(Default::default());
            }
            if let Some(s) = seed {
                cfg = cfg.with_seed(s);
            }
            cmd_synth(&cfg, &out)?;
        }
        Command::Sweep { config, seed, out } => {
            let cfg = load(&config, seed)?;
            let out = out.unwrap_or_else(|| cfg.io.output_dir.clone());
            for r in cmd_sweep(&cfg, &out, progress)? {
                println!("{}", serde_json::to_string(&r)?);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
