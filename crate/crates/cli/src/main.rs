use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hyperforest_cli::commands::{self, EvalSplit};
use hyperforest_cli::{CliError, PipelineConfig};

#[derive(Parser)]
#[command(name = "hyperforest", version, about = "Corruption-risk classification of procurement contracts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, curate and label contracts, then write the feature table.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and calibrate a hyper-forest.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Score a saved model on one split of its training table.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: EvalSplit,
    },
    /// Recursive feature elimination.
    Rfe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Label new rows with a saved model.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Input is a contracts file rather than a feature table.
        #[arg(long)]
        raw: bool,
    },
    /// Write a synthetic labeled feature table.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        informative: Option<usize>,
        #[arg(long)]
        noise: Option<usize>,
    },
}

fn load(common: &Common) -> Result<PipelineConfig, CliError> {
    let mut cfg = PipelineConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest { common, out } => {
            let s = commands::cmd_ingest(&load(&common)?, out.as_deref())?;
            println!(
                "{} contracts accepted, {} rejected; {} C, {} NC; registry of {} suppliers",
                s.accepted, s.rejected, s.class_counts[0], s.class_counts[1], s.registry_size
            );
            println!("wrote {}", s.dataset.display());
        }
        Command::Train { common, input, model } => {
            let s = commands::cmd_train(&load(&common)?, input.as_deref(), model.as_deref())?;
            println!(
                "{} forests; theta {} (tpr {:.4}, fpr {:.4}, auc {:.4})",
                s.n_forests, s.calibration.theta, s.calibration.tpr, s.calibration.fpr, s.calibration.auc
            );
            println!("wrote {} (sha256 {})", s.model.display(), s.checksum);
        }
        Command::Evaluate { common, model, input, out, split } => {
            let s = commands::cmd_evaluate(&load(&common)?, model.as_deref(), input.as_deref(), out.as_deref(), split)?;
            let show = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"));
            println!(
                "{} rows at theta {}: balanced accuracy {}, NC accuracy {}, C accuracy {}, auc {}",
                s.rows,
                s.theta,
                show(s.metrics.balanced_accuracy),
                show(s.metrics.nc_accuracy),
                show(s.metrics.c_accuracy),
                show(s.metrics.auc)
            );
            println!("wrote {}", s.out_dir.display());
        }
        Command::Rfe { common, input, out } => {
            let s = commands::cmd_rfe(&load(&common)?, input.as_deref(), out.as_deref())?;
            println!(
                "{} stages; best subset ({} features, balanced accuracy {:.4}): {}",
                s.stages,
                s.best_features.len(),
                s.best_balanced_accuracy,
                s.best_features.join(", ")
            );
            println!("wrote {}", s.model.display());
        }
        Command::Predict { common, model, input, out, raw } => {
            let s = commands::cmd_predict(&load(&common)?, model.as_deref(), Some(&input), out.as_deref(), raw)?;
            println!("{} rows scored, {} flagged C, {} skipped", s.rows, s.flagged, s.skipped);
            println!("wrote {}", s.output.display());
        }
        Command::Synth { common, out, rows, ratio, informative, noise } => {
            let cfg = load(&common)?;
            let mut params = cfg.synth;
            params.n_rows = rows.unwrap_or(params.n_rows);
            params.ratio = ratio.unwrap_or(params.ratio);
            params.n_informative = informative.unwrap_or(params.n_informative);
            params.n_noise = noise.unwrap_or(params.n_noise);
            let path = commands::cmd_synth(&cfg, &params, out.as_deref())?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
