use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use covert_decode::Error;

mod commands;

/// Overt-to-covert speech EEG decoding pipeline.
#[derive(Debug, Parser)]
#[command(name = "covert-decode", version)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    /// Run seed; takes precedence over the `seed` configuration key.
    #[arg(long, env = "COVERT_DECODE_SEED", global = true)]
    seed: Option<u64>,

    /// Worker thread cap.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a paired overt/covert synthetic subject.
    Synth {
        /// Flat `key = value` generator settings.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write continuous recordings with markers and line noise.
        #[arg(long)]
        recordings: bool,
    },
    /// Filter, clean and epoch a raw recording.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        condition: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract envelope and fine-structure features from epochs.
    Features {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate and train models on a feature file.
    Train {
        #[arg(long)]
        features: PathBuf,
        /// lstm, gru, bilstm or bigru; repeat to compare families.
        #[arg(long = "model")]
        models: Vec<String>,
        /// Number of CV folds; 0 skips cross-validation.
        #[arg(long)]
        cv: Option<usize>,
        #[arg(long)]
        subject: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Where to save the hold-out model of the first family.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score a saved model on a feature file.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Freeze a trained model and fine-tune its head on covert budgets.
    Transfer {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        covert: PathBuf,
        /// Comma-separated budget fractions.
        #[arg(long)]
        budgets: Option<String>,
        /// Number of fine-tuning seeds.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render CSV tables and plot data from a stored report.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Feature files whose class-mean envelopes are exported.
        #[arg(long = "features")]
        features: Vec<PathBuf>,
    },
    /// Check artifacts: format, content hashes and provenance sidecars.
    Validate {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let core = err.chain().find_map(|e| e.downcast_ref::<Error>());
    match core {
        Some(Error::Config(_) | Error::InvalidDesign(_) | Error::InvalidArgument(_)) => 2,
        Some(Error::NumericFailure(_)) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("warning: could not size the worker pool: {e}");
        }
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
