//! `earlysurv` command-line tool.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use earlysurv::gradcheck::GradcheckOptions;
use earlysurv::ModelKind;

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] earlysurv::Error),
    #[error("gradient check failed")]
    GradcheckFailed,
}

impl CliError {
    /// 1 usage or configuration, 2 data, 3 numerical failure.
    fn exit_code(&self) -> u8 {
        use earlysurv::Error as E;
        match self {
            CliError::Usage(_) | CliError::Lib(E::Config(_) | E::Argument(_)) => 1,
            CliError::GradcheckFailed => 3,
            CliError::Lib(e) if e.is_numerical() => 3,
            CliError::Lib(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "earlysurv", version, about = "Recurrent survival models for early fraud detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long, short = 'c')]
    config: Option<PathBuf>,
    #[arg(long, short = 'o')]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainFlags {
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    hidden_size: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Sets both the initialization and the shuffle seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    split_seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset as JSON Lines.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Dataset path; defaults to dataset.jsonl in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        fraud_fraction: Option<f64>,
        #[arg(long)]
        n_users: Option<usize>,
    },
    /// Split a dataset, train, select a threshold and write a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint path; defaults to checkpoint.json in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Metrics at k = 1..5 and the early-detection report.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Evaluate every record rather than the checkpoint's test split.
        #[arg(long)]
        all: bool,
    },
    /// Per-user survival curves and flag times.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Compare analytic gradients with finite differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Instances per model suite.
        #[arg(long, default_value_t = 10)]
        cases: usize,
        #[arg(long, hide = true)]
        corrupt: bool,
    },
    /// Train and evaluate several configurations over several seeds.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Comma-separated model kinds, each with the configured training settings.
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<ModelKind>>,
        #[arg(long)]
        split_seed: Option<u64>,
        /// Maximum number of training cells in flight.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn base(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(d) = &common.output_dir {
        cfg.paths.output_dir = Some(d.clone());
    }
    Ok(cfg)
}

fn set<T: Clone>(slot: &mut T, value: &Option<T>) {
    if let Some(v) = value {
        *slot = v.clone();
    }
}

fn apply_train_flags(cfg: &mut RunConfig, f: &TrainFlags) {
    let t = &mut cfg.train;
    set(&mut t.model, &f.model);
    set(&mut t.hidden_size, &f.hidden_size);
    set(&mut t.batch_size, &f.batch_size);
    set(&mut t.learning_rate, &f.learning_rate);
    set(&mut t.epochs, &f.epochs);
    set(&mut t.patience, &f.patience);
    set(&mut t.init_seed, &f.seed);
    set(&mut t.shuffle_seed, &f.seed);
    set(&mut cfg.seeds.split, &f.split_seed);
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate {
            common,
            out,
            seed,
            fraud_fraction,
            n_users,
        } => {
            let mut cfg = base(&common)?;
            if out.is_some() {
                cfg.paths.dataset = out;
            }
            set(&mut cfg.seeds.data, &seed);
            set(&mut cfg.generator.fraud_fraction, &fraud_fraction);
            set(&mut cfg.generator.n_users, &n_users);
            cfg.generator.validate()?;
            commands::generate(&cfg)
        }
        Command::Train {
            common,
            data,
            checkpoint,
            train,
        } => {
            let mut cfg = base(&common)?;
            set_path(&mut cfg.paths.dataset, data);
            set_path(&mut cfg.paths.checkpoint, checkpoint);
            apply_train_flags(&mut cfg, &train);
            commands::train(&cfg)
        }
        Command::Evaluate {
            common,
            checkpoint,
            data,
            threshold,
            all,
        } => {
            let mut cfg = base(&common)?;
            set_path(&mut cfg.paths.dataset, data);
            set_path(&mut cfg.paths.checkpoint, checkpoint);
            if threshold.is_some() {
                cfg.eval.threshold = threshold;
            }
            cfg.eval.all_records |= all;
            commands::evaluate(&cfg)
        }
        Command::Predict {
            common,
            checkpoint,
            data,
            threshold,
        } => {
            let mut cfg = base(&common)?;
            set_path(&mut cfg.paths.dataset, data);
            set_path(&mut cfg.paths.checkpoint, checkpoint);
            if threshold.is_some() {
                cfg.eval.threshold = threshold;
            }
            commands::predict(&cfg)
        }
        Command::Gradcheck {
            common,
            seed,
            cases,
            corrupt,
        } => {
            let cfg = base(&common)?;
            let opts = GradcheckOptions {
                seed,
                model_cases: cases,
                corrupt,
                ..Default::default()
            };
            if commands::gradcheck(&cfg, &opts)? {
                Ok(())
            } else {
                Err(CliError::GradcheckFailed)
            }
        }
        Command::Compare {
            common,
            data,
            seeds,
            models,
            split_seed,
            jobs,
        } => {
            let mut cfg = base(&common)?;
            set_path(&mut cfg.paths.dataset, data);
            set(&mut cfg.compare.seeds, &seeds);
            set(&mut cfg.seeds.split, &split_seed);
            if let Some(models) = models {
                cfg.compare.configs = models
                    .into_iter()
                    .map(|model| {
                        earlysurv::compare::NamedConfig::from_config(earlysurv::train::TrainConfig {
                            model,
                            ..cfg.train.clone()
                        })
                    })
                    .collect();
            }
            if jobs == Some(0) {
                return Err(CliError::Usage("--jobs must be positive".into()));
            }
            commands::compare(&cfg, jobs)
        }
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: Option<PathBuf>) {
    if value.is_some() {
        *slot = value;
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
