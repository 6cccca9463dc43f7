//! `policyscope`: batch pipeline for detecting and analyzing policy-related
//! political ads. Subcommands wire ingestion, label aggregation, training,
//! calibration, evaluation, prediction, and exposure analytics together
//! over plain files. Exit codes: 0 success, 1 usage error, 2 data error.

mod commands;
mod config;
mod error;
mod files;
mod translator;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use commands::analysis::AnalysisDimension;
use config::Config;
use error::CliError;
use policyscope_core::labeling::LabelMode;

#[derive(Parser)]
#[command(
    name = "policyscope",
    about = "Policy-ad classification and ad-library analytics pipeline",
    version
)]
struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatrixMode {
    Vm,
    Distrib,
}

impl From<MatrixMode> for LabelMode {
    fn from(mode: MatrixMode) -> LabelMode {
        match mode {
            MatrixMode::Vm => LabelMode::Binary,
            MatrixMode::Distrib => LabelMode::Soft,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Dimension {
    Candidate,
    Gender,
    Age,
    Region,
}

impl From<Dimension> for AnalysisDimension {
    fn from(d: Dimension) -> AnalysisDimension {
        match d {
            Dimension::Candidate => AnalysisDimension::Candidate,
            Dimension::Gender => AnalysisDimension::Gender,
            Dimension::Age => AnalysisDimension::Age,
            Dimension::Region => AnalysisDimension::Region,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse, language-filter, and dedupe the ad export into the store.
    Ingest,
    /// Summarize the advertiser daily report.
    Report,
    /// Aggregate annotation votes into a label matrix.
    Aggregate {
        #[arg(long, value_enum, default_value = "vm")]
        mode: MatrixMode,
        /// Overrides labeling.min_duration_seconds.
        #[arg(long)]
        min_duration: Option<u64>,
    },
    /// Build the stratified test split and the train/validation partition.
    Split {
        #[arg(long)]
        per_category: Option<usize>,
        #[arg(long)]
        min_support: Option<usize>,
        #[arg(long)]
        validation_fraction: Option<f64>,
        #[arg(long)]
        subset: Option<String>,
    },
    /// Train the multi-label classifier head.
    Train {
        #[arg(long, value_enum, default_value = "vm")]
        labels: MatrixMode,
        #[arg(long)]
        use_augmented: bool,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Overrides features.source ("tfidf" or "embedding").
        #[arg(long)]
        feature_source: Option<String>,
    },
    /// Calibrate per-category thresholds on the validation split.
    Calibrate {
        #[arg(long)]
        precision_target: Option<f64>,
        #[arg(long)]
        grid_step: Option<f64>,
    },
    /// Evaluate the model on the test split.
    Evaluate,
    /// Compare crowd labels against a gold label matrix.
    Agreement {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        complexity_threshold: Option<usize>,
    },
    /// Enlarge the training set by back-translation.
    Augment {
        /// Overrides augmentation.translator
        /// (mock:identity, mock:reverse, or an http(s) URL).
        #[arg(long)]
        translator: Option<String>,
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        pivot: Option<String>,
    },
    /// Predict labels for every ad in the store.
    Predict,
    /// Tabulate attention/exposure along a dimension.
    Analyze {
        #[arg(long, value_enum)]
        dimension: Dimension,
    },
}

fn run() -> Result<(), CliError> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    return Ok(());
                }
                _ => {
                    return Err(CliError::usage(e.to_string()));
                }
            }
        }
    };

    let config_path = cli
        .config
        .ok_or_else(|| CliError::usage("--config <path> is required"))?;
    let mut config = Config::load(&config_path, cli.seed, cli.out.as_deref())?;

    match cli.command {
        Command::Ingest => commands::data::cmd_ingest(&config),
        Command::Report => commands::data::cmd_report(&config),
        Command::Aggregate { mode, min_duration } => {
            if let Some(d) = min_duration {
                config.labeling.min_duration_seconds = d;
            }
            commands::data::cmd_aggregate(&config, mode.into())
        }
        Command::Split {
            per_category,
            min_support,
            validation_fraction,
            subset,
        } => {
            if let Some(v) = per_category {
                config.labeling.per_category = v;
            }
            if let Some(v) = min_support {
                config.labeling.min_support = v;
            }
            if let Some(v) = validation_fraction {
                config.labeling.validation_fraction = v;
            }
            if let Some(v) = subset {
                config.labeling.subset = v;
            }
            commands::data::cmd_split(&config)
        }
        Command::Train {
            labels,
            use_augmented,
            epochs,
            learning_rate,
            batch_size,
            feature_source,
        } => {
            if use_augmented {
                config.train.use_augmented = true;
            }
            if let Some(v) = epochs {
                config.train.epochs = v;
            }
            if let Some(v) = learning_rate {
                config.train.learning_rate = Some(v);
            }
            if let Some(v) = batch_size {
                config.train.batch_size = v;
            }
            if let Some(v) = feature_source {
                if !matches!(v.as_str(), "tfidf" | "embedding") {
                    return Err(CliError::usage(format!(
                        "feature source {v:?} must be \"tfidf\" or \"embedding\""
                    )));
                }
                config.features.source = v;
            }
            commands::modeling::cmd_train(&config, labels.into())
        }
        Command::Calibrate {
            precision_target,
            grid_step,
        } => {
            if let Some(v) = precision_target {
                config.calibration.precision_target = v;
            }
            if let Some(v) = grid_step {
                config.calibration.grid_step = v;
            }
            commands::modeling::cmd_calibrate(&config)
        }
        Command::Evaluate => commands::modeling::cmd_evaluate(&config),
        Command::Agreement {
            gold,
            complexity_threshold,
        } => {
            if let Some(v) = complexity_threshold {
                config.labeling.complexity_threshold = v;
            }
            commands::analysis::cmd_agreement(&config, &gold)
        }
        Command::Augment {
            translator,
            fraction,
            pivot,
        } => {
            if let Some(v) = translator {
                config.augmentation.translator = v;
            }
            if let Some(v) = fraction {
                if !(0.0..=1.0).contains(&v) {
                    return Err(CliError::usage("fraction must be in [0,1]"));
                }
                config.augmentation.fraction = v;
            }
            if let Some(v) = pivot {
                config.augmentation.pivot_language = v;
            }
            commands::data::cmd_augment(&config)
        }
        Command::Predict => commands::modeling::cmd_predict(&config),
        Command::Analyze { dimension } => {
            commands::analysis::cmd_analyze(&config, dimension.into())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
