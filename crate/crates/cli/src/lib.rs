//! Command-line plumbing: argument and configuration resolution,
//! checkpoints and the commands themselves.

pub mod checkpoint;
mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fslpn_core::{Error, ErrorCategory};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};
pub use commands::execute;
pub use config::RunConfig;

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "FSLPN_OUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    /// Process exit status; each error family has its own code.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e.category() {
                ErrorCategory::Parse => 3,
                ErrorCategory::Data => 4,
                ErrorCategory::Numeric => 5,
                ErrorCategory::Contract => 6,
                ErrorCategory::Io => 7,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fslpn", version, about = "Few-shot network anomaly detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub options: Options,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Fit the categorical encoding and feature selection on the training data.
    SelectFeatures,
    /// Contrastive pretraining of the extractor and head.
    Pretrain,
    /// Train the prototype classifier on a pretrained backbone checkpoint.
    Train,
    /// Score a trained checkpoint on test episodes.
    Evaluate,
    /// Train and evaluate the five ablation variants.
    Ablate,
    /// Train and evaluate once per value of one parameter.
    Sweep {
        /// conv_layers, out_dim, alpha or shots.
        #[arg(long)]
        parameter: String,
        /// Comma-separated values; defaults to the standard grid.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Classify single records with a trained checkpoint.
    Infer {
        /// One CSV record in the dataset's column layout.
        #[arg(long, conflicts_with = "input")]
        record: Option<String>,
        /// CSV file of records to classify.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SelectFeatures => "select-features",
            Command::Pretrain => "pretrain",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Ablate => "ablate",
            Command::Sweep { .. } => "sweep",
            Command::Infer { .. } => "infer",
        }
    }

    pub fn needs_checkpoint(&self) -> bool {
        matches!(self, Command::Train | Command::Evaluate | Command::Infer { .. })
    }

    /// Whether `--dataset` names the test split for this command.
    fn dataset_is_test(&self) -> bool {
        matches!(self, Command::Evaluate | Command::Infer { .. })
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// Configuration file (`key = value` with [data] [model] [train] [eval] sections).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Training data; the test data for evaluate and infer.
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    pub test_dataset: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["unsw_nb15", "nsl_kdd"])]
    pub schema: Option<String>,
    /// One seed or a comma-separated list.
    #[arg(long, global = true)]
    pub seed: Option<String>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true)]
    pub ways: Option<usize>,
    #[arg(long, global = true)]
    pub shots: Option<usize>,
    #[arg(long, global = true)]
    pub queries: Option<usize>,
    #[arg(long, global = true)]
    pub episodes: Option<usize>,
    #[arg(long, global = true)]
    pub eval_episodes: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub conv_layers: Option<usize>,
    #[arg(long, global = true)]
    pub out_dim: Option<usize>,
    #[arg(long, global = true, value_parser = ["nll", "infomax"])]
    pub stage2_loss: Option<String>,
    #[arg(long, global = true, value_parser = ["f32", "f64"])]
    pub precision: Option<String>,
}

impl Options {
    /// Flag values as configuration keys, in application order.
    pub fn overrides(&self, command: &Command) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut push = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let num = |v: Option<f64>| v.map(|v| v.to_string());
        let int = |v: Option<usize>| v.map(|v| v.to_string());
        let dataset_key = if command.dataset_is_test() { "data.test" } else { "data.train" };
        push(dataset_key, path(&self.dataset));
        push("data.test", path(&self.test_dataset));
        push("data.schema", self.schema.clone());
        push("train.seeds", self.seed.clone());
        push("out_dir", path(&self.out_dir));
        push("checkpoint", path(&self.checkpoint));
        push("train.alpha", num(self.alpha));
        push("train.tau", num(self.tau));
        push("train.beta", num(self.beta));
        push("train.ways", int(self.ways));
        push("train.shots", int(self.shots));
        push("train.queries", int(self.queries));
        push("train.episodes", int(self.episodes));
        push("eval.episodes", int(self.eval_episodes));
        push("train.learning_rate", num(self.lr));
        push("model.conv_layers", int(self.conv_layers));
        push("model.out_dim", int(self.out_dim));
        push("train.stage2_loss", self.stage2_loss.clone());
        push("train.precision", self.precision.clone());
        out
    }
}

/// Layers defaults, an optional echo (from a checkpoint), the config file,
/// the output-directory environment override and the flags, in that order.
pub fn resolve_config(
    options: &Options,
    command: &Command,
    echo: Option<&str>,
    env_out_dir: Option<&str>,
) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(echo) = echo {
        cfg.apply_text(echo, "checkpoint echo")?;
    }
    if let Some(path) = &options.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_text(&text, &path.display().to_string())?;
    }
    if let Some(dir) = env_out_dir.filter(|d| !d.is_empty()) {
        cfg.out_dir = PathBuf::from(dir);
    }
    for (key, value) in options.overrides(command) {
        cfg.set(key, &value, config::Origin { source: "command line", line: 0 })?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses nothing from the process; everything comes from `cli` and
/// `env_out_dir`. Returns the text to print on success.
pub fn run(cli: &Cli, env_out_dir: Option<&str>) -> Result<String, CliError> {
    let first = resolve_config(&cli.options, &cli.command, None, env_out_dir)?;
    let checkpoint = if cli.command.needs_checkpoint() {
        let path = first.checkpoint.clone().ok_or_else(|| {
            CliError::Usage(format!("{} requires --checkpoint (or checkpoint = ... in the config)", cli.command.name()))
        })?;
        Some(load_checkpoint(&path)?)
    } else {
        None
    };
    let cfg = match &checkpoint {
        Some(c) => resolve_config(&cli.options, &cli.command, Some(&c.echo), env_out_dir)?,
        None => first,
    };
    execute(&cli.command, &cfg, checkpoint)
}
