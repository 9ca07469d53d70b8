//! The `share` command line.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data::{
    parse_event_log, preprocess, read_dataset, read_event_log_file, read_vocabulary,
    write_dataset, Dataset,
};
use crate::error::{ConfigError, DataError, EvalError, ModelError, TrainError};
use crate::eval::evaluate;
use crate::model::predict_topk;
use crate::synthetic::{generate, to_event_log, GrammarConfig, GrammarRule};
use crate::training::{train, TrainOptions, TrainOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Data(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::InvalidConfig(_) | DataError::UnknownFormat(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidConfig(_) | ModelError::WindowTooSmall(_) => {
                CliError::Usage(e.to_string())
            }
            ModelError::Checkpoint(_) | ModelError::Io { .. } | ModelError::ItemOutOfRange { .. } => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(m) => m.into(),
            TrainError::Data(d) => d.into(),
            TrainError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            TrainError::EmptySet(_) => CliError::Data(e.to_string()),
            TrainError::NonFiniteGradient { .. } | TrainError::Diverged { .. } => {
                CliError::Numerical(e.to_string())
            }
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::EmptyTestSet => CliError::Data(e.to_string()),
            EvalError::InvalidCutoff(_) => CliError::Usage(e.to_string()),
            EvalError::Model(m) => m.into(),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("i/o error on {}: {e}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_error(path, e))
}

#[derive(Debug, Parser)]
#[command(name = "share", version, about = "Session-based recommendation with hypergraph attention networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags mirroring the config file keys.
#[derive(Debug, Args, Default, Clone)]
pub struct ConfigArgs {
    /// Flat `key = value` config file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub min_session_length: Option<String>,
    #[arg(long)]
    pub min_item_support: Option<String>,
    #[arg(long)]
    pub test_window: Option<String>,
    #[arg(long)]
    pub recent_fraction: Option<String>,
    #[arg(long)]
    pub validation_ratio: Option<String>,
    #[arg(long)]
    pub max_malformed_fraction: Option<String>,
    #[arg(long)]
    pub embed_dim: Option<String>,
    #[arg(long)]
    pub num_layers: Option<String>,
    #[arg(long)]
    pub max_window: Option<String>,
    #[arg(long)]
    pub dropout: Option<String>,
    #[arg(long)]
    pub l2: Option<String>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub max_epochs: Option<String>,
    #[arg(long)]
    pub patience: Option<String>,
    #[arg(long)]
    pub early_stop: Option<String>,
    #[arg(long)]
    pub adam_beta1: Option<String>,
    #[arg(long)]
    pub adam_beta2: Option<String>,
    #[arg(long)]
    pub adam_epsilon: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let pairs: [(&'static str, &Option<String>); 22] = [
            ("format", &self.format),
            ("min_session_length", &self.min_session_length),
            ("min_item_support", &self.min_item_support),
            ("test_window", &self.test_window),
            ("recent_fraction", &self.recent_fraction),
            ("validation_ratio", &self.validation_ratio),
            ("max_malformed_fraction", &self.max_malformed_fraction),
            ("embed_dim", &self.embed_dim),
            ("num_layers", &self.num_layers),
            ("max_window", &self.max_window),
            ("dropout", &self.dropout),
            ("l2", &self.l2),
            ("variant", &self.variant),
            ("learning_rate", &self.learning_rate),
            ("batch_size", &self.batch_size),
            ("max_epochs", &self.max_epochs),
            ("patience", &self.patience),
            ("early_stop", &self.early_stop),
            ("adam_beta1", &self.adam_beta1),
            ("adam_beta2", &self.adam_beta2),
            ("adam_epsilon", &self.adam_epsilon),
            ("seed", &self.seed),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.clone().map(|v| (k, v)))
            .collect()
    }

    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        Ok(RunConfig::resolve(self.config.as_deref(), &self.overrides())?)
    }
}

#[derive(Debug, Args, Clone)]
pub struct GrammarArgs {
    /// Pair rule of the synthetic grammar.
    #[arg(long, default_value = "dominant")]
    pub rule: String,
    #[arg(long, default_value_t = 50)]
    pub items: usize,
    #[arg(long, default_value_t = 5000)]
    pub sessions: usize,
    #[arg(long, default_value_t = 4)]
    pub min_len: usize,
    #[arg(long, default_value_t = 8)]
    pub max_len: usize,
    #[arg(long, default_value_t = 7)]
    pub grammar_seed: u64,
}

impl GrammarArgs {
    fn config(&self) -> Result<GrammarConfig, CliError> {
        Ok(GrammarConfig {
            rule: self.rule.parse::<GrammarRule>()?,
            num_items: self.items,
            num_sessions: self.sessions,
            min_len: self.min_len,
            max_len: self.max_len,
            seed: self.grammar_seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepAxis {
    /// Maximum window size 2..=6 with one layer.
    Window,
    /// Layers 1..=4 with maximum window 2.
    Layers,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn a raw click log into a dataset directory.
    Preprocess {
        /// Event log (plain or .gz).
        #[arg(long, required_unless_present = "synthetic")]
        input: Option<PathBuf>,
        /// Use the built-in grammar corpus instead of `--input`.
        #[arg(long, conflicts_with = "input")]
        synthetic: bool,
        #[command(flatten)]
        grammar: GrammarArgs,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Write the synthetic grammar corpus as a csv-iso event log.
    Synthetic {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        grammar: GrammarArgs,
    },
    /// Train a model on a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score a checkpoint on one split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
        /// Comma-separated cutoffs.
        #[arg(long, value_delimiter = ',', default_value = "10,20")]
        k: Vec<usize>,
        /// Directory for the report files (defaults to the checkpoint's).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the top-K items for a session.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 20)]
        k: usize,
        /// Item keys in click order.
        #[arg(required = true)]
        items: Vec<String>,
    },
    /// Train one model per setting along an axis and tabulate validation metrics.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

/// Parses `args` (program name first) and runs the command, returning the
/// exit code. Output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn emit(out: &mut dyn std::io::Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Data(format!("cannot write output: {e}")))
}

pub fn execute(command: Command, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    match command {
        Command::Preprocess {
            input,
            synthetic,
            grammar,
            out: dir,
            cfg,
        } => {
            let run = cfg.resolve()?;
            let dataset = cmd_preprocess(input.as_deref(), synthetic.then_some(&grammar), &run)?;
            write_dataset(&dir, &dataset)?;
            write_file(&dir.join("config.txt"), &run.to_text())?;
            emit(out, &dataset.stats.summary_table())
        }
        Command::Synthetic { out: path, grammar } => {
            let corpus = generate(&grammar.config()?)?;
            write_file(&path, &to_event_log(&corpus))
        }
        Command::Train { data, out: dir, cfg } => {
            let run = cfg.resolve()?;
            let outcome = cmd_train(&data, &dir, &run)?;
            let best = outcome.report.best().expect("best epoch recorded");
            emit(
                out,
                &format!(
                    "best epoch {} of {} ({}): {} = {}\n",
                    outcome.report.best_epoch,
                    outcome.report.epochs.len(),
                    outcome.report.stop_reason,
                    outcome.report.metric,
                    best.metric
                ),
            )
        }
        Command::Evaluate {
            checkpoint,
            data,
            split,
            k,
            out: report_dir,
        } => {
            let text = cmd_evaluate(&checkpoint, &data, split, &k, report_dir.as_deref())?;
            emit(out, &text)
        }
        Command::Predict { checkpoint, k, items } => {
            let ck = Checkpoint::load(&checkpoint)?;
            emit(out, &cmd_predict(&ck, &items, k)?)
        }
        Command::Sweep {
            data,
            axis,
            out: dir,
            cfg,
        } => {
            let run = cfg.resolve()?;
            emit(out, &cmd_sweep(&data, axis, &dir, &run)?)
        }
    }
}

pub fn cmd_preprocess(
    input: Option<&Path>,
    synthetic: Option<&GrammarArgs>,
    run: &RunConfig,
) -> Result<Dataset, CliError> {
    let parsed = match (synthetic, input) {
        (Some(g), _) => {
            let log = to_event_log(&generate(&g.config()?)?);
            parse_event_log(log.as_bytes(), &crate::data::LogFormat::csv_iso(), 0.0)?
        }
        (None, Some(path)) => {
            read_event_log_file(path, &run.format, run.preprocess.max_malformed_fraction)?
        }
        (None, None) => return Err(CliError::Usage("either --input or --synthetic is required".into())),
    };
    if !parsed.malformed_rows.is_empty() {
        log::warn!(
            "skipped {} malformed rows of {}",
            parsed.malformed_rows.len(),
            parsed.total_rows
        );
    }
    Ok(preprocess(&parsed.events, &run.preprocess)?)
}

/// Trains on `data`, writing checkpoints, `train.log`, `config.txt` and
/// `report.txt` under `dir`. On failure the partial report is still written.
pub fn cmd_train(data: &Path, dir: &Path, run: &RunConfig) -> Result<TrainOutcome, CliError> {
    let dataset = read_dataset(data)?;
    create_dir(dir)?;
    write_file(&dir.join("config.txt"), &run.to_text())?;
    let options = TrainOptions {
        checkpoint_dir: Some(dir.to_path_buf()),
        initial: None,
    };
    match train(&dataset.split, &dataset.vocabulary, &run.model, &run.train, options) {
        Ok(outcome) => {
            write_file(
                &dir.join("report.txt"),
                &format!(
                    "best_epoch\t{}\nepochs\t{}\nstop\t{}\nmetric\t{}\n",
                    outcome.report.best_epoch,
                    outcome.report.epochs.len(),
                    outcome.report.stop_reason,
                    outcome.report.metric
                ),
            )?;
            Ok(outcome)
        }
        Err(failure) => {
            let note = format!(
                "best_epoch\t{}\nepochs\t{}\nstop\t{}\nmetric\t{}\nerror\t{}\n",
                failure.report.best_epoch,
                failure.report.epochs.len(),
                failure.report.stop_reason,
                failure.report.metric,
                failure.error
            );
            write_file(&dir.join("report.txt"), &note)?;
            Err(failure.error.into())
        }
    }
}

pub fn cmd_evaluate(
    checkpoint: &Path,
    data: &Path,
    split: SplitName,
    ks: &[usize],
    report_dir: Option<&Path>,
) -> Result<String, CliError> {
    let ck = Checkpoint::load(checkpoint)?;
    let vocab = read_vocabulary(data)?;
    if vocab.hash() != ck.vocabulary.hash() {
        return Err(CliError::Data(format!(
            "vocabulary of {} does not match the checkpoint",
            data.display()
        )));
    }
    let dataset = read_dataset(data)?;
    let (name, samples) = match split {
        SplitName::Train => ("train", &dataset.split.train),
        SplitName::Validation => ("validation", &dataset.split.validation),
        SplitName::Test => ("test", &dataset.split.test),
    };
    let report = evaluate(&ck.params, ck.config.max_window, samples, ks)?;
    let lines = report.to_lines();
    let dir = report_dir
        .map(Path::to_path_buf)
        .or_else(|| checkpoint.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    create_dir(&dir)?;
    write_file(&dir.join(format!("metrics-{name}.tsv")), &lines)?;
    write_file(&dir.join(format!("breakdown-{name}.txt")), &report.to_table())?;
    Ok(lines)
}

pub fn cmd_predict(ck: &Checkpoint, items: &[String], k: usize) -> Result<String, CliError> {
    let prefix = ck.vocabulary.encode(items)?;
    let top = predict_topk(&ck.params, &prefix, ck.config.max_window, k)?;
    let mut text = String::new();
    for (rank, (item, score)) in top.iter().enumerate() {
        let key = ck.vocabulary.key(*item).unwrap_or("?");
        let _ = writeln!(text, "{}\t{}\t{}", rank + 1, key, score);
    }
    Ok(text)
}

pub fn sweep_settings(axis: SweepAxis) -> Vec<(String, usize, usize)> {
    match axis {
        SweepAxis::Window => (2..=6).map(|w| (format!("W={w}"), 1, w)).collect(),
        SweepAxis::Layers => (1..=4).map(|l| (format!("L={l}"), l, 2)).collect(),
    }
}

/// One training run per setting, sequential and with the shared seed. A
/// failed run leaves a `failed` row and the sweep moves on.
pub fn cmd_sweep(data: &Path, axis: SweepAxis, dir: &Path, run: &RunConfig) -> Result<String, CliError> {
    let dataset = read_dataset(data)?;
    create_dir(dir)?;
    let mut table = String::from("setting\tlayers\twindow\thit@20\tmrr@20\tbest_epoch\n");
    for (label, layers, window) in sweep_settings(axis) {
        let mut cfg = run.clone();
        cfg.model.num_layers = layers;
        cfg.model.max_window = window;
        let sub = dir.join(label.replace('=', "-"));
        let result = create_dir(&sub).and_then(|_| {
            let options = TrainOptions {
                checkpoint_dir: Some(sub.clone()),
                initial: None,
            };
            train(&dataset.split, &dataset.vocabulary, &cfg.model, &cfg.train, options)
                .map_err(|f| CliError::from(f.error))
        });
        match result {
            Ok(outcome) => {
                let best = outcome.report.best().expect("best epoch recorded");
                let _ = writeln!(
                    table,
                    "{label}\t{layers}\t{window}\t{}\t{}\t{}",
                    best.validation_hit20, best.validation_mrr20, outcome.report.best_epoch
                );
            }
            Err(e) => {
                log::error!("sweep setting {label} failed: {e}");
                let _ = writeln!(table, "{label}\t{layers}\t{window}\tfailed\tfailed\t-");
            }
        }
    }
    write_file(&dir.join("sweep.tsv"), &table)?;
    Ok(table)
}
