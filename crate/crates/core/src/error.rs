use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the data pipeline (ingestion, filtering, dataset files).
#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("unreadable event stream: {0}")]
    Unreadable(#[source] io::Error),
    #[error("{malformed} of {total} rows malformed (limit {limit:.4}); first bad rows: {rows:?}")]
    TooManyMalformed {
        malformed: usize,
        total: usize,
        limit: f64,
        rows: Vec<usize>,
    },
    #[error("unknown log format descriptor `{0}`")]
    UnknownFormat(String),
    #[error("invalid preprocessing config: {0}")]
    InvalidConfig(String),
    #[error("empty corpus after filtering")]
    EmptyCorpus,
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("session of length {0} cannot be expanded (need at least 2 items)")]
    SessionTooShort(usize),
    #[error("malformed dataset file {path} line {line}: {reason}")]
    BadDatasetLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("unknown item key `{0}`")]
    UnknownItem(String),
}

/// Errors from model construction, forward/backward passes and checkpoints.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot normalize an empty score list")]
    EmptyScores,
    #[error("empty item sequence")]
    EmptySequence,
    #[error("window size {0} is below the minimum of 2")]
    WindowTooSmall(usize),
    #[error("item index {index} out of range for {num_items} items")]
    ItemOutOfRange { index: usize, num_items: usize },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("trace does not match the parameters it is applied to: {0}")]
    StaleTrace(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Errors raised while training.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite gradient in {tensor} at step {step}")]
    NonFiniteGradient { tensor: String, step: u64 },
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("empty {0} set")]
    EmptySet(&'static str),
}

/// Errors raised by evaluation.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty test set")]
    EmptyTestSet,
    #[error("invalid cutoff K = {0}")]
    InvalidCutoff(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Errors in run configuration files and overrides.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path} line {line}: {reason}")]
    Syntax {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
}
