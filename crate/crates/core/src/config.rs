//! Run configuration: a flat `key = value` file whose keys map one-to-one
//! onto command-line flags. Flags override the file, the file overrides
//! the defaults.

use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::data::{format_duration_ms, parse_duration_ms, Fraction, LogFormat, PreprocessConfig};
use crate::error::ConfigError;
use crate::model::{ModelConfig, Variant};
use crate::training::{EarlyStopMetric, TrainConfig};

/// Every recognised key, in dump order.
pub const KEYS: &[&str] = &[
    "format",
    "min_session_length",
    "min_item_support",
    "test_window",
    "recent_fraction",
    "validation_ratio",
    "max_malformed_fraction",
    "embed_dim",
    "num_layers",
    "max_window",
    "dropout",
    "l2",
    "variant",
    "learning_rate",
    "batch_size",
    "max_epochs",
    "patience",
    "early_stop",
    "adam_beta1",
    "adam_beta2",
    "adam_epsilon",
    "seed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub format: LogFormat,
    pub preprocess: PreprocessConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            format: LogFormat::csv_iso(),
            preprocess: PreprocessConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

fn parse<T>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T: FromStr,
    T::Err: Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let key = key.trim().replace('-', "_");
        let k = key.as_str();
        match k {
            "format" => self.format = parse(k, value)?,
            "min_session_length" => self.preprocess.min_session_length = parse(k, value)?,
            "min_item_support" => self.preprocess.min_item_support = parse(k, value)?,
            "test_window" => {
                self.preprocess.test_window_ms =
                    parse_duration_ms(value).map_err(|e| ConfigError::InvalidValue {
                        key: key.clone(),
                        value: value.to_string(),
                        reason: e.to_string(),
                    })?
            }
            "recent_fraction" => self.preprocess.recent_fraction = parse::<Fraction>(k, value)?,
            "validation_ratio" => self.preprocess.validation_ratio = parse(k, value)?,
            "max_malformed_fraction" => self.preprocess.max_malformed_fraction = parse(k, value)?,
            "embed_dim" => self.model.embed_dim = parse(k, value)?,
            "num_layers" => self.model.num_layers = parse(k, value)?,
            "max_window" => self.model.max_window = parse(k, value)?,
            "dropout" => self.model.dropout_rate = parse(k, value)?,
            "l2" => self.model.l2_coefficient = parse(k, value)?,
            "variant" => self.model.variant = parse::<Variant>(k, value)?,
            "learning_rate" => self.train.learning_rate = parse(k, value)?,
            "batch_size" => self.train.batch_size = parse(k, value)?,
            "max_epochs" => self.train.max_epochs = parse(k, value)?,
            "patience" => self.train.patience = parse(k, value)?,
            "early_stop" => self.train.early_stop_metric = parse::<EarlyStopMetric>(k, value)?,
            "adam_beta1" => self.train.adam_beta1 = parse(k, value)?,
            "adam_beta2" => self.train.adam_beta2 = parse(k, value)?,
            "adam_epsilon" => self.train.adam_epsilon = parse(k, value)?,
            "seed" => {
                let seed: u64 = parse(k, value)?;
                self.preprocess.rng_seed = seed;
                self.model.rng_seed = seed;
                self.train.rng_seed = seed;
            }
            _ => return Err(ConfigError::UnknownKey(key)),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let v = match key {
            "format" => self.format.to_string(),
            "min_session_length" => self.preprocess.min_session_length.to_string(),
            "min_item_support" => self.preprocess.min_item_support.to_string(),
            "test_window" => format_duration_ms(self.preprocess.test_window_ms),
            "recent_fraction" => self.preprocess.recent_fraction.to_string(),
            "validation_ratio" => self.preprocess.validation_ratio.to_string(),
            "max_malformed_fraction" => self.preprocess.max_malformed_fraction.to_string(),
            "embed_dim" => self.model.embed_dim.to_string(),
            "num_layers" => self.model.num_layers.to_string(),
            "max_window" => self.model.max_window.to_string(),
            "dropout" => self.model.dropout_rate.to_string(),
            "l2" => self.model.l2_coefficient.to_string(),
            "variant" => self.model.variant.to_string(),
            "learning_rate" => self.train.learning_rate.to_string(),
            "batch_size" => self.train.batch_size.to_string(),
            "max_epochs" => self.train.max_epochs.to_string(),
            "patience" => self.train.patience.to_string(),
            "early_stop" => self.train.early_stop_metric.to_string(),
            "adam_beta1" => self.train.adam_beta1.to_string(),
            "adam_beta2" => self.train.adam_beta2.to_string(),
            "adam_epsilon" => self.train.adam_epsilon.to_string(),
            "seed" => self.train.rng_seed.to_string(),
            _ => return None,
        };
        Some(v)
    }

    /// Applies a config file's settings. Blank lines and `#` comments are
    /// skipped; a key may appear once.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<(), ConfigError> {
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = |reason: String| ConfigError::Syntax {
                path: path.to_path_buf(),
                line: i + 1,
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| syntax("expected `key = value`".into()))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(syntax(format!("duplicate key `{key}`")));
            }
            self.set(key, value).map_err(|e| syntax(e.to_string()))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.apply_text(&text, path)
    }

    /// Defaults, then `file`, then `overrides` in order.
    pub fn resolve(file: Option<&Path>, overrides: &[(&str, String)]) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            cfg.apply_file(path)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// Effective configuration in the same format the parser reads.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).unwrap_or_default()))
            .collect()
    }
}
