//! Layered run settings.
//!
//! Values resolve in precedence order: command-line flags beat the
//! config file, the config file beats the `TMN_SEED` environment
//! variable (seed only), and built-in defaults fill the rest. The
//! config file is flat `key=value` text; unknown keys are errors so a
//! typo cannot silently fall back to a default.

use std::path::{Path, PathBuf};

use tmn::config::{Architecture, TrainConfig, TrainMode};
use tmn::corpus::PrepareConfig;

use crate::failure::Failure;

#[derive(Clone)]
pub struct Settings {
    pub train: TrainConfig,
    pub mode: TrainMode,
    pub arch: Architecture,
    pub prepare: PrepareConfig,
    pub corpus: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Settings {
    fn defaults() -> Settings {
        Settings {
            train: TrainConfig::default(),
            mode: TrainMode::Joint,
            arch: Architecture::TopicMemory,
            prepare: PrepareConfig::default(),
            corpus: None,
            stopwords: None,
            embeddings: None,
            output_dir: None,
        }
    }

    /// Resolve environment and config-file layers. Command-line flags
    /// are applied afterwards by each command.
    pub fn load(config_path: Option<&Path>) -> Result<Settings, Failure> {
        let mut settings = Settings::defaults();
        if let Ok(value) = std::env::var("TMN_SEED") {
            let seed = value
                .trim()
                .parse::<u64>()
                .map_err(|_| Failure::input(format!("TMN_SEED is not a seed: {value:?}")))?;
            settings.set_seed(seed);
        }
        if let Some(path) = config_path {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::file(path, e))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    Failure::input(format!(
                        "{}: line {}: expected `key=value`",
                        path.display(),
                        lineno + 1
                    ))
                })?;
                settings.set(key.trim(), value.trim()).map_err(|reason| {
                    Failure::input(format!("{}: line {}: {}", path.display(), lineno + 1, reason))
                })?;
            }
        }
        Ok(settings)
    }

    /// One seed drives corpus splitting and training alike.
    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.prepare.seed = seed;
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "lambda" => self.train.lambda = num(key, value)?,
            "gamma" => self.train.gamma = num(key, value)?,
            "learning_rate" => self.train.learning_rate = num(key, value)?,
            "k" => self.train.k = num(key, value)?,
            "hops" => self.train.hops = num(key, value)?,
            "e" => self.train.e = num(key, value)?,
            "h_e" => self.train.h_e = num(key, value)?,
            "cnn_features" => self.train.cnn_features = num(key, value)?,
            "epochs" => self.train.epochs = num(key, value)?,
            "patience" => self.train.patience = num(key, value)?,
            "kl_warmup_epochs" => self.train.kl_warmup_epochs = num(key, value)?,
            "batch_size" => self.train.batch_size = num(key, value)?,
            "seed" => self.set_seed(num(key, value)?),
            "decoder_bias" => self.train.decoder_bias = flag(key, value)?,
            "filter_widths" => self.train.filter_widths = parse_widths(value)?,
            "mode" => self.mode = parse_mode(value)?,
            "arch" => self.arch = parse_arch(value)?,
            "min_count" => self.prepare.min_count = num(key, value)?,
            "lowercase" => self.prepare.lowercase = flag(key, value)?,
            "binary_bow" => self.prepare.binary_bow = flag(key, value)?,
            "l_max" => self.prepare.l_max = Some(num(key, value)?),
            "corpus" => self.corpus = Some(PathBuf::from(value)),
            "stopwords" => self.stopwords = Some(PathBuf::from(value)),
            "embeddings" => self.embeddings = Some(PathBuf::from(value)),
            "output_dir" => self.output_dir = Some(PathBuf::from(value)),
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("{key} cannot be {value:?}"))
}

fn flag(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(format!("{key} must be true or false, not {other:?}")),
    }
}

pub fn parse_widths(value: &str) -> Result<Vec<usize>, String> {
    value
        .split(',')
        .map(|part| {
            let part = part.trim();
            part.parse::<usize>()
                .map_err(|_| format!("filter width cannot be {part:?}"))
        })
        .collect()
}

pub fn parse_mode(value: &str) -> Result<TrainMode, String> {
    match value {
        "joint" => Ok(TrainMode::Joint),
        "separate" => Ok(TrainMode::Separate),
        other => Err(format!("mode must be joint or separate, not {other:?}")),
    }
}

pub fn parse_arch(value: &str) -> Result<Architecture, String> {
    match value {
        "topic_memory" => Ok(Architecture::TopicMemory),
        "theta_concat" => Ok(Architecture::ThetaConcat),
        other => Err(format!("arch must be topic_memory or theta_concat, not {other:?}")),
    }
}

/// Comma-separated positive integers for sweep grids.
pub fn parse_grid(flag: &str, value: &str) -> Result<Vec<usize>, Failure> {
    let items: Result<Vec<usize>, _> =
        value.split(',').map(|part| part.trim().parse::<usize>()).collect();
    match items {
        Ok(list) if !list.is_empty() => Ok(list),
        _ => Err(Failure::input(format!("--{flag} expects comma-separated counts, not {value:?}"))),
    }
}
