//! Flat `key = value` configuration with command-line overrides.

use std::collections::BTreeMap;
use std::fmt;

use wsner_core::corpus::Scheme;
use wsner_core::pipeline::TrainConfig;

#[derive(Debug)]
pub enum ConfigError {
    MalformedLine { line: usize, content: String },
    UnknownKeys(Vec<String>),
    DuplicateKey { line: usize, key: String },
    BadValue { key: String, value: String, expected: &'static str },
    MissingKeys(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::MalformedLine { line, content } => {
                write!(f, "config line {line}: expected `key = value`, got {content:?}")
            }
            ConfigError::UnknownKeys(keys) => {
                write!(f, "unknown config keys: {}", keys.join(", "))
            }
            ConfigError::DuplicateKey { line, key } => {
                write!(f, "config line {line}: duplicate key `{key}`")
            }
            ConfigError::BadValue { key, value, expected } => {
                write!(f, "config key `{key}`: expected {expected}, got {value:?}")
            }
            ConfigError::MissingKeys(keys) => {
                write!(f, "missing config keys: {}", keys.join(", "))
            }
        }
    }
}

impl std::error::Error for ConfigError {}

/// Every key the configuration file may contain.
const KNOWN_KEYS: &[&str] = &[
    // file paths
    "raw",
    "dictionary",
    "phrases",
    "gold",
    "distant",
    "dev",
    "model",
    "input",
    "output",
    "predictions",
    "embeddings",
    "trace",
    // label inventory
    "entity_types",
    // training hyperparameters
    "learning_rate",
    "max_epochs",
    "patience",
    "rl_epochs",
    "rl_inner_epochs",
    "rl_warm_start",
    "rl_learning_rate",
    "policy_hidden1",
    "policy_hidden2",
    "word_dim",
    "char_dim",
    "char_hidden",
    "word_hidden",
    "grad_clip",
    "input_dropout",
    // run controls (also settable by flags, flags win)
    "seed",
    "scheme",
    "mode",
    "char_only",
    "case_fold",
];

/// Parsed configuration: raw key-value map plus typed accessors.
#[derive(Debug, Clone, Default)]
pub struct CliConfig {
    values: BTreeMap<String, String>,
}

impl CliConfig {
    /// Parses flat `key = value` text. Blank lines and `#` comments are
    /// ignored; unknown and duplicate keys are errors.
    pub fn parse(text: &str) -> Result<CliConfig, ConfigError> {
        let mut values = BTreeMap::new();
        let mut unknown = Vec::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::MalformedLine {
                line: i + 1,
                content: raw_line.to_string(),
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                unknown.push(key);
                continue;
            }
            if values.insert(key.clone(), value).is_some() {
                return Err(ConfigError::DuplicateKey { line: i + 1, key });
            }
        }
        if !unknown.is_empty() {
            return Err(ConfigError::UnknownKeys(unknown));
        }
        Ok(CliConfig { values })
    }

    /// Applies a command-line override (flags beat file values).
    pub fn set(&mut self, key: &str, value: String) {
        debug_assert!(KNOWN_KEYS.contains(&key));
        self.values.insert(key.to_string(), value);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    /// All of `keys` must be present; every missing one is reported.
    pub fn require(&self, keys: &[&str]) -> Result<Vec<&str>, ConfigError> {
        let missing: Vec<String> = keys
            .iter()
            .filter(|k| !self.values.contains_key(**k))
            .map(|k| k.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(ConfigError::MissingKeys(missing));
        }
        Ok(keys.iter().map(|k| self.values[*k].as_str()).collect())
    }

    fn typed<T: std::str::FromStr>(
        &self,
        key: &str,
        expected: &'static str,
        default: T,
    ) -> Result<T, ConfigError> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError::BadValue {
                key: key.to_string(),
                value: v.clone(),
                expected,
            }),
        }
    }

    pub fn scheme(&self) -> Result<Scheme, ConfigError> {
        match self.get("scheme") {
            None | Some("bioes") => Ok(Scheme::Bioes),
            Some("bio") => Ok(Scheme::Bio),
            Some(v) => Err(ConfigError::BadValue {
                key: "scheme".into(),
                value: v.into(),
                expected: "bio or bioes",
            }),
        }
    }

    pub fn phrase_mode(&self) -> Result<bool, ConfigError> {
        match self.get("mode") {
            None | Some("default") => Ok(false),
            Some("phrase") => Ok(true),
            Some(v) => Err(ConfigError::BadValue {
                key: "mode".into(),
                value: v.into(),
                expected: "default or phrase",
            }),
        }
    }

    pub fn case_fold(&self) -> Result<bool, ConfigError> {
        self.typed("case_fold", "true or false", true)
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.typed("seed", "an unsigned integer", 1)
    }

    /// Comma-separated entity types, e.g. `PER,LOC,ORG`.
    pub fn entity_types(&self) -> Option<Vec<String>> {
        self.get("entity_types").map(|v| {
            v.split(',')
                .map(|t| t.trim().to_string())
                .filter(|t| !t.is_empty())
                .collect()
        })
    }

    /// Full training configuration with file/flag overrides applied.
    pub fn train_config(&self) -> Result<TrainConfig, ConfigError> {
        let d = TrainConfig::default();
        Ok(TrainConfig {
            learning_rate: self.typed("learning_rate", "a number", d.learning_rate)?,
            max_epochs: self.typed("max_epochs", "an unsigned integer", d.max_epochs)?,
            patience: self.typed("patience", "an unsigned integer", d.patience)?,
            rl_epochs: self.typed("rl_epochs", "an unsigned integer", d.rl_epochs)?,
            rl_inner_epochs: self.typed("rl_inner_epochs", "an unsigned integer", d.rl_inner_epochs)?,
            rl_warm_start: self.typed("rl_warm_start", "true or false", d.rl_warm_start)?,
            rl_learning_rate: self.typed("rl_learning_rate", "a number", d.rl_learning_rate)?,
            policy_hidden: (
                self.typed("policy_hidden1", "an unsigned integer", d.policy_hidden.0)?,
                self.typed("policy_hidden2", "an unsigned integer", d.policy_hidden.1)?,
            ),
            scheme: self.scheme()?,
            phrase_mode: self.phrase_mode()?,
            char_only: self.typed("char_only", "true or false", d.char_only)?,
            word_dim: self.typed("word_dim", "an unsigned integer", d.word_dim)?,
            char_dim: self.typed("char_dim", "an unsigned integer", d.char_dim)?,
            char_hidden: self.typed("char_hidden", "an unsigned integer", d.char_hidden)?,
            word_hidden: self.typed("word_hidden", "an unsigned integer", d.word_hidden)?,
            grad_clip: self.typed("grad_clip", "a number", d.grad_clip)?,
            input_dropout: self.typed("input_dropout", "a number", d.input_dropout)?,
            seed: self.seed()?,
        })
    }
}
