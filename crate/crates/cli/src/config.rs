//! Experiment configuration files.
//!
//! A config is a TOML document. Unknown keys anywhere are rejected. Every
//! key except `name` and `[data]` has a default:
//!
//! | key                    | default        |
//! |------------------------|----------------|
//! | `output_dir`           | `"out"`        |
//! | `rounds`               | `200`          |
//! | `participation_rate`   | `0.1`          |
//! | `server_lr`            | `client.local_lr` |
//! | `run_seed`             | `0`            |
//! | `eval_every`           | `1`            |
//! | `wall_clock`           | `false`        |
//! | `save_partition`       | `false`        |
//! | `strategy.kind`        | `"feddpc"`     |
//! | `strategy.lambda`      | `1.0`          |
//! | `strategy.eps`         | `1e-12`        |
//! | `client.local_lr`      | `0.1`          |
//! | `client.batch_size`    | `32`           |
//! | `client.local_epochs`  | `1`            |
//! | `model.kind`           | `"logreg"`     |
//! | `model.hidden`         | `32` (mlp only)|
//! | `model.init_seed`      | `run_seed`     |
//! | `partition.clients`    | `100`          |
//! | `partition.alpha`      | `0.2`          |
//! | `partition.seed`       | `run_seed`     |
//!
//! `[data]` is either `source = "synthetic"` (with `n_train`, `n_test`,
//! `n_features`, `n_classes`, `class_sep`, `seed`, all defaulted) or
//! `source = "idx"` with the four file paths.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use feddpc_core::{
    load_idx, synth_classification, ClientConfig, Dataset, ModelKind, ModelSpec, PartitionSpec,
    RunConfig, Strategy, StrategyKind, DEFAULT_EPS,
};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("--set {arg}: {message}")]
    Override { arg: String, message: String },
    #[error("{path}: invalid configuration: {message}")]
    Invalid { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub name: String,
    #[serde(default = "defaults::output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "defaults::rounds")]
    pub rounds: usize,
    #[serde(default = "defaults::participation_rate")]
    pub participation_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub server_lr: Option<f64>,
    #[serde(default)]
    pub run_seed: u64,
    #[serde(default = "defaults::one")]
    pub eval_every: usize,
    #[serde(default)]
    pub wall_clock: bool,
    #[serde(default)]
    pub save_partition: bool,
    #[serde(default)]
    pub strategy: StrategySection,
    #[serde(default)]
    pub client: ClientSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub partition: PartitionSection,
    pub data: DataSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySection {
    #[serde(default = "defaults::strategy_kind")]
    pub kind: StrategyKind,
    #[serde(default = "defaults::lambda")]
    pub lambda: f64,
    #[serde(default = "defaults::eps")]
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientSection {
    #[serde(default = "defaults::local_lr")]
    pub local_lr: f64,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::one")]
    pub local_epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "defaults::model_kind")]
    pub kind: ModelKind,
    #[serde(default = "defaults::hidden")]
    pub hidden: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    #[serde(default = "defaults::clients")]
    pub clients: usize,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSection {
    Synthetic {
        #[serde(default = "defaults::n_train")]
        n_train: usize,
        #[serde(default = "defaults::n_test")]
        n_test: usize,
        #[serde(default = "defaults::n_features")]
        n_features: usize,
        #[serde(default = "defaults::n_classes")]
        n_classes: usize,
        #[serde(default = "defaults::class_sep")]
        class_sep: f64,
        #[serde(default)]
        seed: u64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

mod defaults {
    use super::*;

    pub fn output_dir() -> PathBuf {
        PathBuf::from("out")
    }
    pub fn rounds() -> usize {
        200
    }
    pub fn participation_rate() -> f64 {
        0.1
    }
    pub fn one() -> usize {
        1
    }
    pub fn strategy_kind() -> StrategyKind {
        StrategyKind::FedDpc
    }
    pub fn lambda() -> f64 {
        1.0
    }
    pub fn eps() -> f64 {
        DEFAULT_EPS
    }
    pub fn local_lr() -> f64 {
        ClientConfig::default().local_lr
    }
    pub fn batch_size() -> usize {
        ClientConfig::default().batch_size
    }
    pub fn model_kind() -> ModelKind {
        ModelKind::Logreg
    }
    pub fn hidden() -> usize {
        32
    }
    pub fn clients() -> usize {
        100
    }
    pub fn alpha() -> f64 {
        0.2
    }
    pub fn n_train() -> usize {
        5000
    }
    pub fn n_test() -> usize {
        1000
    }
    pub fn n_features() -> usize {
        20
    }
    pub fn n_classes() -> usize {
        10
    }
    pub fn class_sep() -> f64 {
        1.0
    }
}

macro_rules! impl_default_via_serde {
    ($($ty:ty),*) => {$(
        impl Default for $ty {
            fn default() -> Self {
                Value::Table(Table::new()).try_into().expect("all fields defaulted")
            }
        }
    )*};
}
impl_default_via_serde!(StrategySection, ClientSection, ModelSection, PartitionSection);

impl ConfigFile {
    /// Reads a config and applies `key.path=value` overrides in order.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(path, &text, overrides)
    }

    pub fn parse(path: &Path, text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let parse_err = |e: toml::de::Error| ConfigError::Parse {
            path: path.to_owned(),
            message: e.to_string(),
        };
        // parse the file on its own first so errors carry line numbers
        let mut cfg: Self = toml::from_str(text).map_err(parse_err)?;
        if !overrides.is_empty() {
            let mut table: Table = text.parse().map_err(parse_err)?;
            for arg in overrides {
                apply_override(&mut table, arg)?;
            }
            cfg = Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Override {
                arg: overrides.join(" "),
                message: e.message().to_owned(),
            })?;
        }
        cfg.resolve();
        cfg.run_config_unchecked()
            .validate()
            .map_err(|e| ConfigError::Invalid {
                path: path.to_owned(),
                message: e.to_string(),
            })?;
        Ok(cfg)
    }

    /// Fills every key whose default depends on another key.
    fn resolve(&mut self) {
        self.server_lr.get_or_insert(self.client.local_lr);
        self.model.init_seed.get_or_insert(self.run_seed);
        self.partition.seed.get_or_insert(self.run_seed);
    }

    /// The fully defaulted config as TOML.
    pub fn to_toml(&self) -> String {
        let mut resolved = self.clone();
        resolved.resolve();
        toml::to_string(&resolved).expect("config serializes")
    }

    fn run_config_unchecked(&self) -> RunConfig {
        let (n_features, n_classes) = match &self.data {
            DataSection::Synthetic { n_features, n_classes, .. } => (*n_features, *n_classes),
            // real shapes are only known after loading
            DataSection::Idx { .. } => (1, 2),
        };
        self.run_config(n_features, n_classes)
    }

    /// Run configuration for a dataset with the given shape.
    pub fn run_config(&self, n_features: usize, n_classes: usize) -> RunConfig {
        let seed = |s: Option<u64>| s.unwrap_or(self.run_seed);
        let model = match self.model.kind {
            ModelKind::Logreg => ModelSpec::logreg(n_features, n_classes, seed(self.model.init_seed)),
            ModelKind::Mlp => ModelSpec::mlp(n_features, self.model.hidden, n_classes, seed(self.model.init_seed)),
        };
        RunConfig {
            participation_rate: self.participation_rate,
            rounds: self.rounds,
            strategy: Strategy {
                kind: self.strategy.kind,
                lambda: self.strategy.lambda,
                eps: self.strategy.eps,
            },
            client: ClientConfig {
                local_lr: self.client.local_lr,
                batch_size: self.client.batch_size,
                local_epochs: self.client.local_epochs,
            },
            server_lr: self.server_lr.unwrap_or(self.client.local_lr),
            model,
            partition: PartitionSpec {
                k: self.partition.clients,
                alpha: self.partition.alpha,
                seed: seed(self.partition.seed),
            },
            run_seed: self.run_seed,
            eval_every: self.eval_every,
        }
    }

    /// Directory this experiment's artifacts go to.
    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.name)
    }

    /// Loads or generates the train and test sets.
    pub fn datasets(&self) -> feddpc_core::Result<(Dataset, Dataset)> {
        match &self.data {
            DataSection::Synthetic { n_train, n_test, n_features, n_classes, class_sep, seed } => {
                let all = synth_classification(n_train + n_test, *n_features, *n_classes, *class_sep, *seed)?;
                all.split_at(*n_train)
            }
            DataSection::Idx { train_images, train_labels, test_images, test_labels } => {
                let train = load_idx(train_images, train_labels)?;
                let test = load_idx(test_images, test_labels)?;
                Ok((train, test))
            }
        }
    }

    /// Keys that must agree for runs to be comparable, flattened to dotted
    /// paths in `FAIRNESS_KEYS` order.
    pub fn fairness_keys(&self) -> Vec<(String, String)> {
        let mut resolved = self.clone();
        resolved.resolve();
        let table = Table::try_from(&resolved).expect("config serializes");
        let mut out = Vec::new();
        for key in FAIRNESS_KEYS {
            if let Some(v) = table.get(*key) {
                flatten(key, v, &mut out);
            }
        }
        out
    }
}

/// Settings shared by every run in a comparison. Strategy and step sizes
/// are what is being compared, so they may differ.
const FAIRNESS_KEYS: &[&str] = &["run_seed", "rounds", "participation_rate", "eval_every", "data", "partition", "model"];

fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, String)>) {
    match value {
        Value::Table(t) => {
            for (k, v) in t {
                flatten(&format!("{prefix}.{k}"), v, out);
            }
        }
        other => out.push((prefix.to_owned(), other.to_string())),
    }
}

/// First fairness key on which two configs differ.
pub fn fairness_mismatch(a: &ConfigFile, b: &ConfigFile) -> Option<String> {
    let (ka, kb) = (a.fairness_keys(), b.fairness_keys());
    let (ma, mb): (BTreeMap<_, _>, BTreeMap<_, _>) = (ka.iter().cloned().collect(), kb.iter().cloned().collect());
    ka.iter()
        .chain(&kb)
        .map(|(k, _)| k)
        .find(|k| ma.get(*k) != mb.get(*k))
        .cloned()
}

fn apply_override(table: &mut Table, arg: &str) -> Result<(), ConfigError> {
    let err = |message: String| ConfigError::Override {
        arg: arg.to_owned(),
        message,
    };
    let (key, raw) = arg
        .split_once('=')
        .ok_or_else(|| err("expected key.path=value".into()))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(err(format!("malformed key `{key}`")));
    }
    // bare words that are not TOML literals are taken as strings
    let value = format!("v = {}", raw.trim())
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.trim().to_owned()));

    let (last, parents) = path.split_last().expect("non-empty path");
    let mut node = table;
    for part in parents {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| err(format!("`{part}` is not a table")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}
