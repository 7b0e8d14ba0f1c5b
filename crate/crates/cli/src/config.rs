//! `schemafilter.toml`: one file holds every path, provider setting and hyperparameter.
//!
//! Relative paths resolve against the directory containing the config file.
//! Command-line flags may override the seed, provider kind and selection; the
//! only thing read from the environment is the provider auth token.

use std::path::{Path, PathBuf};

use schemafilter_core::encoder::RemoteConfig;
use schemafilter_core::eval::{Selection, DEFAULT_RECALL_FLOOR};
use schemafilter_core::reranker::{Optimizer, TrainingConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Hash,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaFormatName {
    /// A directory of one-database JSON files, or a single such file.
    #[default]
    Native,
    /// A Spider-style `tables.json` manifest.
    Spider,
}

/// Where `enrich` gets keys for tables that declare none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeySource {
    None,
    #[default]
    Heuristic,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub schemas: PathBuf,
    pub schema_format: SchemaFormatName,
    /// Directory of `<db_id>.tsv` value dumps.
    pub value_dumps: Option<PathBuf>,
    /// Directory of `<db_id>.json` key-prediction files; these override `enrich.keys`.
    pub key_predictions: Option<PathBuf>,
    pub artifacts: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            schemas: "schemas".into(),
            schema_format: SchemaFormatName::Native,
            value_dumps: None,
            key_predictions: None,
            artifacts: "artifacts".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: String,
    pub key_endpoint: Option<String>,
    pub model_hint: String,
    pub dim: usize,
    pub max_batch: usize,
    pub timeout_ms: u64,
    pub retries: u32,
    /// Retrieved sample values per column context.
    pub sample_values: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Hash,
            endpoint: String::new(),
            key_endpoint: None,
            model_hint: String::new(),
            dim: 256,
            max_batch: 32,
            timeout_ms: 30_000,
            retries: 2,
            sample_values: 2,
        }
    }
}

impl ProviderConfig {
    pub fn remote_config(&self) -> RemoteConfig {
        RemoteConfig {
            endpoint: self.endpoint.clone(),
            key_endpoint: self.key_endpoint.clone(),
            model_hint: self.model_hint.clone(),
            dim: self.dim,
            max_batch: self.max_batch,
            timeout_ms: self.timeout_ms,
            retries: self.retries,
            ..RemoteConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerName {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RerankerConfig {
    pub layers: usize,
    pub hidden: usize,
    /// Attention key width; defaults to `hidden`.
    pub key_dim: Option<usize>,
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    pub optimizer: OptimizerName,
    pub seed: u64,
}

impl Default for RerankerConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            hidden: 256,
            key_dim: None,
            margin: 1.0,
            learning_rate: 5e-4,
            epochs: 5,
            batch_size: 8,
            negatives_per_positive: 7,
            optimizer: OptimizerName::Adam,
            seed: 0,
        }
    }
}

impl RerankerConfig {
    pub fn training_config(&self) -> TrainingConfig {
        TrainingConfig {
            margin: self.margin,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            negatives_per_positive: self.negatives_per_positive,
            seed: self.seed,
            layers: self.layers,
            hidden: self.hidden,
            key_dim: self.key_dim,
            optimizer: match self.optimizer {
                OptimizerName::Sgd => Optimizer::Sgd,
                OptimizerName::Adam => Optimizer::adam(),
            },
            ..TrainingConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub mode: Selection,
    pub steiner: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { mode: Selection::TopPercent(0.2), steiner: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnrichConfig {
    pub keys: KeySource,
}

impl Default for EnrichConfig {
    fn default() -> Self {
        Self { keys: KeySource::Heuristic }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub recall_floor: f64,
    /// Points in the threshold sweep written by `eval`.
    pub threshold_points: usize,
    pub paths: Paths,
    pub provider: ProviderConfig,
    pub reranker: RerankerConfig,
    pub selection: SelectionConfig,
    pub enrich: EnrichConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            recall_floor: DEFAULT_RECALL_FLOOR,
            threshold_points: 101,
            paths: Paths::default(),
            provider: ProviderConfig::default(),
            reranker: RerankerConfig::default(),
            selection: SelectionConfig::default(),
            enrich: EnrichConfig::default(),
        }
    }
}

fn range(ok: bool, what: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Usage(format!("config: {what}")))
    }
}

impl EngineConfig {
    /// Parses a config file; relative paths are anchored at its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        config.anchor(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config always serializes")
    }

    /// Makes relative paths relative to `base`.
    pub fn anchor(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.schemas);
        fix(&mut self.paths.artifacts);
        self.paths.value_dumps.as_mut().map(fix);
        self.paths.key_predictions.as_mut().map(fix);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = &self.provider;
        range(p.dim >= 1 && p.dim <= 65_536, "provider.dim must be in 1..=65536")?;
        range(p.max_batch >= 1, "provider.max_batch must be at least 1")?;
        range(p.timeout_ms >= 1, "provider.timeout_ms must be positive")?;
        range(p.sample_values <= 64, "provider.sample_values must be at most 64")?;
        if p.kind == ProviderKind::Remote {
            range(!p.endpoint.is_empty(), "provider.endpoint is required for the remote provider")?;
        }
        let r = &self.reranker;
        range(r.layers <= 8, "reranker.layers must be in 0..=8")?;
        range(r.hidden >= 1 && r.hidden <= 4096, "reranker.hidden must be in 1..=4096")?;
        range(r.key_dim.is_none_or(|k| (1..=4096).contains(&k)), "reranker.key_dim must be in 1..=4096")?;
        range(r.margin > 0.0 && r.margin.is_finite(), "reranker.margin must be positive")?;
        range(r.learning_rate > 0.0 && r.learning_rate <= 1.0, "reranker.learning_rate must be in (0, 1]")?;
        range(r.batch_size >= 1, "reranker.batch_size must be at least 1")?;
        range(r.negatives_per_positive >= 1, "reranker.negatives_per_positive must be at least 1")?;
        range(r.epochs <= 100_000, "reranker.epochs must be at most 100000")?;
        range(self.recall_floor > 0.0 && self.recall_floor <= 1.0, "recall_floor must be in (0, 1]")?;
        range(self.threshold_points >= 2, "threshold_points must be at least 2")?;
        self.selection.mode.validate().map_err(|e| CliError::Usage(format!("config: selection.mode: {e}")))?;
        if self.enrich.keys == KeySource::Remote {
            range(
                p.key_endpoint.is_some() || !p.endpoint.is_empty(),
                "enrich.keys = \"remote\" needs provider.key_endpoint or provider.endpoint",
            )?;
        }
        Ok(())
    }

    pub fn graph_dir(&self) -> PathBuf {
        self.paths.artifacts.join("graph")
    }

    pub fn index_dir(&self) -> PathBuf {
        self.paths.artifacts.join("index")
    }

    pub fn weights_dir(&self) -> PathBuf {
        self.paths.artifacts.join("weights")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.paths.artifacts.join("reports")
    }

    pub fn weights_path(&self) -> PathBuf {
        self.weights_dir().join("reranker.bin")
    }
}
