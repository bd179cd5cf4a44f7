//! The single JSON configuration document.
//!
//! Every field has a default, so `{}` is a valid configuration that scores
//! with stub embedding and NLI models. Relative paths inside the document are
//! resolved against the directory that contains it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uqkit_core::blackbox::{DEFAULT_ALPHA, DEFAULT_EIG_THRESHOLD, DEFAULT_TOP_FRACTION};
use uqkit_core::calibration::{DEFAULT_MIN_AGREEMENT, DEFAULT_QUANTILE, DEFAULT_SUBSAMPLE_RATE};
use uqkit_core::greybox::AnswerExtraction;
use uqkit_core::model::classify_task_type;
use uqkit_core::provider::StubReply;
use uqkit_core::{MetricId, OutputSpec, SamplingParams, TaskType};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub providers: Providers,
    #[serde(default)]
    pub plan: PlanConfig,
    #[serde(default)]
    pub sampling: SamplingParams,
    #[serde(default = "yes")]
    pub want_logprobs: bool,
    #[serde(default)]
    pub task_type: Option<TaskType>,
    /// Used to classify the task when `task_type` is absent.
    #[serde(default)]
    pub output_spec: Option<OutputSpec>,
    #[serde(default)]
    pub metrics: Vec<MetricId>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default = "default_extraction")]
    pub extraction: AnswerExtraction,
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(default)]
    pub cost: CostConfig,
    /// Response cache directory; no caching when absent.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// Worker threads used by `sample`.
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
}

fn yes() -> bool {
    true
}

fn default_extraction() -> AnswerExtraction {
    AnswerExtraction::default()
}

fn default_concurrency() -> usize {
    4
}

impl Default for Config {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Providers {
    #[serde(default)]
    pub chat: Option<ChatConfig>,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    #[serde(default)]
    pub nli: NliConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChatConfig {
    /// Token-by-token generation from a logit-table file.
    Simulated {
        logit_table: PathBuf,
        #[serde(default = "default_sim_model")]
        model_id: String,
        #[serde(default = "default_max_tokens")]
        max_tokens: usize,
    },
    /// Fixed replies keyed by the exact prompt.
    Stub {
        #[serde(default = "default_stub_model")]
        model_id: String,
        replies: BTreeMap<String, StubReply>,
    },
    Http(HttpConfig),
}

fn default_sim_model() -> String {
    "simulated".into()
}

fn default_stub_model() -> String {
    "stub".into()
}

fn default_max_tokens() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbedderConfig {
    Stub {
        #[serde(default = "default_dim")]
        dim: usize,
    },
    Http(HttpConfig),
}

fn default_dim() -> usize {
    64
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig::Stub { dim: default_dim() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NliConfig {
    #[default]
    Stub,
    Http(HttpConfig),
}

/// Connection settings for one remote service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_parallel")]
    pub max_parallel: usize,
    /// Environment variable holding the bearer token. A missing variable
    /// means no `Authorization` header.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
}

fn default_timeout() -> u64 {
    30
}

fn default_retries() -> u32 {
    3
}

fn default_backoff() -> u64 {
    250
}

fn default_parallel() -> usize {
    4
}

fn default_key_env() -> String {
    "UQKIT_API_KEY".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub k: usize,
    pub repeats: u32,
    pub seed: u64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            k: 5,
            repeats: 6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub alpha: f64,
    pub quantile: f64,
    pub min_agreement: usize,
    pub top_fraction: f64,
    pub eig_threshold: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            quantile: DEFAULT_QUANTILE,
            min_agreement: DEFAULT_MIN_AGREEMENT,
            top_fraction: DEFAULT_TOP_FRACTION,
            eig_threshold: DEFAULT_EIG_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub subsample_rate: f64,
    pub seed: u64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            subsample_rate: DEFAULT_SUBSAMPLE_RATE,
            seed: 0,
        }
    }
}

/// Inputs to the cost report. Without `baseline_tokens` the baseline is one
/// average-length response for each of `corpus_items` items, and without
/// `corpus_items` the sampled items are taken to be a
/// `validation.subsample_rate` share of the corpus.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub corpus_items: Option<u64>,
    pub baseline_tokens: Option<u64>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: Config = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        config.check()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(dir) = self.cache_dir.as_mut() {
            join(dir);
        }
        if let Some(ChatConfig::Simulated { logit_table, .. }) = self.providers.chat.as_mut() {
            join(logit_table);
        }
    }

    fn check(&self) -> Result<(), CliError> {
        if self.concurrency == 0 {
            return Err(CliError::Usage("concurrency must be at least 1".into()));
        }
        let https = [
            match &self.providers.chat {
                Some(ChatConfig::Http(h)) => Some(h),
                _ => None,
            },
            match &self.providers.embedder {
                EmbedderConfig::Http(h) => Some(h),
                _ => None,
            },
            match &self.providers.nli {
                NliConfig::Http(h) => Some(h),
                _ => None,
            },
        ];
        if https.into_iter().flatten().any(|h| h.max_parallel == 0) {
            return Err(CliError::Usage("max_parallel must be at least 1".into()));
        }
        if let EmbedderConfig::Stub { dim: 0 } = self.providers.embedder {
            return Err(CliError::Usage("stub embedder dimension must be positive".into()));
        }
        Ok(())
    }

    /// `task_type` if set, otherwise the classification of `output_spec`.
    pub fn resolved_task_type(&self) -> Result<TaskType, CliError> {
        match (&self.task_type, &self.output_spec) {
            (Some(t), _) => Ok(*t),
            (None, Some(spec)) => classify_task_type(spec).map_err(|e| CliError::Usage(e.to_string())),
            (None, None) => Err(CliError::Usage(
                "config must set task_type or output_spec".into(),
            )),
        }
    }
}
